// Copyright 2026 The qunlearn Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qunlearn/quantizer.hpp"
#include "qunlearn/tensor.hpp"

namespace qunlearn {

struct DeltaStats {
  double mean_abs = 0.0;
  double max_abs = 0.0;
  double exact_match_fraction = 1.0;
  /// (q, value) for q in {0.5, 0.9, 0.99}, nearest-rank.
  std::vector<std::pair<double, double>> quantiles;
  std::size_t count = 0;

  double quantile(double q) const;
};

/// Statistics of |un_i - ref_i| over every aligned element.
DeltaStats delta_stats(const WeightSnapshot& ref, const WeightSnapshot& un);

/// Nearest-rank quantile: the ceil(q * n)-th smallest value (1-based).
double nearest_rank(std::span<const double> sorted, double q);

struct TensorOverlap {
  std::string name;
  std::size_t size = 0;
  std::size_t matches = 0;
  double overlap = 1.0;
  double delta = 0.0;
  int layer = -1;
};

struct LayerOverlap {
  int layer = -1;
  std::size_t size = 0;
  double overlap = 1.0;
};

struct HistogramBin {
  double lower = 0.0;
  std::size_t count = 0;
};

struct OverlapReport {
  int bits = 0;
  RangeMode range_mode = RangeMode::kGlobal;
  /// Step of the grid built over all of ref (reported in either mode).
  double delta = 0.0;
  /// Element-pooled fraction of identical bucket indices.
  double global_overlap = 1.0;
  /// Unweighted mean of the per-tensor overlaps.
  double tensorwise_overlap = 1.0;
  std::vector<TensorOverlap> per_tensor;
  std::vector<LayerOverlap> per_layer;
  std::vector<HistogramBin> histogram;
  std::size_t total = 0;
  std::size_t hamming_count = 0;
  double hamming_fraction = 0.0;
};

inline constexpr double kDefaultHistogramBin = 0.05;

/// Overlap of bucket indices with grids built from `ref` and applied to both.
OverlapReport bucket_overlap(const WeightSnapshot& ref,
                             const WeightSnapshot& un, const QuantConfig& cfg);
/// Overlap under externally pinned grids (one per tensor, in order).
OverlapReport bucket_overlap(const WeightSnapshot& ref,
                             const WeightSnapshot& un, const QuantConfig& cfg,
                             std::span<const QuantGrid> grids);

std::vector<OverlapReport> bit_sweep(const WeightSnapshot& ref,
                                     const WeightSnapshot& un,
                                     std::span<const int> bits_list,
                                     const QuantConfig& base);

/// Per-tensor overlaps binned over [0, 1]: bins are [lo, lo + w) except the
/// last, which is closed.
std::vector<HistogramBin> overlap_histogram(const OverlapReport& report,
                                            double bin_width);

/// Rows: one per tensor, then one per layer (name "layer.<k>").
/// Columns: name,size,overlap,bits,delta,layer.
std::string overlap_csv(std::span<const OverlapReport> reports);
std::string overlap_json(std::span<const OverlapReport> reports,
                         const DeltaStats& stats);
std::string delta_stats_json(const DeltaStats& stats);

}  // namespace qunlearn
