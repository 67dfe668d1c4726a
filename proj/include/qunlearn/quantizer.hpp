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

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qunlearn/model.hpp"
#include "qunlearn/tensor.hpp"

namespace qunlearn {

enum class RangeMode { kGlobal, kPerTensor };

std::string to_string(RangeMode mode);
RangeMode parse_range_mode(std::string_view text);

struct QuantConfig {
  int bits = 4;
  RangeMode range_mode = RangeMode::kGlobal;
  /// w_max = -w_min = max|w| instead of the observed min/max.
  bool symmetric = false;
  /// Leave layer.0.embed at full precision in dequantized models.
  bool exempt_embeddings = false;
  /// Constant scopes get a one-bucket identity grid instead of an error.
  bool identity_on_degenerate = false;

  void validate() const;
};

/// Uniform grid with 2^bits buckets of width delta starting at w_min.
///
/// An identity grid (w_min == w_max, delta 1) maps everything to index 0 and
/// dequantizes back to w_min.
struct QuantGrid {
  double w_min = 0.0;
  double w_max = 1.0;
  double delta = 1.0;
  int bits = 1;

  bool identity() const noexcept { return w_min == w_max; }
  std::uint32_t levels() const noexcept { return std::uint32_t{1} << bits; }

  friend bool operator==(const QuantGrid&, const QuantGrid&) = default;
};

/// Grid spanning `values`. Throws DegenerateRangeError (carrying `scope`) when
/// the range is empty.
QuantGrid make_grid(std::span<const double> values, int bits,
                    bool symmetric = false, std::string_view scope = {});
QuantGrid make_grid(double w_min, double w_max, int bits,
                    std::string_view scope = {});
QuantGrid identity_grid(double value, int bits);

/// floor((clamp(w) - w_min) / delta), clamped to the top bucket.
std::uint32_t bucket_index(double w, const QuantGrid& g) noexcept;
/// Bucket center; throws ValidationError for an out-of-range index.
double dequantize_value(std::uint32_t index, const QuantGrid& g);

struct QuantizedTensor {
  std::string name;
  Shape shape;
  QuantGrid grid;
  std::vector<std::uint16_t> indices;
};

struct QuantizedSnapshot {
  std::string source;
  QuantConfig config;
  std::vector<QuantizedTensor> tensors;

  friend bool operator==(const QuantizedSnapshot& a,
                         const QuantizedSnapshot& b);
};

/// One grid per tensor of `ref` under `cfg`. In global mode every entry is
/// the same grid.
std::vector<QuantGrid> grids_for(const WeightSnapshot& ref,
                                 const QuantConfig& cfg);

QuantizedSnapshot quantize_snapshot(const WeightSnapshot& s,
                                    const QuantConfig& cfg,
                                    std::string source = {});
/// Quantizes with externally pinned grids (one per tensor, in order).
QuantizedSnapshot quantize_with_grids(const WeightSnapshot& s,
                                      std::span<const QuantGrid> grids,
                                      const QuantConfig& cfg,
                                      std::string source = {});

WeightSnapshot dequantize_snapshot(const QuantizedSnapshot& q);

/// Every parameter replaced by its bucket center; exempt tensors are copied.
Model dequantize_model(const Model& m, const QuantConfig& cfg);
/// Same, on grids built from `ref` rather than from m itself.
Model dequantize_model(const Model& m, const QuantConfig& cfg,
                       std::span<const QuantGrid> grids);

/// QSNQ layout (little-endian, no padding):
///
///   "QSNQ" | version u32 (=1) | count u32
///   | bits u8 | range_mode u8 | symmetric u8 | source_len u16 | source
///   per tensor: name_len u16 | name | ndim u8 | dims u32...
///               | w_min f64 | w_max f64 | N u8 | product(dims) u16 indices
inline constexpr std::string_view kQuantMagic = "QSNQ";
inline constexpr std::uint32_t kQuantVersion = 1;

std::string encode_quantized(const QuantizedSnapshot& q);
QuantizedSnapshot decode_quantized(std::string_view bytes);
void save_quantized(const QuantizedSnapshot& q, const std::string& path);
QuantizedSnapshot load_quantized(const std::string& path);

}  // namespace qunlearn
