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

#include "qunlearn/analytics.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <map>

#include "qunlearn/detail/format.hpp"

namespace qunlearn {

namespace {

constexpr double kQuantileLevels[] = {0.5, 0.9, 0.99};

}  // namespace

double nearest_rank(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw ValidationError("quantile of an empty set");
  if (!(q > 0.0 && q <= 1.0)) throw ValidationError("quantile level must be in (0, 1]");
  auto rank = static_cast<std::size_t>(
      std::ceil(q * static_cast<double>(sorted.size()) - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  return sorted[rank - 1];
}

double DeltaStats::quantile(double q) const {
  for (const auto& [level, value] : quantiles) {
    if (level == q) return value;
  }
  throw ValidationError("quantile " + detail::format_double(q) + " not recorded");
}

DeltaStats delta_stats(const WeightSnapshot& ref, const WeightSnapshot& un) {
  require_aligned(ref, un);
  std::vector<double> deltas;
  deltas.reserve(ref.parameter_count());
  std::size_t exact = 0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const auto& a = ref[i].tensor;
    const auto& b = un[i].tensor;
    for (std::size_t k = 0; k < a.size(); ++k) {
      if (a[k] == b[k]) ++exact;
      deltas.push_back(std::abs(b[k] - a[k]));
    }
  }
  DeltaStats s;
  s.count = deltas.size();
  if (deltas.empty()) {
    for (double q : kQuantileLevels) s.quantiles.emplace_back(q, 0.0);
    return s;
  }
  double sum = 0.0;
  for (double d : deltas) sum += d;
  std::sort(deltas.begin(), deltas.end());
  s.mean_abs = sum / static_cast<double>(s.count);
  s.max_abs = deltas.back();
  s.exact_match_fraction =
      static_cast<double>(exact) / static_cast<double>(s.count);
  for (double q : kQuantileLevels) {
    s.quantiles.emplace_back(q, nearest_rank(deltas, q));
  }
  return s;
}

OverlapReport bucket_overlap(const WeightSnapshot& ref,
                             const WeightSnapshot& un, const QuantConfig& cfg,
                             std::span<const QuantGrid> grids) {
  require_aligned(ref, un);
  if (ref.empty()) throw ValidationError("overlap of empty snapshots");
  if (grids.size() != ref.size()) {
    throw AlignmentError("grid count does not match tensor count");
  }
  OverlapReport r;
  r.bits = grids.front().bits;
  r.range_mode = cfg.range_mode;
  r.delta = grids.front().delta;
  if (std::any_of(grids.begin(), grids.end(),
                  [&](const QuantGrid& g) { return !(g == grids.front()); })) {
    QuantConfig global = cfg;
    global.range_mode = RangeMode::kGlobal;
    global.identity_on_degenerate = true;
    r.delta = grids_for(ref, global).front().delta;
  }
  std::map<int, std::pair<std::size_t, std::size_t>> layers;
  std::size_t matches = 0;
  double tensor_sum = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const auto& a = ref[i].tensor;
    const auto& b = un[i].tensor;
    TensorOverlap t{ref[i].name, a.size(), 0, 1.0, grids[i].delta,
                    layer_of(ref[i].name)};
    for (std::size_t k = 0; k < a.size(); ++k) {
      if (bucket_index(a[k], grids[i]) == bucket_index(b[k], grids[i])) {
        ++t.matches;
      }
    }
    t.overlap = static_cast<double>(t.matches) / static_cast<double>(t.size);
    matches += t.matches;
    r.total += t.size;
    tensor_sum += t.overlap;
    auto& [lsize, lmatch] = layers[t.layer];
    lsize += t.size;
    lmatch += t.matches;
    r.per_tensor.push_back(std::move(t));
  }
  for (const auto& [layer, sm] : layers) {
    r.per_layer.push_back(
        {layer, sm.first,
         static_cast<double>(sm.second) / static_cast<double>(sm.first)});
  }
  r.global_overlap = static_cast<double>(matches) / static_cast<double>(r.total);
  r.tensorwise_overlap = tensor_sum / static_cast<double>(r.per_tensor.size());
  r.hamming_count = r.total - matches;
  r.hamming_fraction = 1.0 - r.global_overlap;
  r.histogram = overlap_histogram(r, kDefaultHistogramBin);
  return r;
}

OverlapReport bucket_overlap(const WeightSnapshot& ref,
                             const WeightSnapshot& un, const QuantConfig& cfg) {
  require_aligned(ref, un);
  auto grids = grids_for(ref, cfg);
  return bucket_overlap(ref, un, cfg, grids);
}

std::vector<OverlapReport> bit_sweep(const WeightSnapshot& ref,
                                     const WeightSnapshot& un,
                                     std::span<const int> bits_list,
                                     const QuantConfig& base) {
  if (bits_list.empty()) throw ValidationError("bit sweep needs at least one width");
  std::vector<OverlapReport> out;
  for (int bits : bits_list) {
    QuantConfig cfg = base;
    cfg.bits = bits;
    out.push_back(bucket_overlap(ref, un, cfg));
  }
  return out;
}

std::vector<HistogramBin> overlap_histogram(const OverlapReport& report,
                                            double bin_width) {
  if (!(bin_width > 0.0 && bin_width <= 1.0)) {
    throw ValidationError("bin width must be in (0, 1]");
  }
  // A small slack keeps exact multiples such as 0.75 / 0.05 in their own bin.
  constexpr double kSlack = 1e-9;
  const auto bins = static_cast<std::size_t>(std::ceil(1.0 / bin_width - kSlack));
  std::vector<HistogramBin> h(bins);
  for (std::size_t i = 0; i < bins; ++i) {
    h[i].lower = static_cast<double>(i) * bin_width;
  }
  for (const auto& t : report.per_tensor) {
    auto i = static_cast<std::size_t>(
        std::max(0.0, std::floor(t.overlap / bin_width + kSlack)));
    h[std::min(i, bins - 1)].count += 1;
  }
  return h;
}

std::string overlap_csv(std::span<const OverlapReport> reports) {
  using detail::format_double;
  std::string out = "name,size,overlap,bits,delta,layer\n";
  for (const auto& r : reports) {
    for (const auto& t : r.per_tensor) {
      out += t.name + "," + std::to_string(t.size) + "," +
             format_double(t.overlap) + "," + std::to_string(r.bits) + "," +
             format_double(t.delta) + "," + std::to_string(t.layer) + "\n";
    }
    for (const auto& l : r.per_layer) {
      out += "layer." + std::to_string(l.layer) + "," +
             std::to_string(l.size) + "," + format_double(l.overlap) + "," +
             std::to_string(r.bits) + "," + format_double(r.delta) + "," +
             std::to_string(l.layer) + "\n";
    }
  }
  return out;
}

namespace {

nlohmann::ordered_json stats_to_json(const DeltaStats& s) {
  nlohmann::ordered_json j;
  j["count"] = s.count;
  j["mean_abs"] = s.mean_abs;
  j["max_abs"] = s.max_abs;
  j["exact_match_fraction"] = s.exact_match_fraction;
  nlohmann::ordered_json q = nlohmann::ordered_json::object();
  for (const auto& [level, value] : s.quantiles) {
    q[detail::format_double(level)] = value;
  }
  j["quantiles"] = q;
  return j;
}

}  // namespace

std::string delta_stats_json(const DeltaStats& stats) {
  return stats_to_json(stats).dump(2) + "\n";
}

std::string overlap_json(std::span<const OverlapReport> reports,
                         const DeltaStats& stats) {
  nlohmann::ordered_json j;
  j["delta_stats"] = stats_to_json(stats);
  auto arr = nlohmann::ordered_json::array();
  for (const auto& r : reports) {
    nlohmann::ordered_json o;
    o["bits"] = r.bits;
    o["range_mode"] = to_string(r.range_mode);
    o["delta"] = r.delta;
    o["global_overlap"] = r.global_overlap;
    o["tensorwise_overlap"] = r.tensorwise_overlap;
    o["hamming_fraction"] = r.hamming_fraction;
    o["hamming_count"] = r.hamming_count;
    o["total"] = r.total;
    auto tensors = nlohmann::ordered_json::array();
    for (const auto& t : r.per_tensor) {
      tensors.push_back({{"name", t.name},
                         {"size", t.size},
                         {"overlap", t.overlap},
                         {"delta", t.delta},
                         {"layer", t.layer}});
    }
    o["per_tensor"] = tensors;
    auto layers = nlohmann::ordered_json::array();
    for (const auto& l : r.per_layer) {
      layers.push_back(
          {{"layer", l.layer}, {"size", l.size}, {"overlap", l.overlap}});
    }
    o["per_layer"] = layers;
    auto hist = nlohmann::ordered_json::array();
    for (const auto& b : r.histogram) {
      hist.push_back({{"lower", b.lower}, {"count", b.count}});
    }
    o["histogram"] = hist;
    arr.push_back(o);
  }
  j["reports"] = arr;
  return j.dump(2) + "\n";
}

}  // namespace qunlearn
