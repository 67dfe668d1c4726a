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

#include "qunlearn/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "qunlearn/detail/bytes.hpp"
#include "qunlearn/snapshot_io.hpp"

namespace qunlearn {

std::string to_string(RangeMode mode) {
  return mode == RangeMode::kGlobal ? "global" : "per_tensor";
}

RangeMode parse_range_mode(std::string_view text) {
  if (text == "global") return RangeMode::kGlobal;
  if (text == "per_tensor") return RangeMode::kPerTensor;
  throw ValidationError("unknown range_mode '" + std::string(text) + "'");
}

void QuantConfig::validate() const {
  if (bits < 2 || bits > 16) {
    throw ValidationError("bits must be in [2, 16], got " +
                          std::to_string(bits));
  }
}

namespace {

void check_grid_bits(int bits) {
  if (bits < 1 || bits > 16) {
    throw ValidationError("grid bits must be in [1, 16], got " +
                          std::to_string(bits));
  }
}

}  // namespace

QuantGrid make_grid(double w_min, double w_max, int bits,
                    std::string_view scope) {
  check_grid_bits(bits);
  if (!std::isfinite(w_min) || !std::isfinite(w_max)) {
    throw NumericError("non-finite grid range");
  }
  if (!(w_max > w_min)) {
    throw DegenerateRangeError(
        "degenerate quantization range [" + std::to_string(w_min) + ", " +
            std::to_string(w_max) + "]" +
            (scope.empty() ? "" : " in '" + std::string(scope) + "'"),
        std::string(scope));
  }
  QuantGrid g;
  g.w_min = w_min;
  g.w_max = w_max;
  g.bits = bits;
  g.delta = (w_max - w_min) / static_cast<double>(g.levels());
  return g;
}

QuantGrid make_grid(std::span<const double> values, int bits, bool symmetric,
                    std::string_view scope) {
  if (values.empty()) throw ValidationError("make_grid needs at least one value");
  auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  double w_min = *lo;
  double w_max = *hi;
  if (symmetric) {
    w_max = std::max(std::abs(w_min), std::abs(w_max));
    w_min = -w_max;
  }
  return make_grid(w_min, w_max, bits, scope);
}

QuantGrid identity_grid(double value, int bits) {
  check_grid_bits(bits);
  return QuantGrid{value, value, 1.0, bits};
}

std::uint32_t bucket_index(double w, const QuantGrid& g) noexcept {
  if (g.identity()) return 0;
  const double c = std::clamp(w, g.w_min, g.w_max);
  const double f = std::floor((c - g.w_min) / g.delta);
  const double top = static_cast<double>(g.levels() - 1);
  return static_cast<std::uint32_t>(std::clamp(f, 0.0, top));
}

double dequantize_value(std::uint32_t index, const QuantGrid& g) {
  if (index >= g.levels()) {
    throw ValidationError("bucket index " + std::to_string(index) +
                          " out of range for " + std::to_string(g.bits) +
                          " bits");
  }
  if (g.identity()) {
    if (index != 0) throw ValidationError("identity grid has only bucket 0");
    return g.w_min;
  }
  return (static_cast<double>(index) + 0.5) * g.delta + g.w_min;
}

bool operator==(const QuantizedSnapshot& a, const QuantizedSnapshot& b) {
  if (a.source != b.source || a.config.bits != b.config.bits ||
      a.config.range_mode != b.config.range_mode ||
      a.config.symmetric != b.config.symmetric ||
      a.tensors.size() != b.tensors.size()) {
    return false;
  }
  for (std::size_t i = 0; i < a.tensors.size(); ++i) {
    const auto& x = a.tensors[i];
    const auto& y = b.tensors[i];
    if (x.name != y.name || x.shape != y.shape || !(x.grid == y.grid) ||
        x.indices != y.indices) {
      return false;
    }
  }
  return true;
}

namespace {

QuantGrid grid_or_identity(std::span<const double> values,
                           const QuantConfig& cfg, std::string_view scope) {
  try {
    return make_grid(values, cfg.bits, cfg.symmetric, scope);
  } catch (const DegenerateRangeError&) {
    if (!cfg.identity_on_degenerate) throw;
    return identity_grid(values.front(), cfg.bits);
  }
}

std::span<const double> values_of(const Tensor& t) {
  return {t.data().data(), t.size()};
}

}  // namespace

std::vector<QuantGrid> grids_for(const WeightSnapshot& ref,
                                 const QuantConfig& cfg) {
  cfg.validate();
  if (ref.empty()) throw ValidationError("cannot quantize an empty snapshot");
  std::vector<QuantGrid> grids;
  if (cfg.range_mode == RangeMode::kGlobal) {
    std::vector<double> all;
    all.reserve(ref.parameter_count());
    for (const auto& e : ref) {
      all.insert(all.end(), e.tensor.data().begin(), e.tensor.data().end());
    }
    grids.assign(ref.size(), grid_or_identity(all, cfg, "<global>"));
  } else {
    for (const auto& e : ref) {
      grids.push_back(grid_or_identity(values_of(e.tensor), cfg, e.name));
    }
  }
  return grids;
}

QuantizedSnapshot quantize_with_grids(const WeightSnapshot& s,
                                      std::span<const QuantGrid> grids,
                                      const QuantConfig& cfg,
                                      std::string source) {
  if (grids.size() != s.size()) {
    throw AlignmentError("grid count " + std::to_string(grids.size()) +
                         " does not match tensor count " +
                         std::to_string(s.size()));
  }
  QuantizedSnapshot q;
  q.source = std::move(source);
  q.config = cfg;
  q.tensors.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto& [name, t] = s[i];
    QuantizedTensor qt{name, t.shape(), grids[i], {}};
    qt.indices.resize(t.size());
    for (std::size_t k = 0; k < t.size(); ++k) {
      qt.indices[k] = static_cast<std::uint16_t>(bucket_index(t[k], grids[i]));
    }
    q.tensors.push_back(std::move(qt));
  }
  return q;
}

QuantizedSnapshot quantize_snapshot(const WeightSnapshot& s,
                                    const QuantConfig& cfg,
                                    std::string source) {
  auto grids = grids_for(s, cfg);
  return quantize_with_grids(s, grids, cfg, std::move(source));
}

WeightSnapshot dequantize_snapshot(const QuantizedSnapshot& q) {
  WeightSnapshot s;
  for (const auto& qt : q.tensors) {
    Tensor t(qt.shape);
    if (qt.indices.size() != t.size()) {
      throw ValidationError("index count mismatch in '" + qt.name + "'");
    }
    for (std::size_t k = 0; k < t.size(); ++k) {
      t[k] = dequantize_value(qt.indices[k], qt.grid);
    }
    s.insert(qt.name, std::move(t));
  }
  return s;
}

Model dequantize_model(const Model& m, const QuantConfig& cfg,
                       std::span<const QuantGrid> grids) {
  WeightSnapshot out =
      dequantize_snapshot(quantize_with_grids(m.params(), grids, cfg));
  if (cfg.exempt_embeddings) out.at(Model::kEmbed) = m.params().at(Model::kEmbed);
  return Model(m.config(), std::move(out));
}

Model dequantize_model(const Model& m, const QuantConfig& cfg) {
  auto grids = grids_for(m.params(), cfg);
  return dequantize_model(m, cfg, grids);
}

std::string encode_quantized(const QuantizedSnapshot& q) {
  q.config.validate();
  if (q.source.size() > std::numeric_limits<std::uint16_t>::max()) {
    throw ValidationError("source label longer than 65535 bytes");
  }
  detail::ByteWriter w;
  w.raw(kQuantMagic);
  w.u32(kQuantVersion);
  w.u32(static_cast<std::uint32_t>(q.tensors.size()));
  w.u8(static_cast<std::uint8_t>(q.config.bits));
  w.u8(q.config.range_mode == RangeMode::kGlobal ? 0 : 1);
  w.u8(q.config.symmetric ? 1 : 0);
  w.u16(static_cast<std::uint16_t>(q.source.size()));
  w.raw(q.source);
  for (const auto& t : q.tensors) {
    validate_tensor_name(t.name);
    w.u16(static_cast<std::uint16_t>(t.name.size()));
    w.raw(t.name);
    w.u8(static_cast<std::uint8_t>(t.shape.size()));
    for (std::size_t d : t.shape) w.u32(static_cast<std::uint32_t>(d));
    w.f64(t.grid.w_min);
    w.f64(t.grid.w_max);
    w.u8(static_cast<std::uint8_t>(t.grid.bits));
    for (std::uint16_t ix : t.indices) w.u16(ix);
  }
  return w.take();
}

QuantizedSnapshot decode_quantized(std::string_view bytes) {
  detail::ByteReader r(bytes);
  if (r.raw(4) != kQuantMagic) throw ParseError("bad QSNQ magic", 0);
  std::uint32_t version = r.u32();
  if (version != kQuantVersion) throw UnsupportedVersionError(version, 4);
  std::uint32_t count = r.u32();
  QuantizedSnapshot q;
  std::size_t at = r.offset();
  q.config.bits = r.u8();
  std::uint8_t mode = r.u8();
  if (mode > 1) throw ParseError("unknown range mode", at + 1);
  q.config.range_mode = mode == 0 ? RangeMode::kGlobal : RangeMode::kPerTensor;
  q.config.symmetric = r.u8() != 0;
  try {
    q.config.validate();
  } catch (const ValidationError& e) {
    throw ParseError(e.what(), at);
  }
  q.source = std::string(r.raw(r.u16()));
  for (std::uint32_t k = 0; k < count; ++k) {
    at = r.offset();
    QuantizedTensor t;
    t.name = std::string(r.raw(r.u16()));
    try {
      validate_tensor_name(t.name);
    } catch (const ValidationError& e) {
      throw ParseError(e.what(), at);
    }
    for (const auto& prev : q.tensors) {
      if (prev.name == t.name) throw ParseError("duplicate tensor '" + t.name + "'", at);
    }
    t.shape.resize(r.u8());
    for (auto& d : t.shape) {
      std::size_t dim_at = r.offset();
      d = r.u32();
      if (d == 0) throw ParseError("zero dimension in '" + t.name + "'", dim_at);
    }
    std::size_t grid_at = r.offset();
    double w_min = r.f64();
    double w_max = r.f64();
    int bits = r.u8();
    try {
      t.grid = w_min == w_max ? identity_grid(w_min, bits)
                              : make_grid(w_min, w_max, bits, t.name);
    } catch (const std::runtime_error& e) {
      throw ParseError(e.what(), grid_at);
    }
    std::size_t n = shape_size(t.shape);
    if ((bytes.size() - r.offset()) / 2 < n) {
      throw ParseError("truncated indices for '" + t.name + "'", r.offset());
    }
    t.indices.resize(n);
    for (auto& ix : t.indices) {
      std::size_t ix_at = r.offset();
      ix = r.u16();
      if (ix >= t.grid.levels() || (t.grid.identity() && ix != 0)) {
        throw ParseError("bucket index out of range in '" + t.name + "'", ix_at);
      }
    }
    q.tensors.push_back(std::move(t));
  }
  if (!r.at_end()) throw ParseError("trailing bytes after last tensor", r.offset());
  return q;
}

void save_quantized(const QuantizedSnapshot& q, const std::string& path) {
  detail::write_file(path, encode_quantized(q));
}

QuantizedSnapshot load_quantized(const std::string& path) {
  return decode_quantized(detail::read_file(path));
}

}  // namespace qunlearn
