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

#include <doctest.h>

#include <cmath>

#include "qunlearn/quantizer.hpp"
#include "qunlearn/snapshot_io.hpp"
#include "support.hpp"

using namespace qunlearn;

namespace {

// Largest k with w_min + k*delta <= w, scanning edges one by one.
std::uint32_t scan_index(double w, const QuantGrid& g) {
  std::uint32_t k = 0;
  for (std::uint32_t e = 1; e < g.levels(); ++e) {
    if (w >= g.w_min + static_cast<double>(e) * g.delta) k = e;
  }
  return k;
}

WeightSnapshot random_snapshot(Rng rng, double scale = 1.0) {
  WeightSnapshot s;
  s.insert("layer.0.a", gauss_init(rng, {7, 5}, scale));
  s.insert("layer.1.b", gauss_init(rng, {13}, 2.0 * scale));
  s.insert("layer.1.c", gauss_init(rng, {3, 2, 2}, 0.5 * scale));
  return s;
}

}  // namespace

TEST_CASE("step size arithmetic") {
  CHECK(make_grid(0.0, 16.0, 4).delta == 1.0);
  std::vector<double> v{0.0, 16.0, 3.0};
  CHECK(make_grid(v, 4).delta == 1.0);
  CHECK(make_grid(v, 4).levels() == 16);
}

TEST_CASE("step sizes of the reported 4.288-wide range") {
  // 4-bit bucket size 2.68e-1 and 8-bit 1.67e-2 for a range of width 4.288.
  QuantGrid g4 = make_grid(-2.144, 2.144, 4);
  QuantGrid g8 = make_grid(-2.144, 2.144, 8);
  CHECK(g4.delta == doctest::Approx(0.268).epsilon(1e-12));
  CHECK(g8.delta == doctest::Approx(0.016750).epsilon(1e-12));
  CHECK(std::abs(g8.delta - 1.67e-2) < 0.01e-2);
}

TEST_CASE("degenerate range") {
  CHECK_THROWS_AS(make_grid(1.0, 1.0, 4), DegenerateRangeError);
  std::vector<double> v{2.0, 2.0};
  CHECK_THROWS_AS(make_grid(v, 4), DegenerateRangeError);
  CHECK_THROWS_AS(make_grid(std::vector<double>{}, 4), ValidationError);
  QuantGrid id = identity_grid(2.0, 4);
  CHECK(id.identity());
  CHECK(bucket_index(123.0, id) == 0);
  CHECK(dequantize_value(0, id) == 2.0);
}

TEST_CASE("bucket index: floor, clamps, boundaries") {
  QuantGrid g = make_grid(0.0, 16.0, 4);
  CHECK(bucket_index(3.4, g) == 3);
  CHECK(bucket_index(0.0, g) == 0);
  CHECK(bucket_index(16.0, g) == 15);
  CHECK(bucket_index(-5.0, g) == 0);
  CHECK(bucket_index(99.0, g) == 15);
  CHECK(bucket_index(4.0, g) == 4);
}

TEST_CASE("dequantize value") {
  QuantGrid g = make_grid(0.0, 16.0, 4);
  CHECK(dequantize_value(3, g) == 3.5);
  CHECK(dequantize_value(0, g) == g.w_min + g.delta / 2);
  CHECK_THROWS_AS(dequantize_value(16, g), ValidationError);
}

TEST_CASE("bucket index equals a linear scan over edges") {
  Rng r(11);
  for (int bits : {2, 3, 4, 6}) {
    QuantGrid g = make_grid(-1.3, 2.9, bits);
    for (int i = 0; i < 20000; ++i) {
      double w = g.w_min + r.uniform() * (g.w_max - g.w_min);
      REQUIRE(bucket_index(w, g) == scan_index(w, g));
    }
  }
}

TEST_CASE("center bound, index range, monotonicity") {
  Rng r(12);
  for (int i = 0; i < 2000; ++i) {
    double lo = 10.0 * (r.uniform() - 0.5);
    double hi = lo + 1e-3 + 5.0 * r.uniform();
    int bits = 2 + static_cast<int>(r.below(15));
    QuantGrid g = make_grid(lo, hi, bits);
    double prev = -1.0;
    std::uint32_t prev_ix = 0;
    for (int k = 0; k < 20; ++k) {
      double w = lo + r.uniform() * (hi - lo);
      auto ix = bucket_index(w, g);
      REQUIRE(ix < g.levels());
      REQUIRE(std::abs(dequantize_value(ix, g) - w) <= g.delta / 2 + 1e-12);
      if (w >= prev) {
        REQUIRE(ix >= prev_ix);
      }
      prev = w;
      prev_ix = ix;
    }
  }
}

TEST_CASE("bucket collapse bounds") {
  Rng r(13);
  QuantGrid g = make_grid(-1.0, 1.0, 4);
  for (int i = 0; i < 20000; ++i) {
    double w = -1.0 + 2.0 * r.uniform();
    double d = (r.uniform() - 0.5) * 4.0 * g.delta * r.uniform();
    double w2 = std::clamp(w + d, -1.0, 1.0);
    auto a = static_cast<long>(bucket_index(w, g));
    auto b = static_cast<long>(bucket_index(w2, g));
    if (a != b) {
      REQUIRE(w != w2);
    }
    REQUIRE(std::abs(a - b) <=
            static_cast<long>(std::ceil(std::abs(w - w2) / g.delta)) + 1);
    // Same bucket interior and closer than one step: same index.
    double lo = g.w_min + static_cast<double>(a) * g.delta;
    if (w2 > lo && w2 < lo + g.delta && w > lo && w < lo + g.delta) {
      REQUIRE(a == b);
    }
  }
}

TEST_CASE("quantize_snapshot range policies") {
  WeightSnapshot s = random_snapshot(Rng(1));
  QuantConfig cfg;
  cfg.bits = 4;
  auto q = quantize_snapshot(s, cfg);
  for (const auto& t : q.tensors) CHECK(t.grid == q.tensors[0].grid);
  for (const auto& t : q.tensors) {
    for (auto ix : t.indices) CHECK(ix < 16);
  }

  cfg.range_mode = RangeMode::kPerTensor;
  auto qp = quantize_snapshot(s, cfg);
  CHECK_FALSE(qp.tensors[0].grid == qp.tensors[1].grid);
  CHECK(qp.tensors[1].grid.w_min == s.at("layer.1.b").data().minCoeff());

  WeightSnapshot c;
  c.insert("layer.0.ok", Tensor({2}, {0.0, 1.0}));
  c.insert("layer.0.flat", Tensor({3}, {0.5, 0.5, 0.5}));
  try {
    quantize_snapshot(c, cfg);
    FAIL("expected DegenerateRangeError");
  } catch (const DegenerateRangeError& e) {
    CHECK(e.tensor() == "layer.0.flat");
  }
  cfg.identity_on_degenerate = true;
  auto qi = quantize_snapshot(c, cfg);
  CHECK(dequantize_snapshot(qi).at("layer.0.flat") == c.at("layer.0.flat"));
  CHECK_THROWS_AS(quantize_snapshot(WeightSnapshot{}, cfg), ValidationError);
  cfg.bits = 17;
  CHECK_THROWS_AS(quantize_snapshot(s, cfg), ValidationError);
}

TEST_CASE("requantizing centers on the same grid is idempotent") {
  for (RangeMode mode : {RangeMode::kGlobal, RangeMode::kPerTensor}) {
    for (int bits : {2, 4, 8, 16}) {
      WeightSnapshot s = random_snapshot(Rng(static_cast<std::uint64_t>(bits)));
      QuantConfig cfg{bits, mode};
      auto grids = grids_for(s, cfg);
      auto q1 = quantize_with_grids(s, grids, cfg);
      auto q2 = quantize_with_grids(dequantize_snapshot(q1), grids, cfg);
      for (std::size_t t = 0; t < q1.tensors.size(); ++t) {
        CHECK(q1.tensors[t].indices == q2.tensors[t].indices);
      }
    }
  }
}

TEST_CASE("symmetric range") {
  std::vector<double> v{-0.5, 2.0};
  QuantGrid g = make_grid(v, 3, true);
  CHECK(g.w_min == -2.0);
  CHECK(g.w_max == 2.0);
  CHECK(g.delta == 0.5);
}

TEST_CASE("dequantize_model") {
  ModelConfig mc = testing::small_config();
  Model m = Model::initialized(mc, Rng(3), 0.5);
  Rng bias_rng(4);
  for (auto& e : m.params()) {
    if (e.tensor.data().isZero()) {
      e.tensor = gauss_init(bias_rng, e.tensor.shape(), 0.1);
    }
  }
  Model copy = m;
  QuantConfig cfg{16, RangeMode::kGlobal};
  Model d = dequantize_model(m, cfg);
  CHECK(m.params() == copy.params());
  CHECK(d.config() == m.config());
  const double delta = grids_for(m.params(), cfg)[0].delta;
  for (std::size_t t = 0; t < m.params().size(); ++t) {
    double worst = (d.params()[t].tensor.data() - m.params()[t].tensor.data())
                       .cwiseAbs()
                       .maxCoeff();
    CHECK(worst <= delta / 2 + 1e-15);
  }

  // Bucket-identical models dequantize to identical parameters.
  QuantConfig c4{4, RangeMode::kGlobal};
  auto grids = grids_for(m.params(), c4);
  Model moved = dequantize_model(m, c4, grids);
  Model again = dequantize_model(moved, c4, grids);
  CHECK(again.params() == moved.params());

  c4.exempt_embeddings = true;
  Model ex = dequantize_model(m, c4);
  CHECK(ex.params().at(Model::kEmbed) == m.params().at(Model::kEmbed));
  CHECK_FALSE(ex.params().at(Model::kW1) == m.params().at(Model::kW1));
}

TEST_CASE("QSNQ round trip and malformed input") {
  WeightSnapshot s = random_snapshot(Rng(5));
  QuantConfig cfg{6, RangeMode::kPerTensor};
  auto q = quantize_snapshot(s, cfg, "src.qsnp");
  std::string bytes = encode_quantized(q);
  CHECK(bytes.substr(0, 4) == "QSNQ");
  auto back = decode_quantized(bytes);
  CHECK(back == q);
  CHECK(back.source == "src.qsnp");
  CHECK(back.config.range_mode == RangeMode::kPerTensor);

  auto dir = testing::scratch_dir("qsnq");
  save_quantized(q, (dir / "q.qsnq").string());
  CHECK(load_quantized((dir / "q.qsnq").string()) == q);

  std::string bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_quantized(bad), ParseError);
  CHECK_THROWS_AS(decode_quantized(bytes.substr(0, bytes.size() - 1)), ParseError);
  std::string v2 = bytes;
  v2[4] = 9;
  CHECK_THROWS_AS(decode_quantized(v2), UnsupportedVersionError);
  // Index beyond 2^6 - 1 in the last tensor.
  std::string hi = bytes;
  hi[hi.size() - 2] = static_cast<char>(0xff);
  CHECK_THROWS_AS(decode_quantized(hi), ParseError);
}
