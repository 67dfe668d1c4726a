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

#include "qunlearn/analytics.hpp"
#include "support.hpp"

using namespace qunlearn;

namespace {

WeightSnapshot one(std::vector<double> v) {
  WeightSnapshot s;
  Tensor t({v.size()});
  for (std::size_t k = 0; k < v.size(); ++k) t[k] = v[k];
  s.insert("layer.0.w", std::move(t));
  return s;
}

std::size_t element_count(const WeightSnapshot& s) {
  std::size_t n = 0;
  for (const auto& e : s) n += e.tensor.size();
  return n;
}

WeightSnapshot random_snapshot(std::uint64_t seed) {
  Rng rng(seed);
  WeightSnapshot s;
  s.insert("embed", gauss_init(rng, {9, 4}, 1.0));
  s.insert("layer.0.w", gauss_init(rng, {12, 5}, 0.7));
  s.insert("layer.0.b", gauss_init(rng, {5}, 0.2));
  s.insert("layer.1.w", gauss_init(rng, {5, 9}, 1.3));
  return s;
}

WeightSnapshot perturb(const WeightSnapshot& s, double rho, std::uint64_t seed) {
  Rng rng(seed);
  WeightSnapshot out = s;
  for (auto& e : out) {
    for (std::size_t k = 0; k < e.tensor.size(); ++k) {
      e.tensor[k] += rho * (2.0 * rng.uniform() - 1.0);
    }
  }
  return out;
}

// Independent recount over one grid spanning all of ref.
double brute_overlap(const WeightSnapshot& a, const WeightSnapshot& b, int bits) {
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& e : a) {
    for (std::size_t k = 0; k < e.tensor.size(); ++k) {
      lo = std::min(lo, e.tensor[k]);
      hi = std::max(hi, e.tensor[k]);
    }
  }
  const double levels = std::ldexp(1.0, bits);
  const double step = (hi - lo) / levels;
  auto idx = [&](double w) {
    w = std::min(std::max(w, lo), hi);
    return std::min(std::floor((w - lo) / step), levels - 1);
  };
  std::size_t same = 0, n = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t k = 0; k < a[i].tensor.size(); ++k, ++n) {
      if (idx(a[i].tensor[k]) == idx(b[i].tensor[k])) ++same;
    }
  }
  return static_cast<double>(same) / static_cast<double>(n);
}

}  // namespace

TEST_CASE("delta stats of identical snapshots") {
  auto s = random_snapshot(1);
  auto d = delta_stats(s, s);
  CHECK(d.mean_abs == 0.0);
  CHECK(d.max_abs == 0.0);
  CHECK(d.exact_match_fraction == 1.0);
  CHECK(d.quantile(0.99) == 0.0);
  CHECK(d.count == element_count(s));
}

TEST_CASE("delta stats worked example") {
  auto d = delta_stats(one({1, 2, 3}), one({1, 2.5, 3.1}));
  CHECK(d.mean_abs == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(d.max_abs == 0.5);
  CHECK(d.exact_match_fraction == doctest::Approx(1.0 / 3.0));
  CHECK(d.quantile(0.5) == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(d.quantile(0.9) == 0.5);
  CHECK_THROWS_AS(d.quantile(0.25), ValidationError);
}

TEST_CASE("delta stats in the reported small-update regime") {
  // 10^4 weights: 8298 untouched, one moved by 1.65e-2, the rest sharing the
  // remainder of a 2.97e-5 mean.
  std::vector<double> a(10000), b(10000);
  for (std::size_t k = 0; k < a.size(); ++k) a[k] = b[k] = 0.001 * static_cast<double>(k % 97);
  const double total = 2.97e-5 * 10000;
  const double rest = (total - 1.65e-2) / 1701.0;
  b[0] += 1.65e-2;
  for (std::size_t k = 1; k <= 1701; ++k) b[k * 5] += (k % 2 ? rest : -rest);
  auto d = delta_stats(one(a), one(b));
  CHECK(d.mean_abs == doctest::Approx(2.97e-5).epsilon(1e-9));
  CHECK(d.max_abs == doctest::Approx(1.65e-2).epsilon(1e-12));
  CHECK(d.exact_match_fraction == doctest::Approx(0.8298).epsilon(1e-12));
}

TEST_CASE("misaligned snapshots") {
  auto a = one({1, 2, 3});
  auto b = one({1, 2});
  CHECK_THROWS_AS(delta_stats(a, b), AlignmentError);
  CHECK_THROWS_AS(bucket_overlap(a, b, QuantConfig{}), AlignmentError);
  WeightSnapshot c;
  c.insert("layer.0.x", Tensor({3}, {1, 2, 3}));
  CHECK_THROWS_AS(bucket_overlap(a, c, QuantConfig{}), AlignmentError);
}

TEST_CASE("identical snapshots overlap fully at every width") {
  auto s = random_snapshot(2);
  std::vector<int> widths{2, 4, 8, 16};
  for (const auto& r : bit_sweep(s, s, widths, QuantConfig{})) {
    CHECK(r.global_overlap == 1.0);
    CHECK(r.tensorwise_overlap == 1.0);
    CHECK(r.hamming_count == 0);
  }
}

TEST_CASE("overlap on a pinned one-bit grid") {
  std::vector<QuantGrid> grids{make_grid(0.0, 2.0, 1)};
  auto r = bucket_overlap(one({0.4, 1.6}), one({0.6, 0.4}), QuantConfig{}, grids);
  CHECK(r.global_overlap == 0.5);
  CHECK(r.bits == 1);
  CHECK(r.delta == 1.0);
  CHECK(r.hamming_count == 1);
  // Under a pinned grid the measure is symmetric.
  auto back = bucket_overlap(one({0.6, 0.4}), one({0.4, 1.6}), QuantConfig{}, grids);
  CHECK(back.global_overlap == r.global_overlap);
}

TEST_CASE("overlap matches a brute-force recount") {
  auto s = random_snapshot(3);
  auto p = perturb(s, 0.1, 4);
  for (int bits : {2, 4, 6, 8}) {
    QuantConfig cfg{bits, RangeMode::kGlobal};
    auto r = bucket_overlap(s, p, cfg);
    CHECK(r.global_overlap == brute_overlap(s, p, bits));
  }
  QuantConfig c4{4, RangeMode::kGlobal};
  CHECK(bucket_overlap(s, p, c4).global_overlap >= 0.8);
}

TEST_CASE("coarser nested grids never lose matches") {
  for (std::uint64_t seed = 10; seed < 30; ++seed) {
    auto s = random_snapshot(seed);
    auto p = perturb(s, 0.05 * static_cast<double>(seed - 9), seed + 100);
    std::vector<int> widths{2, 4, 8, 12, 16};
    auto rs = bit_sweep(s, p, widths, QuantConfig{});
    for (std::size_t i = 1; i < rs.size(); ++i) {
      CHECK(rs[i - 1].global_overlap >= rs[i].global_overlap);
    }
  }
}

TEST_CASE("report bookkeeping") {
  auto s = random_snapshot(5);
  auto p = perturb(s, 0.2, 6);
  for (RangeMode mode : {RangeMode::kGlobal, RangeMode::kPerTensor}) {
    auto r = bucket_overlap(s, p, QuantConfig{4, mode});
    CHECK(r.hamming_fraction + r.global_overlap == 1.0);
    CHECK(r.total == element_count(s));
    double wsum = 0.0, usum = 0.0;
    std::size_t n = 0;
    for (const auto& t : r.per_tensor) {
      wsum += static_cast<double>(t.size) * t.overlap;
      usum += t.overlap;
      n += t.size;
    }
    CHECK(std::abs(wsum / static_cast<double>(n) - r.global_overlap) < 1e-12);
    CHECK(std::abs(usum / 4.0 - r.tensorwise_overlap) < 1e-12);
    double lsum = 0.0;
    for (const auto& l : r.per_layer) lsum += static_cast<double>(l.size) * l.overlap;
    CHECK(std::abs(lsum / static_cast<double>(n) - r.global_overlap) < 1e-12);
    REQUIRE(r.per_layer.size() == 3);
    CHECK(r.per_layer[0].layer == -1);
    CHECK(r.per_layer[1].size == 65);
    std::size_t mass = 0;
    for (const auto& b : r.histogram) mass += b.count;
    CHECK(mass == 4);
  }
}

TEST_CASE("overlap histogram bins") {
  OverlapReport r;
  for (double o : {0.0, 0.049, 0.05, 0.75, 0.7499, 1.0, 1.0}) {
    r.per_tensor.push_back(TensorOverlap{"t", 1, 0, o, 0.0, 0});
  }
  auto h = overlap_histogram(r, 0.05);
  REQUIRE(h.size() == 20);
  CHECK(h[0].count == 2);
  CHECK(h[1].count == 1);
  CHECK(h[14].count == 1);
  CHECK(h[15].count == 1);
  CHECK(h[15].lower == doctest::Approx(0.75));
  CHECK(h[19].count == 2);
  CHECK_THROWS_AS(overlap_histogram(r, 0.0), ValidationError);
  CHECK_THROWS_AS(overlap_histogram(r, 1.5), ValidationError);
  CHECK(overlap_histogram(r, 1.0).front().count == 7);
}

TEST_CASE("csv and json exports") {
  auto s = random_snapshot(7);
  auto p = perturb(s, 0.1, 8);
  std::vector<int> widths{4, 8};
  auto rs = bit_sweep(s, p, widths, QuantConfig{});
  std::string csv = overlap_csv(rs);
  CHECK(csv.rfind("name,size,overlap,bits,delta,layer\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 2 * (4 + 3));
  CHECK(csv.find("layer.1,45,") != std::string::npos);
  std::string js = overlap_json(rs, delta_stats(s, p));
  CHECK(js.find("\"global_overlap\"") != std::string::npos);
  CHECK(js.find("\"exact_match_fraction\"") != std::string::npos);
}
