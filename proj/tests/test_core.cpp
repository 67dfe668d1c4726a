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

#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>

#include "qunlearn/detail/bytes.hpp"
#include "qunlearn/rng.hpp"
#include "qunlearn/snapshot_io.hpp"
#include "qunlearn/tensor.hpp"
#include "support.hpp"

using namespace qunlearn;

namespace {

// Second serializer written straight from the format table, sharing no code
// with the library's writer.
std::string reference_qsnp(const WeightSnapshot& s) {
  std::string out = "QSNP";
  auto le = [&out](std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out += static_cast<char>((v >> (8 * i)) & 0xffu);
  };
  le(1, 4);
  le(s.size(), 4);
  for (const auto& e : s) {
    le(e.name.size(), 2);
    out += e.name;
    le(e.tensor.rank(), 1);
    for (auto d : e.tensor.shape()) le(d, 4);
    for (std::size_t i = 0; i < e.tensor.size(); ++i) {
      std::uint64_t bits = 0;
      double v = e.tensor[i];
      std::memcpy(&bits, &v, sizeof bits);
      le(bits, 8);
    }
  }
  return out;
}

WeightSnapshot mixed_snapshot() {
  WeightSnapshot s;
  s.insert("layer.0.embed", Tensor({2, 3}, {1.0, -2.5, 0.125, 3e-300, -0.0, 7.0}));
  s.insert("layer.1.b", Tensor({4}, {0.1, 0.2, 0.3, 0.4}));
  s.insert("scalarish", Tensor({1, 1, 2}, {-1e10, 42.0}));
  return s;
}

}  // namespace

TEST_CASE("tensor shape contract") {
  Tensor t({2, 3});
  CHECK(t.size() == 6);
  CHECK(t.rank() == 2);
  CHECK(t.data().isZero());
  CHECK_THROWS_AS(Tensor({2, 0}), ValidationError);
  CHECK_THROWS_AS(Tensor({3}, {1.0, 2.0}), ValidationError);

  Tensor m({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(m.matrix()(1, 0) == 4.0);  // row-major
  Tensor v({3}, {1, 2, 3});
  CHECK(v.matrix().rows() == 1);
  CHECK(v.matrix().cols() == 3);
  CHECK_THROWS_AS(Tensor({1, 1, 2}).matrix(), ValidationError);
}

TEST_CASE("snapshot keeps insertion order and rejects bad names") {
  WeightSnapshot s;
  s.insert("z", Tensor({1}));
  s.insert("a", Tensor({2}));
  CHECK(s[0].name == "z");
  CHECK(s[1].name == "a");
  CHECK(s.parameter_count() == 3);
  CHECK_THROWS_AS(s.insert("a", Tensor({1})), ValidationError);
  CHECK_THROWS_AS(s.insert("", Tensor({1})), ValidationError);
  CHECK_THROWS_AS(s.at("missing"), ValidationError);
}

TEST_CASE("layer index from the naming convention") {
  CHECK(layer_of("layer.0.embed") == 0);
  CHECK(layer_of("layer.12.w") == 12);
  CHECK(layer_of("layer.x.w") == -1);
  CHECK(layer_of("layer.3") == -1);
  CHECK(layer_of("layer.3.") == -1);
  CHECK(layer_of("head.w") == -1);
  CHECK(layer_of("layer.-1.w") == -1);
}

TEST_CASE("alignment lists every offending name") {
  WeightSnapshot a, b;
  a.insert("x", Tensor({2}));
  a.insert("y", Tensor({3}));
  b.insert("x", Tensor({2}));
  b.insert("y", Tensor({4}));
  CHECK(aligned(a, a));
  CHECK_FALSE(aligned(a, b));
  try {
    require_aligned(a, b);
    FAIL("expected AlignmentError");
  } catch (const AlignmentError& e) {
    CHECK(std::string(e.what()).find("y") != std::string::npos);
  }
  WeightSnapshot c;
  c.insert("y", Tensor({3}));
  c.insert("x", Tensor({2}));
  CHECK_FALSE(aligned(a, c));
}

TEST_CASE("rng streams are reproducible and split-independent") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  Rng p1(7);
  Rng a1 = p1.split("a");
  Rng p2(7);
  Rng bb = p2.split("b");
  for (int i = 0; i < 50; ++i) bb.next_u64();
  for (int i = 0; i < 10; ++i) p2.next_u64();
  Rng a2 = p2.split("a");
  for (int i = 0; i < 100; ++i) CHECK(a1.next_u64() == a2.next_u64());
  CHECK(Rng(7).split("a").next_u64() != Rng(7).split("b").next_u64());
}

TEST_CASE("rng matches the documented construction") {
  // SplitMix64 finalizer, written out independently.
  auto mix = [](std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  };
  CHECK(mix64(0) == 0xe220a8397b1dcdafULL);
  Rng r(42);
  const std::uint64_t key = mix(42);
  for (std::uint64_t i = 0; i < 5; ++i) {
    CHECK(r.next_u64() == mix(key ^ mix(i * 0xd1b54a32d192ed03ULL)));
  }
}

TEST_CASE("rng below is in range and shuffle is a permutation") {
  Rng r(3);
  std::vector<int> seen(7, 0);
  for (int i = 0; i < 7000; ++i) seen[r.below(7)]++;
  for (int c : seen) CHECK(c > 800);
  CHECK_THROWS_AS(r.below(0), ValidationError);
  std::vector<int> v{0, 1, 2, 3, 4, 5, 6, 7};
  r.shuffle(std::span<int>(v));
  auto sorted = v;
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7});
}

TEST_CASE("gauss_init") {
  Rng r1(42), r2(42);
  CHECK(gauss_init(r1, {4}, 1.0) == gauss_init(r2, {4}, 1.0));
  Rng r3(42);
  CHECK(gauss_init(r3, {2, 3}, 1.0).size() == 6);
  Rng r4(1);
  CHECK_THROWS_AS(gauss_init(r4, {2, 0}, 1.0), ValidationError);
  CHECK_THROWS_AS(gauss_init(r4, {2}, 0.0), ValidationError);

  Rng r5(42);
  const double scale = 0.02;
  const std::size_t n = 10000;
  Tensor t = gauss_init(r5, {n}, scale);
  const double mean = t.data().mean();
  const double var = (t.data().array() - mean).square().sum() / (n - 1);
  CHECK(std::abs(mean) < 5.0 * scale / std::sqrt(static_cast<double>(n)));
  CHECK(std::sqrt(var) == doctest::Approx(scale).epsilon(0.05));
}

TEST_CASE("QSNP: empty snapshot is 12 bytes") {
  std::string bytes = encode_snapshot(WeightSnapshot{});
  CHECK(bytes.size() == 12);
  CHECK(decode_snapshot(bytes).empty());
}

TEST_CASE("QSNP: round trip through a file") {
  auto dir = testing::scratch_dir("qsnp");
  WeightSnapshot s;
  s.insert("w", Tensor({2}, {1.0, -1.0}));
  save_snapshot(s, (dir / "w.qsnp").string());
  CHECK(load_snapshot((dir / "w.qsnp").string()) == s);

  WeightSnapshot m = mixed_snapshot();
  save_snapshot(m, (dir / "m.qsnp").string());
  WeightSnapshot back = load_snapshot((dir / "m.qsnp").string());
  CHECK(back == m);
  CHECK(std::signbit(back.at("layer.0.embed")[4]));
  for (std::size_t i = 0; i < m.size(); ++i) CHECK(back[i].name == m[i].name);
}

TEST_CASE("QSNP: matches the reference serializer") {
  WeightSnapshot m = mixed_snapshot();
  CHECK(encode_snapshot(m) == reference_qsnp(m));
}

TEST_CASE("QSNP: hand-assembled bytes decode") {
  const unsigned char raw[] = {'Q', 'S', 'N', 'P', 1, 0, 0, 0, 1, 0, 0, 0,
                               1,   0,   'a', 1,   1, 0, 0, 0, 0, 0, 0, 0,
                               0,   0,   0xe0, 0x3f};
  std::string bytes(reinterpret_cast<const char*>(raw), sizeof raw);
  WeightSnapshot s = decode_snapshot(bytes);
  REQUIRE(s.size() == 1);
  CHECK(s[0].name == "a");
  CHECK(s.at("a").shape() == Shape{1});
  CHECK(s.at("a")[0] == 0.5);
  CHECK(encode_snapshot(s) == bytes);
}

TEST_CASE("QSNP: malformed input") {
  std::string good = encode_snapshot(mixed_snapshot());

  std::string magic = good;
  magic.replace(0, 4, "XXXX");
  CHECK_THROWS_AS(decode_snapshot(magic), ParseError);

  std::string version = good;
  version[4] = 2;
  try {
    decode_snapshot(version);
    FAIL("expected UnsupportedVersionError");
  } catch (const UnsupportedVersionError& e) {
    CHECK(e.version() == 2);
    CHECK(e.offset() == 4);
  }

  for (std::size_t cut : {std::size_t{3}, std::size_t{11}, std::size_t{20},
                          good.size() - 1}) {
    try {
      decode_snapshot(std::string_view(good).substr(0, cut));
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.offset() <= cut);
      CHECK(std::string(e.what()).find("offset") != std::string::npos);
    }
  }
  CHECK_THROWS_AS(decode_snapshot(good + "x"), ParseError);
}

TEST_CASE("QSNP: write-side validation") {
  WeightSnapshot bad;
  bad.insert(std::string("a\nb"), Tensor({1}));
  CHECK_THROWS_AS(encode_snapshot(bad), ValidationError);

  WeightSnapshot nan;
  nan.insert("n", Tensor({1}, {std::nan("")}));
  CHECK_THROWS_AS(encode_snapshot(nan), NumericError);

  CHECK_THROWS_AS(save_snapshot(WeightSnapshot{}, "/nonexistent-dir/x.qsnp"),
                  IoError);
  CHECK_THROWS_AS(load_snapshot("/nonexistent-dir/x.qsnp"), IoError);
}

TEST_CASE("content hash is the git blob hash") {
  // `printf 'hello\n' | git hash-object --stdin`
  CHECK(content_hash("hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a");
  CHECK(content_hash("") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
}
