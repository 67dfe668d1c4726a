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

#include "qunlearn/snapshot_io.hpp"

#include <openssl/evp.h>

#include <array>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "qunlearn/detail/bytes.hpp"

namespace qunlearn {

namespace detail {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open '" + path + "' for reading: " +
                  std::strerror(errno));
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failure on '" + path + "'");
  return ss.str();
}

void write_file(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot open '" + path + "' for writing: " +
                  std::strerror(errno));
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw IoError("write failure on '" + path + "'");
}

}  // namespace detail

void validate_tensor_name(std::string_view name) {
  if (name.empty()) throw ValidationError("tensor name must be non-empty");
  if (name.size() > std::numeric_limits<std::uint16_t>::max()) {
    throw ValidationError("tensor name longer than 65535 bytes");
  }
  for (unsigned char c : name) {
    if (c < 0x20 || c == 0x7f) {
      throw ValidationError("tensor name contains a control byte: '" +
                            std::string(name) + "'");
    }
  }
}

std::string encode_snapshot(const WeightSnapshot& s) {
  if (s.size() > std::numeric_limits<std::uint32_t>::max()) {
    throw ValidationError("too many tensors for QSNP");
  }
  detail::ByteWriter w;
  w.raw(kSnapshotMagic);
  w.u32(kSnapshotVersion);
  w.u32(static_cast<std::uint32_t>(s.size()));
  for (const auto& [name, t] : s) {
    validate_tensor_name(name);
    if (t.rank() > 255) throw ValidationError("tensor rank exceeds 255");
    if (!t.all_finite()) {
      throw NumericError("tensor '" + name + "' holds non-finite values");
    }
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.raw(name);
    w.u8(static_cast<std::uint8_t>(t.rank()));
    for (std::size_t d : t.shape()) {
      if (d > std::numeric_limits<std::uint32_t>::max()) {
        throw ValidationError("dimension exceeds u32 in '" + name + "'");
      }
      w.u32(static_cast<std::uint32_t>(d));
    }
    for (std::size_t i = 0; i < t.size(); ++i) w.f64(t[i]);
  }
  return w.take();
}

WeightSnapshot decode_snapshot(std::string_view bytes) {
  detail::ByteReader r(bytes);
  if (r.raw(4) != kSnapshotMagic) throw ParseError("bad QSNP magic", 0);
  std::uint32_t version = r.u32();
  if (version != kSnapshotVersion) throw UnsupportedVersionError(version, 4);
  std::uint32_t count = r.u32();
  WeightSnapshot s;
  for (std::uint32_t k = 0; k < count; ++k) {
    std::size_t at = r.offset();
    std::uint16_t len = r.u16();
    std::string name(r.raw(len));
    try {
      validate_tensor_name(name);
    } catch (const ValidationError& e) {
      throw ParseError(e.what(), at);
    }
    std::uint8_t ndim = r.u8();
    Shape shape(ndim);
    for (auto& d : shape) {
      std::size_t dim_at = r.offset();
      d = r.u32();
      if (d == 0) throw ParseError("zero dimension in '" + name + "'", dim_at);
    }
    std::size_t n = shape_size(shape);
    if ((bytes.size() - r.offset()) / 8 < n) {
      throw ParseError("truncated tensor data for '" + name + "'",
                       r.offset());
    }
    Tensor t(shape);
    for (std::size_t i = 0; i < n; ++i) t[i] = r.f64();
    if (s.contains(name)) throw ParseError("duplicate tensor '" + name + "'", at);
    s.insert(std::move(name), std::move(t));
  }
  if (!r.at_end()) throw ParseError("trailing bytes after last tensor", r.offset());
  return s;
}

void save_snapshot(const WeightSnapshot& s, const std::string& path) {
  detail::write_file(path, encode_snapshot(s));
}

WeightSnapshot load_snapshot(const std::string& path) {
  return decode_snapshot(detail::read_file(path));
}

std::string content_hash(std::string_view bytes) {
  std::string header = "blob " + std::to_string(bytes.size());
  header.push_back('\0');
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int md_len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (ctx == nullptr) throw std::runtime_error("EVP_MD_CTX_new failed");
  bool ok = EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
            EVP_DigestUpdate(ctx, header.data(), header.size()) == 1 &&
            EVP_DigestUpdate(ctx, bytes.data(), bytes.size()) == 1 &&
            EVP_DigestFinal_ex(ctx, md.data(), &md_len) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok) throw std::runtime_error("SHA-1 digest failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  for (unsigned i = 0; i < md_len; ++i) {
    hex.push_back(kHex[md[i] >> 4]);
    hex.push_back(kHex[md[i] & 0xf]);
  }
  return hex;
}

}  // namespace qunlearn
