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

#include <string>
#include <string_view>

#include "qunlearn/tensor.hpp"

namespace qunlearn {

/// QSNP checkpoint layout (little-endian, no padding):
///
///   "QSNP" | version u32 (=1) | count u32
///   per tensor: name_len u16 | name bytes | ndim u8 | dims u32 x ndim
///               | product(dims) f64 values, row-major
inline constexpr std::string_view kSnapshotMagic = "QSNP";
inline constexpr std::uint32_t kSnapshotVersion = 1;

std::string encode_snapshot(const WeightSnapshot& s);
WeightSnapshot decode_snapshot(std::string_view bytes);

void save_snapshot(const WeightSnapshot& s, const std::string& path);
WeightSnapshot load_snapshot(const std::string& path);

/// Names must be 1..65535 bytes with no control characters.
void validate_tensor_name(std::string_view name);

/// git blob hash ("blob <len>\0" + bytes), hex SHA-1.
std::string content_hash(std::string_view bytes);

}  // namespace qunlearn
