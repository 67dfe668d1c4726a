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
#include <cstdint>
#include <stdexcept>
#include <string>

namespace qunlearn {

// Bad input: shapes, ranges, ids, empty sets, config values.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Two snapshots that should share names and shapes do not.
class AlignmentError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Quantization range with w_max == w_min.
class DegenerateRangeError : public ValidationError {
 public:
  DegenerateRangeError(const std::string& what, std::string tensor)
      : ValidationError(what), tensor_(std::move(tensor)) {}
  const std::string& tensor() const noexcept { return tensor_; }

 private:
  std::string tensor_;
};

// NaN/Inf reached a parameter, gradient, or loss.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed checkpoint bytes; offset is where decoding stopped.
class ParseError : public IoError {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : IoError(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class UnsupportedVersionError : public ParseError {
 public:
  UnsupportedVersionError(std::uint32_t version, std::size_t offset)
      : ParseError("unsupported format version " + std::to_string(version),
                   offset),
        version_(version) {}
  std::uint32_t version() const noexcept { return version_; }

 private:
  std::uint32_t version_;
};

}  // namespace qunlearn
