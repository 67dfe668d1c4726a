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

#include "qunlearn/tensor.hpp"

#include <charconv>
#include <set>
#include <sstream>

namespace qunlearn {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) {
    if (d == 0) {
      throw ValidationError("zero-size dimension in shape " +
                            shape_string(shape));
    }
    n *= d;
  }
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

void WeightSnapshot::insert(std::string name, Tensor tensor) {
  if (name.empty()) throw ValidationError("tensor name must be non-empty");
  if (index_.count(name)) {
    throw ValidationError("duplicate tensor name '" + name + "'");
  }
  index_.emplace(name, entries_.size());
  entries_.push_back({std::move(name), std::move(tensor)});
}

bool WeightSnapshot::contains(std::string_view name) const {
  return index_.count(std::string(name)) != 0;
}

const Tensor& WeightSnapshot::at(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) {
    throw ValidationError("no tensor named '" + std::string(name) + "'");
  }
  return entries_[it->second].tensor;
}

Tensor& WeightSnapshot::at(std::string_view name) {
  return const_cast<Tensor&>(std::as_const(*this).at(name));
}

std::size_t WeightSnapshot::parameter_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.tensor.size();
  return n;
}

WeightSnapshot WeightSnapshot::zeros_like(const WeightSnapshot& other) {
  WeightSnapshot out;
  for (const auto& e : other) out.insert(e.name, Tensor::zeros_like(e.tensor));
  return out;
}

int layer_of(std::string_view name) {
  constexpr std::string_view prefix = "layer.";
  if (name.substr(0, prefix.size()) != prefix) return -1;
  std::string_view rest = name.substr(prefix.size());
  auto dot = rest.find('.');
  if (dot == 0 || dot == std::string_view::npos || dot + 1 == rest.size()) {
    return -1;
  }
  int k = -1;
  auto [ptr, ec] = std::from_chars(rest.data(), rest.data() + dot, k);
  if (ec != std::errc() || ptr != rest.data() + dot || k < 0) return -1;
  return k;
}

bool aligned(const WeightSnapshot& a, const WeightSnapshot& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].name != b[i].name || a[i].tensor.shape() != b[i].tensor.shape()) {
      return false;
    }
  }
  return true;
}

void require_aligned(const WeightSnapshot& a, const WeightSnapshot& b) {
  if (aligned(a, b)) return;
  std::set<std::string> offending;
  for (const auto& e : a) {
    if (!b.contains(e.name) || b.at(e.name).shape() != e.tensor.shape()) {
      offending.insert(e.name);
    }
  }
  for (const auto& e : b) {
    if (!a.contains(e.name)) offending.insert(e.name);
  }
  std::string msg = "snapshots are not aligned";
  if (offending.empty()) {
    msg += ": tensor order differs";
  } else {
    msg += "; offending tensors:";
    for (const auto& n : offending) msg += " " + n;
  }
  throw AlignmentError(msg);
}

}  // namespace qunlearn
