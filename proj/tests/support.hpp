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

// Helpers shared by the test binaries.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>

#include "qunlearn/model.hpp"
#include "qunlearn/rng.hpp"

namespace qunlearn::testing {

/// Relative error with a small absolute floor so exact zeros compare cleanly.
inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-7});
}

/// Worst relative error between `grads` and central differences of `loss`
/// over `per_tensor` sampled coordinates of every parameter tensor.
inline double max_fd_error(Model& m, const WeightSnapshot& grads,
                           const std::function<double(const Model&)>& loss,
                           std::size_t per_tensor, Rng rng,
                           double step = 1e-5) {
  double worst = 0.0;
  for (std::size_t t = 0; t < m.params().size(); ++t) {
    auto& w = m.params()[t].tensor;
    const auto& g = grads[t].tensor;
    for (std::size_t s = 0; s < per_tensor; ++s) {
      const std::size_t i = rng.below(w.size());
      const double keep = w[i];
      w[i] = keep + step;
      const double up = loss(m);
      w[i] = keep - step;
      const double down = loss(m);
      w[i] = keep;
      worst = std::max(worst, rel_err(g[i], (up - down) / (2.0 * step)));
    }
  }
  return worst;
}

/// A fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("qunlearn_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline ModelConfig small_config(Task task = Task::kNextToken) {
  ModelConfig c;
  c.vocab_size = 11;
  c.context = 3;
  c.embed_dim = 4;
  c.hidden_dim = 6;
  c.task = task;
  return c;
}

}  // namespace qunlearn::testing
