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
#include <vector>

#include "qunlearn/metrics.hpp"
#include "qunlearn/model.hpp"
#include "qunlearn/rng.hpp"

namespace qunlearn {

struct CorpusConfig {
  std::size_t forget = 100;
  std::size_t retain = 200;
  std::size_t holdout = 100;
  std::size_t length = 16;
  std::size_t classify_forget = 100;
  std::size_t classify_retain = 200;

  void validate(std::size_t vocab_size) const;
};

/// Synthetic corpus with two token topics.
///
/// Topic A (ids 1 .. (V-1)/2) carries forget and holdout sequences, topic B
/// the retain sequences. A sequence is a fact [s, r, o1, o2] with a key (s, r)
/// unique across the whole corpus, continued by the topic's fixed successor
/// permutation: x[t] = next(x[t-1]). QA pairs ask [s, r] and expect [o1, o2].
///
/// The classification track draws context-length windows over the whole
/// vocabulary and labels them by a planted linear rule on token counts.
struct SynthCorpus {
  std::vector<Sequence> forget;
  std::vector<Sequence> retain;
  std::vector<Sequence> holdout;
  std::vector<QAPair> qa_forget;
  std::vector<QAPair> qa_retain;
  std::vector<Example> classify_forget;
  std::vector<Example> classify_retain;
};

/// Index of the first predicted position: the fact key is a prompt, never a
/// target.
inline constexpr std::size_t kFirstTarget = 2;
inline constexpr std::size_t kFactLength = 4;

SynthCorpus synth_corpus(const CorpusConfig& cfg, std::size_t vocab_size,
                         std::size_t context, const Rng& rng);

std::vector<Example> to_examples(std::span<const Sequence> seqs,
                                 std::size_t first_target = kFirstTarget);

/// Sequence in `seqs` whose fact key is `prompt`, or nullptr.
const Sequence* find_fact(std::span<const Sequence> seqs,
                          std::span<const TokenId> prompt);

}  // namespace qunlearn
