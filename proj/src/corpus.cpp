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

#include "qunlearn/corpus.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <utility>

namespace qunlearn {

namespace {

struct Topic {
  TokenId lo;
  TokenId hi;  // exclusive
  std::vector<TokenId> next;

  std::size_t width() const { return hi - lo; }
};

Topic make_topic(TokenId lo, TokenId hi, Rng rng) {
  Topic t{lo, hi, std::vector<TokenId>(hi - lo)};
  std::iota(t.next.begin(), t.next.end(), lo);
  rng.shuffle(std::span<TokenId>(t.next));
  return t;
}

}  // namespace

void CorpusConfig::validate(std::size_t vocab_size) const {
  if (forget == 0 || retain == 0 || holdout == 0) {
    throw ValidationError("forget, retain and holdout sizes must be >= 1");
  }
  if (length <= kFactLength) {
    throw ValidationError("sequence length must exceed the fact length " +
                          std::to_string(kFactLength));
  }
  if (vocab_size < 5) {
    throw ValidationError("vocab_size must be >= 5 for two topics");
  }
  const std::size_t a = (vocab_size - 1) / 2;
  const std::size_t b = vocab_size - 1 - a;
  if (forget + holdout > a * a) {
    throw ValidationError("vocab too small: topic A has " +
                          std::to_string(a * a) + " distinct fact keys for " +
                          std::to_string(forget + holdout) + " sequences");
  }
  if (retain > b * b) {
    throw ValidationError("vocab too small: topic B has " +
                          std::to_string(b * b) + " distinct fact keys for " +
                          std::to_string(retain) + " sequences");
  }
}

SynthCorpus synth_corpus(const CorpusConfig& cfg, std::size_t vocab_size,
                         std::size_t context, const Rng& rng) {
  cfg.validate(vocab_size);
  if (context == 0) throw ValidationError("context must be >= 1");
  const auto mid = static_cast<TokenId>(1 + (vocab_size - 1) / 2);
  const Topic topic_a = make_topic(1, mid, rng.split("topic/a"));
  const Topic topic_b =
      make_topic(mid, static_cast<TokenId>(vocab_size), rng.split("topic/b"));

  std::set<std::pair<TokenId, TokenId>> keys;
  Rng facts = rng.split("facts");
  auto draw = [&](const Topic& t) {
    return static_cast<TokenId>(t.lo + facts.below(t.width()));
  };
  auto make = [&](const Topic& t) {
    TokenId s = 0, r = 0;
    do {
      s = draw(t);
      r = draw(t);
    } while (!keys.insert({s, r}).second);
    Sequence seq{s, r, draw(t), draw(t)};
    while (seq.size() < cfg.length) seq.push_back(t.next[seq.back() - t.lo]);
    return seq;
  };

  SynthCorpus c;
  for (std::size_t i = 0; i < cfg.forget; ++i) c.forget.push_back(make(topic_a));
  for (std::size_t i = 0; i < cfg.retain; ++i) c.retain.push_back(make(topic_b));
  for (std::size_t i = 0; i < cfg.holdout; ++i) c.holdout.push_back(make(topic_a));

  auto qa = [](const Sequence& s) {
    return QAPair{{s[0], s[1]}, {s[2], s[3]}};
  };
  for (const auto& s : c.forget) c.qa_forget.push_back(qa(s));
  for (const auto& s : c.retain) c.qa_retain.push_back(qa(s));

  // Planted rule: label 1 iff the window's summed token weights are positive.
  Rng cls = rng.split("classify");
  std::vector<double> weight(vocab_size, 0.0);
  for (std::size_t v = 1; v < vocab_size; ++v) weight[v] = cls.normal();
  auto make_cls = [&] {
    Example ex;
    double score = 0.0;
    for (std::size_t k = 0; k < context; ++k) {
      auto t = static_cast<TokenId>(1 + cls.below(vocab_size - 1));
      ex.tokens.push_back(t);
      score += weight[t];
    }
    ex.label = score > 0.0 ? 1 : 0;
    return ex;
  };
  for (std::size_t i = 0; i < cfg.classify_forget; ++i) {
    c.classify_forget.push_back(make_cls());
  }
  for (std::size_t i = 0; i < cfg.classify_retain; ++i) {
    c.classify_retain.push_back(make_cls());
  }
  return c;
}

std::vector<Example> to_examples(std::span<const Sequence> seqs,
                                 std::size_t first_target) {
  std::vector<Example> out;
  for (const auto& s : seqs) {
    auto ex = sequence_examples(s, first_target);
    out.insert(out.end(), std::make_move_iterator(ex.begin()),
               std::make_move_iterator(ex.end()));
  }
  return out;
}

const Sequence* find_fact(std::span<const Sequence> seqs,
                          std::span<const TokenId> prompt) {
  if (prompt.size() != 2) return nullptr;
  for (const auto& s : seqs) {
    if (s.size() >= kFactLength && s[0] == prompt[0] && s[1] == prompt[1]) {
      return &s;
    }
  }
  return nullptr;
}

}  // namespace qunlearn
