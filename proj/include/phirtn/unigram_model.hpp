// Copyright 2026 The phirtn Authors.
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
//
// Context-free model: one distribution over all events (model kind 0).

#ifndef PHIRTN_UNIGRAM_MODEL_HPP_
#define PHIRTN_UNIGRAM_MODEL_HPP_

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "phirtn/error.hpp"
#include "phirtn/language_model.hpp"
#include "phirtn/serialization.hpp"
#include "phirtn/vocabulary.hpp"

namespace phirtn {

class UnigramModel {
 public:
  struct State {
    friend bool operator==(State, State) { return true; }
  };

  // `probs` is indexed by token id and must give zero to non-events and sum
  // to one over events.
  UnigramModel(Vocabulary vocab, const std::vector<double>& probs)
      : vocab_(std::move(vocab)), logprobs_(vocab_.size(), kNegInf) {
    if (probs.size() != vocab_.size()) {
      throw Error("unigram: table size differs from vocabulary size");
    }
    CompensatedSum total;
    for (TokenId id = 0; id < probs.size(); ++id) {
      if (!(probs[id] >= 0.0) || !std::isfinite(probs[id])) {
        throw Error("unigram: invalid probability for '" + vocab_.word(id) +
                    "'");
      }
      if (!vocab_.is_event(id)) continue;
      total.add(probs[id]);
      logprobs_[id] = std::log(probs[id]);
    }
    if (std::abs(total.value() - 1.0) > 1e-9) {
      throw Error("unigram: probabilities sum to " +
                  std::to_string(total.value()));
    }
  }

  static UnigramModel uniform(Vocabulary vocab) {
    std::vector<double> p(vocab.size(), 0.0);
    const double u = 1.0 / static_cast<double>(vocab.event_count());
    for (TokenId id = 0; id < p.size(); ++id) {
      if (vocab.is_event(id)) p[id] = u;
    }
    return UnigramModel(std::move(vocab), p);
  }

  // Adopts stored log-probabilities as they are, so a reload scores bit for
  // bit like the original.
  static UnigramModel from_logprobs(Vocabulary vocab,
                                    std::vector<double> logprobs) {
    if (logprobs.size() != vocab.size()) {
      throw Error("unigram: table size differs from vocabulary size");
    }
    UnigramModel m(std::move(vocab));
    CompensatedSum total;
    for (TokenId id = 0; id < logprobs.size(); ++id) {
      if (std::isnan(logprobs[id]) || logprobs[id] > 0.0) {
        throw Error("unigram: invalid log-probability");
      }
      if (m.vocab_.is_event(id)) total.add(std::exp(logprobs[id]));
    }
    if (std::abs(total.value() - 1.0) > 1e-6) {
      throw Error("unigram: probabilities do not sum to one");
    }
    m.logprobs_ = std::move(logprobs);
    return m;
  }

  State start() const { return {}; }

  Step<State> step(const State&, TokenId token) const {
    return {logprob(token), {}};
  }

  double end(const State&) const { return logprobs_[Vocabulary::kEos]; }

  // Log-probability of an event; </s> scores as itself, other non-scorable
  // ids as <unk>.
  double logprob(TokenId token) const {
    if (token == Vocabulary::kEos) return logprobs_[token];
    return logprobs_[vocab_.scorable(token)];
  }

  const Vocabulary& vocabulary() const { return vocab_; }

  Container to_container() const {
    Container c(ModelKind::kUnigram);
    c.add(section::kVocabulary, encode_vocabulary(vocab_));
    ByteWriter w;
    w.u32(static_cast<std::uint32_t>(logprobs_.size()));
    for (double lp : logprobs_) w.f64(lp);
    c.add(section::kUnigramTable, w.take());
    return c;
  }

  static UnigramModel from_container(const Container& c) {
    if (c.kind() != ModelKind::kUnigram) throw Error("not a unigram model");
    Vocabulary vocab = decode_vocabulary(c.get(section::kVocabulary).bytes);
    ByteReader r(c.get(section::kUnigramTable).bytes);
    const std::uint32_t n = r.count(8);
    if (n != vocab.size()) throw Error("unigram: table size mismatch");
    std::vector<double> logs(n);
    for (auto& lp : logs) lp = r.f64();
    return from_logprobs(std::move(vocab), std::move(logs));
  }

 private:
  explicit UnigramModel(Vocabulary vocab)
      : vocab_(std::move(vocab)), logprobs_(vocab_.size(), kNegInf) {}

  Vocabulary vocab_;
  std::vector<double> logprobs_;
};

}  // namespace phirtn

template <>
struct std::hash<phirtn::UnigramModel::State> {
  std::size_t operator()(const phirtn::UnigramModel::State&) const {
    return 0;
  }
};

#endif  // PHIRTN_UNIGRAM_MODEL_HPP_
