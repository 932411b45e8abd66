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
// The incremental scoring contract implemented by every model kind, plus
// the generic sequence log-probability and perplexity routines built on it.
//
// A model exposes a start state, a step function mapping (state, token) to a
// natural-log probability and a successor state, and an end function giving
// the log-probability of </s>. For every reachable state the exponentiated
// step values over all scorable tokens plus the end value sum to one.

#ifndef PHIRTN_LANGUAGE_MODEL_HPP_
#define PHIRTN_LANGUAGE_MODEL_HPP_

#include <cmath>
#include <concepts>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "phirtn/error.hpp"
#include "phirtn/vocabulary.hpp"

namespace phirtn {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

template <class State>
struct Step {
  double logprob;
  State next;
};

template <class M>
concept LanguageModel =
    std::equality_comparable<typename M::State> &&
    requires(const M& m, const typename M::State& s, TokenId t) {
      { m.start() } -> std::same_as<typename M::State>;
      { m.step(s, t) } -> std::same_as<Step<typename M::State>>;
      { m.end(s) } -> std::same_as<double>;
      { m.vocabulary() } -> std::same_as<const Vocabulary&>;
    };

// Neumaier-compensated sum; state masses are compared against 1e-9.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      carry_ += (sum_ - t) + x;
    } else {
      carry_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + carry_; }

 private:
  double sum_ = 0.0;
  double carry_ = 0.0;
};

// Sum of step log-probs plus the end log-prob. If `trace` is given it
// receives one entry per token followed by the </s> entry.
template <LanguageModel M>
double sequence_logprob(const M& lm, std::span<const TokenId> tokens,
                        std::vector<double>* trace = nullptr) {
  auto state = lm.start();
  double total = 0.0;
  for (TokenId t : tokens) {
    auto [lp, next] = lm.step(state, t);
    if (trace) trace->push_back(lp);
    total += lp;
    state = std::move(next);
  }
  const double lp = lm.end(state);
  if (trace) trace->push_back(lp);
  return total + lp;
}

struct PerplexityResult {
  double value = 0.0;
  double logprob = 0.0;    // natural log, summed over the corpus
  std::size_t events = 0;  // tokens plus one </s> per sequence
  std::vector<std::size_t> infinite;  // indices of zero-probability sequences

  bool is_infinite() const { return !infinite.empty(); }
};

// exp(-sum logprob / N) with N = tokens + one </s> per sequence.
template <LanguageModel M>
PerplexityResult perplexity(const M& lm,
                            std::span<const std::vector<TokenId>> corpus) {
  if (corpus.empty()) throw Error("perplexity: empty corpus");
  PerplexityResult r;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const double lp = sequence_logprob(lm, std::span<const TokenId>(corpus[i]));
    r.events += corpus[i].size() + 1;
    if (std::isinf(lp) || std::isnan(lp)) {
      r.infinite.push_back(i);
    } else {
      r.logprob += lp;
    }
  }
  r.value = r.is_infinite()
                ? std::numeric_limits<double>::infinity()
                : std::exp(-r.logprob / static_cast<double>(r.events));
  return r;
}

// Total probability of all events at `state`.
template <LanguageModel M>
double state_mass(const M& lm, const typename M::State& state) {
  CompensatedSum sum;
  for (TokenId t : lm.vocabulary().tokens()) {
    sum.add(std::exp(lm.step(state, t).logprob));
  }
  sum.add(std::exp(lm.end(state)));
  return sum.value();
}

}  // namespace phirtn

#endif  // PHIRTN_LANGUAGE_MODEL_HPP_
