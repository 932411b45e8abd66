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

#include "phirtn/language_model.hpp"

#include <cmath>

#include <gtest/gtest.h>

#include "phirtn/oracle.hpp"
#include "phirtn/unigram_model.hpp"

namespace phirtn {
namespace {

UnigramModel UniformOverFour() {
  // Events: </s>, <unk>, a, b.
  Vocabulary v;
  v.insert("a");
  v.insert("b");
  return UnigramModel::uniform(v);
}

TEST(LanguageModelTest, UnigramSatisfiesConcept) {
  static_assert(LanguageModel<UnigramModel>);
}

TEST(LanguageModelTest, EmptySequenceIsEndOnly) {
  const auto m = UniformOverFour();
  EXPECT_DOUBLE_EQ(sequence_logprob(m, std::span<const TokenId>()),
                   m.end(m.start()));
}

TEST(LanguageModelTest, UniformThreeTokens) {
  const auto m = UniformOverFour();
  const std::vector<TokenId> seq = m.vocabulary().map("a b a");
  EXPECT_NEAR(sequence_logprob(m, seq), 4 * std::log(0.25), 1e-12);
}

TEST(LanguageModelTest, TraceSumsToTotal) {
  const auto m = UniformOverFour();
  const std::vector<TokenId> seq = m.vocabulary().map("a zzz b");
  std::vector<double> trace;
  const double total = sequence_logprob(m, seq, &trace);
  ASSERT_EQ(trace.size(), 4u);
  EXPECT_NEAR(trace[0] + trace[1] + trace[2] + trace[3], total, 1e-15);
}

TEST(LanguageModelTest, UniformPerplexityIsEventCount) {
  const auto m = UniformOverFour();
  const std::vector<std::vector<TokenId>> corpus = {
      m.vocabulary().map("a"), m.vocabulary().map("b b a"), {}};
  const auto r = perplexity(m, corpus);
  EXPECT_NEAR(r.value, 4.0, 1e-12);
  EXPECT_EQ(r.events, 7u);
  EXPECT_FALSE(r.is_infinite());
}

TEST(LanguageModelTest, CertainPathHasPerplexityOne) {
  Vocabulary v;
  v.insert("a");
  // Only </s> has mass; the empty sequence is certain.
  const UnigramModel m(v, {1.0, 0.0, 0.0, 0.0, 0.0});
  const std::vector<std::vector<TokenId>> corpus = {{}};
  EXPECT_DOUBLE_EQ(perplexity(m, corpus).value, 1.0);
  const std::vector<std::vector<TokenId>> bad = {{Vocabulary::kFirstWord}};
  const auto r = perplexity(m, bad);
  EXPECT_TRUE(r.is_infinite());
  EXPECT_TRUE(std::isinf(r.value));
}

TEST(LanguageModelTest, EmptyCorpusIsAnError) {
  const auto m = UniformOverFour();
  EXPECT_THROW(perplexity(m, std::span<const std::vector<TokenId>>()), Error);
}

TEST(LanguageModelTest, StateMassOfUniformIsOne) {
  const auto m = UniformOverFour();
  EXPECT_NEAR(state_mass(m, m.start()), 1.0, 1e-15);
  const std::vector<UnigramModel::State> states{m.start()};
  EXPECT_EQ(check_normalization(m, std::span<const UnigramModel::State>(states))
                .max_deviation,
            0.0);
}

TEST(LanguageModelTest, ExhaustiveMassBoundedByOne) {
  Vocabulary v;
  const auto m = UnigramModel::uniform(v);  // </s> and <unk>
  const double mass = exhaustive_mass(m, 8);
  EXPECT_LE(mass, 1.0 + 1e-12);
  EXPECT_NEAR(mass, 1.0 - std::pow(0.5, 9), 1e-12);
}

TEST(LanguageModelTest, CompensatedSum) {
  CompensatedSum s;
  s.add(1.0);
  for (int i = 0; i < 1000; ++i) s.add(1e-16);
  EXPECT_NEAR(s.value(), 1.0 + 1e-13, 1e-18);
}

TEST(LanguageModelTest, UnigramRejectsBadTables) {
  Vocabulary v;
  EXPECT_THROW(UnigramModel(v, {0.5, 0.4, 0.0, 0.0}), Error);
  EXPECT_THROW(UnigramModel(v, {0.5, 0.5, 0.0}), Error);
  EXPECT_THROW(UnigramModel(v, {1.5, -0.5, 0.0, 0.0}), Error);
}

}  // namespace
}  // namespace phirtn
