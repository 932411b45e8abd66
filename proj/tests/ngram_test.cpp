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

#include "phirtn/ngram.hpp"

#include <cmath>

#include <gtest/gtest.h>

#include "phirtn/oracle.hpp"
#include "phirtn/random.hpp"
#include "phirtn/synthetic.hpp"

namespace phirtn {
namespace {

struct Fixture {
  Vocabulary v;
  std::vector<WeightedSentence> s;

  TokenId operator()(const char* w) { return v.insert(w); }
  void add(std::vector<TokenId> toks, double c) { s.push_back({std::move(toks), c}); }
  WeightedCorpus corpus() const { return WeightedCorpus(v, s); }
};

double P(const BackoffNgramModel& m, std::vector<TokenId> ctx, TokenId w) {
  return std::exp(m.logprob(ctx, w));
}

constexpr TokenId kEos = Vocabulary::kEos;
constexpr TokenId kUnk = Vocabulary::kUnk;
constexpr TokenId kBos = Vocabulary::kBos;

// {"a b": 1, "a c": 1}
TEST(WittenBellTest, TwoFollowers) {
  Fixture f;
  const TokenId a = f("a"), b = f("b"), c = f("c");
  f.add({a, b}, 1);
  f.add({a, c}, 1);
  const auto m = estimate_witten_bell(f.corpus(), 2);
  EXPECT_NEAR(P(m, {a}, b), 0.25, 1e-12);
  EXPECT_NEAR(P(m, {a}, c), 0.25, 1e-12);
  // Unigrams: a 2, b 1, c 1, </s> 2; four types; <unk> unseen.
  EXPECT_NEAR(P(m, {}, a), 2.0 / 10, 1e-12);
  EXPECT_NEAR(P(m, {}, kUnk), 4.0 / 10, 1e-12);
  // Back-off at "a": reserve 0.5 spread over a, </s>, <unk> in proportion.
  EXPECT_NEAR(P(m, {a}, kUnk), 0.5 * 0.4 / 0.8, 1e-12);
  EXPECT_NEAR(P(m, {kBos}, a), 2.0 / 3, 1e-12);
}

// {"a b": 1, "a c": 1, "b": 2}
TEST(WittenBellTest, SharedEndings) {
  Fixture f;
  const TokenId a = f("a"), b = f("b"), c = f("c");
  f.add({a, b}, 1);
  f.add({a, c}, 1);
  f.add({b}, 2);
  for (int n : {2, 3}) {
    const auto m = estimate_witten_bell(f.corpus(), n);
    EXPECT_NEAR(P(m, {}, a), 2.0 / 14, 1e-12);
    EXPECT_NEAR(P(m, {}, kEos), 4.0 / 14, 1e-12);
    EXPECT_NEAR(P(m, {b}, kEos), 0.75, 1e-12);
    EXPECT_NEAR(P(m, {kBos}, b), 2.0 / 6, 1e-12);
  }
  const auto m3 = estimate_witten_bell(f.corpus(), 3);
  EXPECT_NEAR(P(m3, {kBos, b}, kEos), 2.0 / 3, 1e-12);
  EXPECT_NEAR(P(m3, {kBos, a}, b), 0.25, 1e-12);
}

// Fractional counts {"x": 0.5, "x y": 1.5}
TEST(WittenBellTest, FractionalCounts) {
  Fixture f;
  const TokenId x = f("x"), y = f("y");
  f.add({x}, 0.5);
  f.add({x, y}, 1.5);
  const auto m = estimate_witten_bell(f.corpus(), 2);
  // Unigrams: x 2, y 1.5, </s> 2 over 5.5 + 3.
  EXPECT_NEAR(P(m, {}, x), 2 / 8.5, 1e-12);
  EXPECT_NEAR(P(m, {}, kUnk), 3 / 8.5, 1e-12);
  EXPECT_NEAR(P(m, {x}, y), 1.5 / 4, 1e-12);
  EXPECT_NEAR(P(m, {x}, kEos), 0.5 / 4, 1e-12);
  // bow(x) = 0.5 / (1 - (1.5 + 2) / 8.5) = 0.85
  EXPECT_NEAR(P(m, {x}, x), 0.85 * 2 / 8.5, 1e-12);
}

TEST(WittenBellTest, UnigramOnly) {
  Fixture f;
  const TokenId a = f("a");
  f.add({a, a}, 1);
  const auto m = estimate_witten_bell(f.corpus(), 1);
  EXPECT_NEAR(P(m, {}, a), 2.0 / 5, 1e-12);
  EXPECT_NEAR(P(m, {}, kEos), 1.0 / 5, 1e-12);
  EXPECT_NEAR(P(m, {}, kUnk), 2.0 / 5, 1e-12);
}

TEST(WittenBellTest, NoUnseenEventsSpreadsReserve) {
  Vocabulary v;
  const TokenId a = v.insert("a");
  const WeightedCorpus c(v, {{{a, kUnk}, 1.0}});
  const auto m = estimate_witten_bell(c, 1);
  // Counts a 1, <unk> 1, </s> 1; reserve 3/6 spread over the 3 events.
  EXPECT_NEAR(P(m, {}, a), 1.0 / 3, 1e-12);
  EXPECT_LT(m.max_normalization_error(), 1e-12);
}

TEST(WittenBellTest, InterpolatedVariant) {
  Fixture f;
  const TokenId a = f("a"), b = f("b"), c = f("c");
  f.add({a, b}, 1);
  f.add({a, c}, 1);
  WittenBellOptions o;
  o.interpolate = true;
  const auto m = estimate_witten_bell(f.corpus(), 2, o);
  // Unigram: (c + T / |events|) / (C + T) = (1 + 4/5) / 10 for b.
  EXPECT_NEAR(P(m, {}, b), 0.18, 1e-12);
  EXPECT_NEAR(P(m, {a}, b), (1 + 2 * 0.18) / 4, 1e-12);
  EXPECT_LT(m.max_normalization_error(), 1e-12);
}

TEST(WittenBellTest, EveryHistoryNormalizes) {
  const Grammar g = random_small_grammar(8);
  for (int n : {1, 2, 3, 4}) {
    const auto m = estimate_witten_bell(WeightedCorpus::from_grammar(g), n);
    EXPECT_LT(m.max_normalization_error(), 1e-12) << n;
    const auto states = reachable_states(m);
    const auto r = check_normalization(m, std::span<const NgramState>(states), 1e-12);
    EXPECT_TRUE(r.ok()) << n << " " << r.max_deviation;
  }
}

TEST(WeightedCorpusTest, PseudoCounts) {
  Vocabulary v;
  const TokenId a = v.insert("a"), b = v.insert("b");
  const std::vector<ExpandedQuery> qs = {{{a}, 0.5, 0}, {{b}, 0.25, 1}};
  std::vector<double> counts;
  make_weighted_corpus(qs, v).for_each(
      [&](std::span<const TokenId>, double c) { counts.push_back(c); });
  EXPECT_EQ(counts, (std::vector<double>{2.0, 1.0}));

  const std::vector<ExpandedQuery> eq = {{{a}, 0.3, 0}, {{b}, 0.3, 1}};
  counts.clear();
  make_weighted_corpus(eq, v).for_each(
      [&](std::span<const TokenId>, double c) { counts.push_back(c); });
  EXPECT_EQ(counts, (std::vector<double>{1.0, 1.0}));
}

TEST(WeightedCorpusTest, GrammarStreamMatchesList) {
  const Grammar g = random_small_grammar(6);
  const auto a = estimate_witten_bell(WeightedCorpus::from_grammar(g), 3);
  const auto b = estimate_witten_bell(make_weighted_corpus(expand(g), g.vocabulary()), 3);
  EXPECT_EQ(a.to_arpa(), b.to_arpa());
}

class PruningTest : public ::testing::Test {
 protected:
  void SetUp() override {
    g_ = std::make_unique<Grammar>(random_small_grammar(4));
    model_ = std::make_unique<BackoffNgramModel>(
        estimate_witten_bell(WeightedCorpus::from_grammar(*g_), 3));
  }
  std::unique_ptr<Grammar> g_;
  std::unique_ptr<BackoffNgramModel> model_;
};

TEST_F(PruningTest, ZeroThresholdIsIdentity) {
  const auto p = entropy_prune(*model_, 0.0);
  EXPECT_EQ(p.to_arpa(), model_->to_arpa());
  EXPECT_EQ(p.to_container().serialize(), model_->to_container().serialize());
}

TEST_F(PruningTest, MonotoneInThreshold) {
  const EntropyPruner pruner(*model_);
  std::size_t prev = model_->explicit_count();
  for (double th : pruning_thresholds()) {
    const auto p = pruner.prune(th);
    EXPECT_LE(p.explicit_count(), prev) << th;
    EXPECT_LT(p.max_normalization_error(), 1e-12);
    prev = p.explicit_count();
  }
}

TEST_F(PruningTest, InfiniteThresholdKeepsUnigrams) {
  const auto p = entropy_prune(*model_, std::numeric_limits<double>::infinity());
  EXPECT_EQ(p.explicit_count(), 0u);
  EXPECT_EQ(p.entries(1).size(), model_->entries(1).size());
  EXPECT_LT(p.max_normalization_error(), 1e-12);
  const auto states = reachable_states(p);
  EXPECT_TRUE(check_normalization(p, std::span<const NgramState>(states)).ok());
}

TEST_F(PruningTest, PrunedModelScoresConsistently) {
  const auto p = entropy_prune(*model_, 1e-3);
  // Reload through ARPA and check scores agree to text precision.
  const auto q = BackoffNgramModel::from_arpa(p.to_arpa());
  g_->for_each_query([&](std::span<const TokenId> t, double, std::uint64_t) {
    EXPECT_NEAR(sequence_logprob(p, t), sequence_logprob(q, t), 1e-5);
  });
}

TEST(PruningThresholdsTest, Set) {
  const auto th = pruning_thresholds();
  ASSERT_EQ(th.size(), 17u);
  EXPECT_EQ(th[0], 0.0);
  EXPECT_EQ(th[1], std::pow(4.0, -19));
  EXPECT_EQ(th.back(), std::pow(4.0, -4));
}

TEST(ArpaTest, RoundTripIsByteIdentical) {
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto m = estimate_witten_bell(
        WeightedCorpus::from_grammar(random_small_grammar(seed)), 3);
    const std::string text = m.to_arpa();
    EXPECT_EQ(BackoffNgramModel::from_arpa(text).to_arpa(), text);
  }
}

TEST(ArpaTest, HandWrittenUnigram) {
  const std::string text =
      "\\data\\\nngram 1=3\n\n\\1-grams:\n-0.3010300\t</s>\n"
      "-0.3010300\thello\n-99\t<s>\n\n\\end\\\n";
  const auto m = BackoffNgramModel::from_arpa(text);
  EXPECT_EQ(m.order(), 1);
  const TokenId hello = m.vocabulary().lookup("hello");
  EXPECT_NEAR(std::exp(m.step(m.start(), hello).logprob), 0.5, 1e-6);
  EXPECT_NEAR(state_mass(m, m.start()), 1.0, 1e-6);
  EXPECT_EQ(m.step(m.start(), Vocabulary::kUnk).logprob, kNegInf);
}

TEST(ArpaTest, Errors) {
  auto load = [](const std::string& s) { return BackoffNgramModel::from_arpa(s); };
  const std::string ok =
      "\\data\\\nngram 1=2\nngram 2=1\n\n\\1-grams:\n-0.3010300\t</s>\n"
      "-0.3010300\ta\t-0.1\n\n\\2-grams:\n-0.1\ta </s>\n\n\\end\\\n";
  EXPECT_NO_THROW(load(ok));
  EXPECT_THROW(load("garbage\n"), ParseError);
  auto with = [&](const std::string& from, const std::string& to) {
    std::string s = ok;
    s.replace(s.find(from), from.size(), to);
    return s;
  };
  EXPECT_THROW(load(with("ngram 2=1", "ngram 2=2")), ParseError);
  EXPECT_THROW(load(with("-0.1\ta </s>", "0.5\ta </s>")), ParseError);
  EXPECT_THROW(load(with("-0.1\ta </s>", "nan\ta </s>")), ParseError);
  EXPECT_THROW(load(with("-0.1\ta </s>", "-0.1\tb </s>")), ParseError);
  EXPECT_THROW(load(with("-0.3010300\ta\t-0.1", "-0.3010300\t</s>")), ParseError);
  EXPECT_THROW(load(with("\\end\\", "")), ParseError);
}

TEST(NgramModelTest, BinaryRoundTripIsBitExact) {
  const Grammar g = random_small_grammar(7);
  const auto m = entropy_prune(
      estimate_witten_bell(WeightedCorpus::from_grammar(g), 3), 1e-4);
  const auto back =
      BackoffNgramModel::from_container(Container::parse(m.to_container().serialize()));
  Rng rng(5);
  const auto states = reachable_states(m);
  const auto tokens = g.vocabulary().tokens();
  for (int i = 0; i < 5000; ++i) {
    const auto& s = states[uniform_index(rng, states.size())];
    const TokenId w = tokens[uniform_index(rng, tokens.size())];
    const auto a = m.step(s, w), b = back.step(s, w);
    EXPECT_EQ(a.logprob, b.logprob);
    EXPECT_EQ(a.next, b.next);
  }
}

TEST(NgramModelTest, StatesAreLongestExistingContexts) {
  Fixture f;
  const TokenId a = f("a"), b = f("b");
  f.add({a, b}, 1);
  const auto m = estimate_witten_bell(f.corpus(), 3);
  auto s = m.start();
  EXPECT_EQ(s.order, 1);
  s = m.step(s, a).next;
  EXPECT_EQ(s.order, 2);  // "<s> a" has a continuation
  s = m.step(s, b).next;
  EXPECT_EQ(s.order, 2);  // "a b" continues with </s>; "<s> a b" does not
  EXPECT_EQ(m.ngram(s.order, s.index), (std::vector<TokenId>{a, b}));
}

}  // namespace
}  // namespace phirtn
