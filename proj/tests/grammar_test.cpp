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

#include "phirtn/grammar.hpp"

#include <algorithm>
#include <set>

#include <gtest/gtest.h>

#include "phirtn/synthetic.hpp"
#include "test_util.hpp"

namespace phirtn {
namespace {

using testing::media_grammar;
using testing::media_grammar_raw;

TEST(GrammarParseTest, MediaLines) {
  const Grammar g = media_grammar_raw();
  const auto& v = g.vocabulary();
  ASSERT_EQ(g.templates().size(), 6u);
  ASSERT_EQ(g.entities().size(), 7u);
  EXPECT_EQ(g.templates()[0].tokens,
            (std::vector<TokenId>{v.lookup("play"), Vocabulary::kNonterminal}));
  EXPECT_DOUBLE_EQ(g.templates()[0].prob, 0.4);
  EXPECT_EQ(g.entities()[1].tokens, std::vector<TokenId>{v.lookup("Adele")});
  EXPECT_DOUBLE_EQ(g.entities()[1].prob, 8.0e-5);
}

TEST(GrammarParseTest, Errors) {
  auto parse = [](const char* t, const char* e) { return parse_grammar(t, e); };
  EXPECT_THROW(parse("a $entity $entity\t1.0\n", "x\t1\n"), ParseError);
  EXPECT_THROW(parse("a\t1.0\n", "x\t0.5\n"), ParseError);     // sum
  EXPECT_THROW(parse("a\t0.5\na\t0.5\n", "x\t1\n"), ParseError);  // duplicate
  EXPECT_THROW(parse("a\t1.0\n", "x y\t0.5\nx  y\t0.5\n"), ParseError);
  EXPECT_THROW(parse("a 1.0\n", "x\t1\n"), ParseError);         // no tab
  EXPECT_THROW(parse("a\tabc\n", "x\t1\n"), ParseError);
  EXPECT_THROW(parse("a\t0\n", "x\t1\n"), ParseError);
  EXPECT_THROW(parse("a\t1\n", "x $entity\t1\n"), ParseError);
  EXPECT_THROW(parse("a </s>\t1\n", "x\t1\n"), ParseError);
  EXPECT_THROW(parse("", "x\t1\n"), ParseError);
  try {
    parse("# comment\na\t0.5\nb c\n", "x\t1\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(GrammarParseTest, CommentsAndScientificNotation) {
  const Grammar g = parse_grammar("# t\n\na $entity\t1e0\r\n", "x\t2.5e-1\ny\t0.75\n");
  EXPECT_EQ(g.templates().size(), 1u);
  EXPECT_DOUBLE_EQ(g.entities()[0].prob, 0.25);
}

TEST(GrammarParseTest, SerializeRoundTrip) {
  const Grammar g = media_grammar();
  const Grammar h = parse_grammar(g.templates_text(), g.entities_text());
  EXPECT_EQ(g, h);
  // A generated grammar may list words no rule uses; after one parse the
  // text form is a fixed point.
  const Grammar r = random_small_grammar(5);
  const Grammar r1 = parse_grammar(r.templates_text(), r.entities_text());
  EXPECT_EQ(parse_grammar(r1.templates_text(), r1.entities_text()), r1);
  EXPECT_EQ(r1.templates_text(), r.templates_text());
}

TEST(GrammarExpandTest, JointProbabilities) {
  const Grammar g = media_grammar_raw();
  const auto& v = g.vocabulary();
  const auto qs = expand(g);
  EXPECT_EQ(qs.size(), 42u);
  auto find = [&](const std::string& text) {
    const auto toks = v.map(text);
    auto it = std::find_if(qs.begin(), qs.end(),
                           [&](const ExpandedQuery& q) { return q.tokens == toks; });
    EXPECT_NE(it, qs.end()) << text;
    return it->joint_prob;
  };
  EXPECT_NEAR(find("play Adele"), 0.4 * 8.0e-5, 1e-18);
  EXPECT_NEAR(find("hip hop rap"), 0.2 * 2.7e-3, 1e-18);
  double total = 0.0;
  for (const auto& q : qs) total += q.joint_prob;
  EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(GrammarExpandTest, SlotFreeTemplate) {
  const Grammar g = parse_grammar("just words\t1\n", "x\t1\n");
  const auto qs = expand(g);
  ASSERT_EQ(qs.size(), 1u);
  EXPECT_DOUBLE_EQ(qs[0].joint_prob, 1.0);
}

TEST(GrammarExpandTest, TwoSlotsAndIndexing) {
  const Grammar g = parse_grammar("a $entity b $entity\t0.5\nc\t0.5\n",
                                  "x\t0.25\ny z\t0.75\n");
  EXPECT_EQ(g.expansion_size(), 5u);
  const auto qs = expand(g);
  for (std::uint64_t i = 0; i < qs.size(); ++i) {
    EXPECT_EQ(g.query(i).tokens, qs[i].tokens);
    EXPECT_EQ(qs[i].index, i);
  }
  EXPECT_EQ(g.vocabulary().join(qs[1].tokens), "a x b y z");
  EXPECT_DOUBLE_EQ(qs[1].joint_prob, 0.5 * 0.25 * 0.75);
  EXPECT_THROW(expand(g, 4), Error);
}

TEST(StratifyTest, PercentileArithmetic) {
  std::vector<ExpandedQuery> qs;
  Vocabulary v;
  for (int i = 0; i < 10; ++i) {
    qs.push_back({{v.insert("w" + std::to_string(i))}, 0.01 * (i + 1), 0});
  }
  const auto s = stratify(qs, v);
  // Highest probability is the last one.
  EXPECT_EQ(s[9], Stratum::kHead);
  for (int i = 5; i <= 8; ++i) EXPECT_EQ(s[i], Stratum::kTorso) << i;
  for (int i = 0; i <= 4; ++i) EXPECT_EQ(s[i], Stratum::kTail) << i;

  const std::vector<ExpandedQuery> one = {qs[0]};
  EXPECT_EQ(stratify(one, v)[0], Stratum::kHead);
}

TEST(StratifyTest, TiesBreakByWords) {
  Vocabulary v;
  const TokenId b = v.insert("b"), a = v.insert("a");
  std::vector<ExpandedQuery> qs = {{{b}, 0.5, 0}, {{a}, 0.5, 1}};
  // Only one head slot for n = 2; "a" sorts first.
  const auto s = stratify(qs, v);
  EXPECT_EQ(s[1], Stratum::kHead);
  EXPECT_EQ(s[0], Stratum::kTail);
}

TEST(StratifyTest, RankExpansionAgreesWithStratify) {
  const Grammar g = random_small_grammar(9);
  const auto qs = expand(g);
  const auto strata = stratify(qs, g.vocabulary());
  const auto ranked = rank_expansion(g);
  ASSERT_EQ(ranked.size(), qs.size());
  for (std::size_t r = 0; r < ranked.size(); ++r) {
    EXPECT_EQ(strata[ranked[r].index], stratum_of_rank(r, ranked.size()));
  }
}

TEST(SampleTest, Contract) {
  Vocabulary v;
  std::vector<ExpandedQuery> qs;
  const double p[] = {0.5, 0.3, 0.2};
  for (int i = 0; i < 3; ++i) qs.push_back({{v.insert("q" + std::to_string(i))}, p[i], 0});
  const std::vector<Stratum> strata(3, Stratum::kTail);
  EXPECT_TRUE(sample_stratum(qs, strata, Stratum::kTail, 0, 1).empty());
  const auto all = sample_stratum(qs, strata, Stratum::kTail, 3, 1);
  std::set<double> got;
  for (const auto& q : all) got.insert(q.joint_prob);
  EXPECT_EQ(got, (std::set<double>{0.2, 0.3, 0.5}));
  EXPECT_THROW(sample_stratum(qs, strata, Stratum::kHead, 1, 1), Error);
}

TEST(SampleTest, DeterministicForSeed) {
  const Grammar g = random_small_grammar(2);
  const auto ranked = rank_expansion(g);
  const auto a = sample_stratum(ranked, Stratum::kTail, 20, 42);
  const auto b = sample_stratum(ranked, Stratum::kTail, 20, 42);
  EXPECT_EQ(a, b);
  EXPECT_EQ(std::set<std::uint64_t>(a.begin(), a.end()).size(), a.size());
}

TEST(SampleTest, FavoursHeavyItems) {
  std::vector<double> w(100, 1.0);
  w[7] = 1000.0;
  int hits = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    hits += weighted_sample(w, 1, seed)[0] == 7;
  }
  EXPECT_GT(hits, 40);
}

TEST(CollisionTest, Media) {
  const Grammar g = media_grammar();
  const auto& v = g.vocabulary();
  const auto report = collision_report(g, 3);
  std::set<std::string> flagged;
  for (const auto& c : report) {
    std::vector<TokenId> toks;
    g.tokens_of(g.derivation(c.index), toks);
    flagged.insert(v.join(toks));
    EXPECT_EQ(c.kind, Collision::Kind::kEntry);
    EXPECT_EQ(v.word(c.token), "play");
  }
  // "hey VA play ..." prefers template (4), "play ..." prefers template (1).
  EXPECT_EQ(flagged, (std::set<std::string>{"hey VA play on Canada",
                                            "play on Canada"}));
}

TEST(CollisionTest, ExitShadowing) {
  // After entity "x", the template continues with "y", which the entity
  // model also predicts after "x" (entity "x y").
  const Grammar g = parse_grammar("$entity y\t1\n", "x\t0.5\nx y\t0.5\n");
  const auto report = collision_report(g, 3);
  ASSERT_EQ(report.size(), 1u);
  EXPECT_EQ(report[0].kind, Collision::Kind::kExit);
  EXPECT_EQ(g.vocabulary().join(g.query(report[0].index).tokens), "x y");
}

TEST(CollisionTest, DisjointVocabulariesAreClean) {
  const Grammar g = parse_grammar("play $entity\t0.5\nshow $entity now\t0.5\n",
                                  "a b\t0.5\nc\t0.5\n");
  EXPECT_TRUE(collision_report(g).empty());
}

}  // namespace
}  // namespace phirtn
