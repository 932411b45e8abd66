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

#include "phirtn/oracle.hpp"

#include <cmath>

#include <gtest/gtest.h>

#include "phirtn/synthetic.hpp"
#include "phirtn/unigram_model.hpp"
#include "test_util.hpp"

namespace phirtn {
namespace {

TEST(OracleTest, MediaEveryStateNormalizes) {
  const Grammar g = testing::media_grammar();
  const OracleModel o = build_oracle(g, {});
  std::vector<OracleModel::State> all(o.state_count());
  for (std::uint32_t s = 0; s < all.size(); ++s) all[s] = s;
  const auto r = check_normalization(o, std::span<const std::uint32_t>(all));
  EXPECT_TRUE(r.ok()) << r.max_deviation;
  EXPECT_EQ(o.key(o.start()), "T[]");
}

TEST(OracleTest, LinearChain) {
  const Grammar g = parse_grammar("a $entity\t1\n", "x y\t1\n");
  const OracleModel o = build_oracle(g, {});
  EXPECT_NEAR(sequence_logprob(o, g.vocabulary().map("a x y")),
              4 * std::log(0.9), 1e-12);
  EXPECT_NEAR(o.intended_logprob(g, g.derivation(0)), 4 * std::log(0.9), 1e-12);
}

TEST(OracleTest, UnigramCountsOverExpansion) {
  const Grammar g = parse_grammar("a $entity\t0.5\nb\t0.5\n", "x\t1\n");
  const OracleModel o = build_oracle(g, {});
  const auto& v = g.vocabulary();
  // Expected counts a 0.5, x 0.5, b 0.5, </s> 1 (plus epsilon each).
  EXPECT_NEAR(o.unigram(v.lookup("a")), 0.2, 1e-9);
  EXPECT_NEAR(o.unigram(Vocabulary::kEos), 0.4, 1e-9);
}

TEST(OracleTest, DumpListsStates) {
  const Grammar g = parse_grammar("a\t1\n", "x\t1\n");
  const OracleModel o = build_oracle(g, {});
  const std::string tsv = o.dump_tsv();
  EXPECT_NE(tsv.find("T[]\ta\t0.9"), std::string::npos);
  EXPECT_NE(tsv.find("\nU\t"), std::string::npos);
}

TEST(OracleTest, CapOnArcs) {
  OracleOptions opt;
  opt.max_arcs = 10;
  EXPECT_THROW(build_oracle(random_small_grammar(2), opt), Error);
}

TEST(NormalizationCheckTest, UniformHasNoDeviation) {
  Vocabulary v;
  v.insert("a");
  const auto m = UnigramModel::uniform(v);
  const auto states = reachable_states(m);
  EXPECT_EQ(states.size(), 1u);
  EXPECT_EQ(check_normalization(m, std::span<const UnigramModel::State>(states))
                .violations,
            0u);
}

}  // namespace
}  // namespace phirtn
