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

#include <sys/wait.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace {

namespace fs = std::filesystem;
using phirtn::testing::data_path;

struct CliRun {
  int status = -1;
  std::string out;
  std::string err;
};

class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    char tmpl[] = "/tmp/phirtn_cli_XXXXXX";
    ASSERT_NE(mkdtemp(tmpl), nullptr);
    dir_ = tmpl;
  }
  static void TearDownTestSuite() { fs::remove_all(dir_); }

  static std::string Path(const std::string& name) { return (dir_ / name).string(); }

  static std::string Slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  // Runs the CLI with `args` (already shell-quoted where needed).
  static CliRun Exec(const std::string& args, const std::string& env = "") {
    const std::string err = Path("stderr.txt");
    const std::string cmd = env + " '" + std::string(PHIRTN_CLI) + "' " + args +
                            " 2>'" + err + "'";
    CliRun r;
    FILE* p = popen(cmd.c_str(), "r");
    if (!p) return r;
    char buf[4096];
    for (std::size_t n; (n = fread(buf, 1, sizeof buf, p)) > 0;) r.out.append(buf, n);
    const int st = pclose(p);
    r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
    r.err = Slurp(err);
    return r;
  }

  static std::string Grammar() {
    return "--templates '" + data_path("media/templates.tsv") + "' --entities '" +
           data_path("media/entities_listed.tsv") + "'";
  }

  static std::vector<std::string> Lines(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    for (std::string line; std::getline(in, line);) out.push_back(line);
    return out;
  }

  static inline fs::path dir_;
};

TEST_F(CliTest, VersionAndUsage) {
  const CliRun v = Exec("--version");
  EXPECT_EQ(v.status, 0);
  EXPECT_EQ(v.out, "1\n");
  const CliRun none = Exec("");
  EXPECT_EQ(none.status, 1);
  EXPECT_EQ(none.err.rfind("error:", 0), 0u) << none.err;
  const CliRun bad = Exec("expand --no-such-flag");
  EXPECT_EQ(bad.status, 1);
  EXPECT_EQ(bad.err.rfind("error:", 0), 0u);
  EXPECT_EQ(Exec("build ngram -o x.bin").status, 1);
}

TEST_F(CliTest, DataErrorsExitTwo) {
  std::ofstream(Path("bad_templates.tsv")) << "play $entity\t0.5\n";
  const CliRun r = Exec("expand --templates '" + Path("bad_templates.tsv") +
                     "' --entities '" + data_path("media/entities_listed.tsv") + "'");
  EXPECT_EQ(r.status, 2);
  EXPECT_EQ(r.err.rfind("error:", 0), 0u) << r.err;
  std::ofstream(Path("not_a_model.bin")) << "hello";
  std::ofstream(Path("q.tsv")) << "play\n";
  const CliRun m = Exec("perplexity --model '" + Path("not_a_model.bin") + "' --input '" +
                     Path("q.tsv") + "'");
  EXPECT_EQ(m.status, 2);
  EXPECT_EQ(m.err.rfind("error:", 0), 0u);
}

TEST_F(CliTest, ExpandStrata) {
  const CliRun r = Exec("expand " + Grammar());
  ASSERT_EQ(r.status, 0) << r.err;
  const auto lines = Lines(r.out);
  ASSERT_EQ(lines.size(), 36u);
  int counts[3] = {0, 0, 0};
  double sum = 0.0, prev = 1.0;
  for (const auto& l : lines) {
    const auto t1 = l.find('\t'), t2 = l.rfind('\t');
    const double p = std::stod(l.substr(t1 + 1, t2 - t1 - 1));
    EXPECT_LE(p, prev);
    prev = p;
    sum += p;
    const std::string s = l.substr(t2 + 1);
    counts[s == "head" ? 0 : s == "torso" ? 1 : 2]++;
  }
  EXPECT_NEAR(sum, 1.0, 1e-12);
  EXPECT_EQ(counts[0], 4);
  EXPECT_EQ(counts[1], 14);
  EXPECT_EQ(counts[2], 18);
  EXPECT_EQ(lines[0], "play hip hop rap\t0.36047948578001887\thead");

  std::ofstream(Path("expansion.tsv")) << r.out;
  const CliRun s = Exec("stratify --input '" + Path("expansion.tsv") + "'");
  EXPECT_EQ(s.out, r.out);
}

TEST_F(CliTest, TraceSumsToPerplexity) {
  const std::string model = Path("media.bin");
  ASSERT_EQ(Exec("build phi-rtn " + Grammar() + " --n 3 --alpha 0.1 -o '" + model + "'").status, 0);
  const std::string queries = Path("queries.tsv");
  std::ofstream(queries) << Exec("expand " + Grammar()).out;
  const CliRun trace = Exec("score --trace --model '" + model + "' --input '" + queries + "'");
  ASSERT_EQ(trace.status, 0) << trace.err;
  double total = 0.0, step_sum = 0.0;
  std::size_t events = 0;
  for (const auto& l : Lines(trace.out)) {
    std::istringstream f(l);
    std::string idx, tok, lp;
    std::getline(f, idx, '\t');
    std::getline(f, tok, '\t');
    std::getline(f, lp, '\t');
    if (tok == "total") {
      total += std::stod(lp);
    } else {
      step_sum += std::stod(lp);
      ++events;
    }
  }
  EXPECT_NEAR(step_sum, total, 1e-9);
  const CliRun ppl = Exec("perplexity --model '" + model + "' --input '" + queries + "'");
  ASSERT_EQ(ppl.status, 0);
  EXPECT_NEAR(std::stod(ppl.out), std::exp(-total / events), 1e-8);
}

TEST_F(CliTest, BuildIsDeterministic) {
  ASSERT_EQ(Exec("build phi-rtn " + Grammar() + " -o '" + Path("a.bin") + "'").status, 0);
  ASSERT_EQ(Exec("build phi-rtn " + Grammar() + " -o '" + Path("b.bin") + "'").status, 0);
  EXPECT_EQ(Slurp(Path("a.bin")), Slurp(Path("b.bin")));
  EXPECT_FALSE(Slurp(Path("a.bin")).empty());
}

TEST_F(CliTest, ArpaRoundTrip) {
  ASSERT_EQ(Exec("build ngram " + Grammar() + " --n 3 -o '" + Path("ng.bin") +
                 "' --arpa '" + Path("ng.arpa") + "'").status, 0);
  ASSERT_EQ(Exec("build ngram --from-arpa '" + Path("ng.arpa") + "' --arpa '" +
                 Path("ng2.arpa") + "'").status, 0);
  EXPECT_EQ(Slurp(Path("ng.arpa")), Slurp(Path("ng2.arpa")));
  ASSERT_EQ(Exec("prune --model '" + Path("ng.bin") + "' --theta 0 --arpa '" +
                 Path("ng0.arpa") + "'").status, 0);
  EXPECT_EQ(Slurp(Path("ng.arpa")), Slurp(Path("ng0.arpa")));
}

TEST_F(CliTest, CoverageAndCheck) {
  const CliRun c = Exec("coverage --list " + Grammar());
  ASSERT_EQ(c.status, 0) << c.err;
  const auto lines = Lines(c.out);
  ASSERT_GE(lines.size(), 4u);
  EXPECT_EQ(lines[0], "queries\t36");
  EXPECT_EQ(lines[1], "covered\t34");
  EXPECT_NE(c.out.find("uncovered\tplay on Canada\t"), std::string::npos);
  for (const char* n : {"2", "3"}) {
    const CliRun k = Exec("check " + Grammar() + " --n " + n);
    EXPECT_EQ(k.status, 0) << k.err;
  }
}

TEST_F(CliTest, SampleSeed) {
  const std::string cmd = "sample " + Grammar() + " --stratum tail -k 3";
  const CliRun a = Exec(cmd + " --seed 9");
  const CliRun b = Exec(cmd, "PHIRTN_SEED=9");
  ASSERT_EQ(a.status, 0) << a.err;
  EXPECT_EQ(a.out, b.out);
  EXPECT_EQ(Lines(a.out).size(), 3u);
  EXPECT_NE(a.out.find("\ttail\n"), std::string::npos);
  EXPECT_EQ(Exec(cmd, "PHIRTN_SEED=abc").status, 1);
  EXPECT_EQ(Exec("sample " + Grammar() + " --stratum middle").status, 1);
}

TEST_F(CliTest, Interpolate) {
  const std::string phi = Path("i_phi.bin"), ng = Path("i_ng.bin"), q = Path("i_q.tsv");
  ASSERT_EQ(Exec("build phi-rtn " + Grammar() + " -o '" + phi + "'").status, 0);
  ASSERT_EQ(Exec("build ngram " + Grammar() + " --n 2 -o '" + ng + "'").status, 0);
  std::ofstream(q) << Exec("expand " + Grammar()).out;
  const CliRun solo = Exec("perplexity --model '" + phi + "' --input '" + q + "'");
  const CliRun unit = Exec("interpolate --model '" + phi + "' --model '" + ng +
                        "' --weights 1,0 --input '" + q + "'");
  ASSERT_EQ(unit.status, 0) << unit.err;
  EXPECT_EQ(unit.out, solo.out);
  const CliRun fit = Exec("interpolate --optimize --model '" + phi + "' --main '" + ng +
                       "' --budget 0.3 --dev '" + q + "'");
  ASSERT_EQ(fit.status, 0) << fit.err;
  const auto lines = Lines(fit.out);
  ASSERT_EQ(lines.size(), 2u);
  EXPECT_NEAR(std::stod(lines[0].substr(lines[0].rfind('\t') + 1)), 0.3, 1e-12);
  EXPECT_NEAR(std::stod(lines[1].substr(lines[1].rfind('\t') + 1)), 0.7, 1e-12);
  EXPECT_EQ(Exec("interpolate --model '" + phi + "' --model '" + ng + "' --input '" + q + "'").status, 1);
}

TEST_F(CliTest, SweepAndSynth) {
  const std::string g = Path("small");
  ASSERT_EQ(Exec("synth small --seed 4 --out-dir '" + g + "'").status, 0);
  const std::string args = "sweep --grammar-dir '" + g + "' --orders 2 --dev-size 10";
  const CliRun a = Exec(args + " --jobs 1 --out '" + Path("s1.csv") + "'");
  const CliRun b = Exec(args + " --jobs 2 --out '" + Path("s2.csv") + "'");
  ASSERT_EQ(a.status, 0) << a.err;
  ASSERT_EQ(b.status, 0) << b.err;
  const std::string csv = Slurp(Path("s1.csv"));
  EXPECT_EQ(csv, Slurp(Path("s2.csv")));
  EXPECT_EQ(csv.rfind("model,params,bytes,ppl_head,ppl_torso,ppl_tail\n", 0), 0u);
  EXPECT_EQ(Lines(csv).size(), 2u + 17u);  // header, phi-RTN, 17 thresholds
}

}  // namespace
