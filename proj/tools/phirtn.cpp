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
// Command-line front end. Exit status: 0 success, 1 usage error, 2 data or
// validation error. Diagnostics go to stderr prefixed with "error:".

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "phirtn/phirtn.hpp"

namespace {

using namespace phirtn;

// Usage problems found after flag parsing (conflicting or missing inputs).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::uint64_t default_seed() {
  if (const char* s = std::getenv("PHIRTN_SEED")) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(s, &end, 10);
    if (end != s && *end == '\0') return v;
    throw UsageError("PHIRTN_SEED is not an unsigned integer: '" + std::string(s) + "'");
  }
  return 1;
}

std::string fmt(double x, const char* spec = "%.17g") {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[48];
  std::snprintf(buf, sizeof buf, spec, x);
  return buf;
}

// Output sink: a file when a path is given, stdout otherwise.
class Output {
 public:
  explicit Output(const std::string& path) {
    if (path.empty() || path == "-") return;
    file_ = std::make_unique<std::ofstream>(path, std::ios::binary);
    if (!*file_) throw Error("cannot open '" + path + "' for writing");
  }
  std::ostream& operator*() { return file_ ? *file_ : std::cout; }
  void close() {
    std::ostream& o = **this;
    o.flush();
    if (!o) throw Error("write failed");
  }

 private:
  std::unique_ptr<std::ofstream> file_;
};

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> out;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    auto line = text.substr(0, nl);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    out.push_back(line);
    if (nl == std::string_view::npos) break;
    text.remove_prefix(nl + 1);
  }
  return out;
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  while (true) {
    const auto t = line.find('\t');
    out.push_back(line.substr(0, t));
    if (t == std::string_view::npos) return out;
    line.remove_prefix(t + 1);
  }
}

double parse_double(std::string_view s, std::size_t line) {
  const std::string str(s);
  char* end = nullptr;
  const double v = std::strtod(str.c_str(), &end);
  if (str.empty() || *end != '\0') {
    throw ParseError(line, "not a number: '" + str + "'");
  }
  return v;
}

// Query text in the first tab-separated column; blank and '#' lines skipped.
std::vector<std::vector<TokenId>> read_queries(const std::string& path,
                                               const Vocabulary& vocab) {
  std::vector<std::vector<TokenId>> out;
  const std::string text = read_text_file(path);
  for (auto line : split_lines(text)) {
    if (line.empty() || line.front() == '#') continue;
    out.push_back(vocab.map(split_tabs(line)[0]));
  }
  return out;
}

// --- shared option groups -------------------------------------------------

struct GrammarFlags {
  std::string templates, entities, nonterminal{Vocabulary::kDefaultNonterminal};
  double tolerance = 1e-6;

  void add(CLI::App* app, bool required = true) {
    app->add_option("--templates", templates, "template TSV")->required(required)->check(CLI::ExistingFile);
    app->add_option("--entities", entities, "entity TSV")->required(required)->check(CLI::ExistingFile);
    app->add_option("--nonterminal", nonterminal, "slot symbol")->capture_default_str();
    app->add_option("--tolerance", tolerance, "probability sum tolerance")->capture_default_str();
  }
  bool given() const { return !templates.empty() || !entities.empty(); }
  Grammar load() const {
    if (templates.empty() || entities.empty()) {
      throw UsageError("--templates and --entities go together");
    }
    GrammarOptions o;
    o.sum_tolerance = tolerance;
    return parse_grammar(read_text_file(templates), read_text_file(entities),
                         nonterminal, o);
  }
};

struct PhiFlags {
  int order = 3;
  double alpha = 0.1;
  void add(CLI::App* app) {
    app->add_option("-n,--n", order, "entity n-gram order")->capture_default_str()->check(CLI::Range(2, 255));
    app->add_option("--alpha", alpha, "entity exit mass")->capture_default_str();
  }
  PhiRtnOptions options() const {
    PhiRtnOptions o;
    o.order = order;
    o.alpha = alpha;
    return o;
  }
};

Stratum stratum_flag(const std::string& s) {
  try {
    return parse_stratum(s);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
}

// --- subcommands ------------------------------------------------------------

void write_ranked(std::ostream& out, const Grammar& g,
                  std::span<const RankedQuery> ranked) {
  const auto& v = g.vocabulary();
  std::vector<TokenId> toks;
  for (std::size_t r = 0; r < ranked.size(); ++r) {
    g.tokens_of(g.derivation(ranked[r].index), toks);
    out << v.join(toks) << '\t' << fmt(ranked[r].joint_prob) << '\t'
        << to_string(stratum_of_rank(r, ranked.size())) << '\n';
  }
}

int cmd_expand(const GrammarFlags& gf, const std::string& out_path) {
  const Grammar g = gf.load();
  Output out(out_path);
  write_ranked(*out, g, rank_expansion(g));
  out.close();
  return 0;
}

// Re-ranks "<query>\t<prob>[\t...]" lines and writes them in rank order
// with a fresh stratum column.
int cmd_stratify(const std::string& in_path, const std::string& out_path) {
  Vocabulary vocab;
  std::vector<ExpandedQuery> qs;
  std::vector<std::string> text;
  std::size_t n = 0;
  const std::string raw = read_text_file(in_path);
  for (auto line : split_lines(raw)) {
    ++n;
    if (line.empty() || line.front() == '#') continue;
    const auto f = split_tabs(line);
    if (f.size() < 2) throw ParseError(n, "expected <query>\\t<prob>");
    ExpandedQuery q;
    std::istringstream words{std::string(f[0])};
    for (std::string w; words >> w;) q.tokens.push_back(vocab.insert(w));
    q.joint_prob = parse_double(f[1], n);
    if (!(q.joint_prob >= 0.0)) throw ParseError(n, "negative probability");
    q.index = qs.size();
    qs.push_back(std::move(q));
    text.emplace_back(f[0]);
  }
  const auto strata = stratify(qs, vocab);
  std::vector<std::size_t> order;
  for (int s = 0; s < 3; ++s) {
    std::vector<std::size_t> part;
    for (std::size_t i = 0; i < qs.size(); ++i) {
      if (strata[i] == static_cast<Stratum>(s)) part.push_back(i);
    }
    std::stable_sort(part.begin(), part.end(), [&](std::size_t a, std::size_t b) {
      if (qs[a].joint_prob != qs[b].joint_prob) return qs[a].joint_prob > qs[b].joint_prob;
      return detail::words_less(vocab, qs[a].tokens, qs[b].tokens);
    });
    order.insert(order.end(), part.begin(), part.end());
  }
  Output out(out_path);
  for (std::size_t i : order) {
    *out << text[i] << '\t' << fmt(qs[i].joint_prob) << '\t'
         << to_string(strata[i]) << '\n';
  }
  out.close();
  return 0;
}

int cmd_sample(const GrammarFlags& gf, const std::string& which, std::size_t k,
               std::uint64_t seed, const std::string& out_path) {
  const Grammar g = gf.load();
  const auto ranked = rank_expansion(g);
  std::vector<Stratum> strata;
  if (which == "all") {
    strata = {Stratum::kHead, Stratum::kTorso, Stratum::kTail};
  } else {
    strata = {stratum_flag(which)};
  }
  const auto& v = g.vocabulary();
  Output out(out_path);
  for (Stratum s : strata) {
    const auto idx = sample_stratum(ranked, s,
                                    k, seed + static_cast<std::uint64_t>(s));
    for (std::uint64_t i : idx) {
      const ExpandedQuery q = g.query(i);
      *out << v.join(q.tokens) << '\t' << fmt(q.joint_prob) << '\t'
           << to_string(s) << '\n';
    }
  }
  out.close();
  return 0;
}

int cmd_build_phi(const GrammarFlags& gf, const PhiFlags& pf,
                  const std::string& out_path) {
  const PhiRtnModel m = build_phi_rtn(gf.load(), pf.options());
  const Container c = m.to_container();
  save_model(c, out_path);
  std::cerr << "phi-rtn: " << c.byte_size() << " bytes\n";
  return 0;
}

WeightedCorpus read_corpus(const std::string& path) {
  Vocabulary vocab;
  std::vector<WeightedSentence> out;
  std::size_t n = 0;
  const std::string text = read_text_file(path);
  for (auto line : split_lines(text)) {
    ++n;
    if (line.empty() || line.front() == '#') continue;
    const auto f = split_tabs(line);
    WeightedSentence s;
    std::istringstream words{std::string(f[0])};
    for (std::string w; words >> w;) {
      if (w == Vocabulary::kEosWord || w == Vocabulary::kBosWord ||
          w == Vocabulary::kUnkWord) {
        throw ParseError(n, "reserved token '" + w + "'");
      }
      s.tokens.push_back(vocab.insert(w));
    }
    if (f.size() > 1) s.count = parse_double(f[1], n);
    if (!(s.count > 0.0)) throw ParseError(n, "count must be positive");
    out.push_back(std::move(s));
  }
  return WeightedCorpus(std::move(vocab), std::move(out));
}

void save_ngram(const BackoffNgramModel& m, const std::string& out_path,
                const std::string& arpa_path) {
  if (!out_path.empty()) save_model(m.to_container(), out_path);
  if (!arpa_path.empty()) {
    Output a(arpa_path);
    *a << m.to_arpa();
    a.close();
  }
  std::cerr << "ngram: " << m.explicit_count() << " explicit entries, "
            << m.to_container().byte_size() << " bytes\n";
}

int cmd_build_ngram(const GrammarFlags& gf, const std::string& corpus,
                    const std::string& from_arpa, int order, bool interpolate,
                    const std::string& out_path, const std::string& arpa_path) {
  const int sources = gf.given() + !corpus.empty() + !from_arpa.empty();
  if (sources != 1) {
    throw UsageError("give exactly one of --templates/--entities, --corpus, --from-arpa");
  }
  if (out_path.empty() && arpa_path.empty()) {
    throw UsageError("nothing to write; give -o and/or --arpa");
  }
  if (!from_arpa.empty()) {
    save_ngram(BackoffNgramModel::from_arpa(read_text_file(from_arpa)), out_path,
               arpa_path);
    return 0;
  }
  WittenBellOptions o;
  o.interpolate = interpolate;
  const BackoffNgramModel m =
      gf.given() ? estimate_witten_bell(WeightedCorpus::from_grammar(gf.load()), order, o)
                 : estimate_witten_bell(read_corpus(corpus), order, o);
  save_ngram(m, out_path, arpa_path);
  return 0;
}

BackoffNgramModel load_ngram(const std::string& path) {
  AnyModel m = load_model(path);
  const auto* ng = m.get_if<BackoffNgramModel>();
  if (!ng) throw Error("'" + path + "' is not an n-gram model");
  return *ng;
}

int cmd_prune(const std::string& in, double theta, const std::string& out_path,
              const std::string& arpa_path) {
  if (out_path.empty() && arpa_path.empty()) {
    throw UsageError("nothing to write; give -o and/or --arpa");
  }
  save_ngram(entropy_prune(load_ngram(in), theta), out_path, arpa_path);
  return 0;
}

// Mixture over the --model list; a single model scores as itself.
MixtureModel load_mixture(const std::vector<std::string>& paths,
                          std::vector<double> weights) {
  std::vector<std::shared_ptr<const AnyModel>> ms;
  for (const auto& p : paths) ms.push_back(std::make_shared<const AnyModel>(load_model(p)));
  if (weights.empty()) {
    if (ms.size() != 1) throw UsageError("--weights required with several models");
    weights = {1.0};
  }
  if (weights.size() != ms.size()) throw UsageError("one weight per model required");
  return MixtureModel(std::move(ms), std::move(weights));
}

int cmd_score(const std::string& model, const std::string& input, bool trace,
              const std::string& out_path) {
  const AnyModel m = load_model(model);
  const auto qs = read_queries(input, m.vocabulary());
  const auto& v = m.vocabulary();
  Output out(out_path);
  for (std::size_t i = 0; i < qs.size(); ++i) {
    std::vector<double> steps;
    const double lp = sequence_logprob(m, std::span<const TokenId>(qs[i]), &steps);
    if (trace) {
      for (std::size_t j = 0; j < steps.size(); ++j) {
        const std::string w = j < qs[i].size() ? v.word(qs[i][j])
                                               : std::string(Vocabulary::kEosWord);
        *out << i << '\t' << w << '\t' << fmt(steps[j]) << '\n';
      }
    }
    *out << (trace ? std::to_string(i) + "\ttotal\t" : v.join(qs[i]) + '\t')
         << fmt(lp) << '\n';
  }
  out.close();
  return 0;
}

template <LanguageModel M>
int print_perplexity(const M& m, const std::string& input) {
  const auto qs = read_queries(input, m.vocabulary());
  const auto r = perplexity(m, std::span<const std::vector<TokenId>>(qs));
  std::cout << fmt(r.value, "%.10g") << '\n';
  if (r.is_infinite()) {
    std::cerr << "warning: " << r.infinite.size()
              << " queries have probability zero\n";
  }
  return 0;
}

int cmd_perplexity(const std::string& model, const std::string& input) {
  return print_perplexity(load_model(model), input);
}

int cmd_sweep(const std::string& dir, const std::string& out_path,
              const std::vector<int>& orders, double alpha, std::size_t dev_size,
              std::uint64_t seed, unsigned jobs) {
  namespace fs = std::filesystem;
  const fs::path d(dir);
  const Grammar g = parse_grammar(read_text_file((d / "templates.tsv").string()),
                                  read_text_file((d / "entities.tsv").string()));
  const auto ranked = rank_expansion(g);
  const DevSets dev = make_dev_sets(g, ranked, dev_size, seed);
  const auto configs = default_sweep_configs(orders, alpha);
  const auto records = sweep(g, dev, configs, jobs);
  Output out(out_path);
  *out << to_csv(records);
  out.close();
  int failed = 0;
  for (const auto& r : records) {
    if (r.error.empty()) continue;
    ++failed;
    std::cerr << "error: " << r.model << " " << r.params << ": " << r.error << '\n';
  }
  return failed ? 2 : 0;
}

int cmd_interpolate(const std::vector<std::string>& models,
                    std::vector<double> weights, bool optimize,
                    const std::string& main, double budget,
                    const std::string& dev_path, const std::string& input) {
  if (!optimize) {
    if (input.empty()) throw UsageError("--input required");
    if (!main.empty()) throw UsageError("--main only applies with --optimize");
    return print_perplexity(load_mixture(models, std::move(weights)), input);
  }
  if (dev_path.empty()) throw UsageError("--optimize needs --dev");
  if (!weights.empty()) throw UsageError("--weights conflicts with --optimize");
  std::vector<AnyModel> free;
  for (const auto& p : models) free.push_back(load_model(p));
  std::optional<AnyModel> fixed;
  if (!main.empty()) fixed = load_model(main);
  const auto dev = read_queries(dev_path, free.front().vocabulary());
  std::vector<const AnyModel*> ptrs;
  for (const auto& m : free) ptrs.push_back(&m);
  const WeightFit fit = optimize_weights(ptrs, dev, fixed ? budget : 1.0,
                                         fixed ? &*fixed : nullptr);
  for (std::size_t i = 0; i < models.size(); ++i) {
    std::cout << models[i] << '\t' << fmt(fit.weights[i]) << '\n';
  }
  if (fixed) std::cout << main << '\t' << fmt(fit.fixed_weight) << '\n';
  std::cerr << "em: " << fit.iterations << " iterations, log-likelihood "
            << fmt(fit.log_likelihood.back(), "%.10g") << '\n';
  if (!input.empty()) {
    std::vector<std::string> all = models;
    std::vector<double> w = fit.weights;
    if (fixed) {
      all.push_back(main);
      w.push_back(fit.fixed_weight);
    }
    std::cout << "perplexity\t";
    return print_perplexity(load_mixture(all, w), input);
  }
  return 0;
}

int cmd_coverage(const GrammarFlags& gf, const PhiFlags& pf, bool list) {
  const Grammar g = gf.load();
  const PhiRtnModel m = build_phi_rtn(g, pf.options());
  const CoverageReport r = coverage(m, g);
  std::cout << "queries\t" << r.queries << "\ncovered\t" << r.covered
            << "\nfraction\t" << fmt(r.fraction(), "%.10g")
            << "\nweighted\t" << fmt(r.weighted_fraction(), "%.10g") << '\n';
  if (list) {
    CollisionDetector det(g, pf.order);
    const auto& v = g.vocabulary();
    for (std::uint64_t i : r.uncovered) {
      const Derivation d = g.derivation(i);
      const auto c = det.check(d);
      std::vector<TokenId> toks;
      g.tokens_of(d, toks);
      std::cout << "uncovered\t" << v.join(toks) << '\t'
                << (c ? det.describe(*c) : std::string("-")) << '\n';
    }
  }
  return 0;
}

// Normalization over every reachable state and agreement with the
// brute-force oracle on every query.
int cmd_check(const GrammarFlags& gf, const PhiFlags& pf, double tolerance,
              std::size_t state_limit) {
  const Grammar g = gf.load();
  const PhiRtnModel m = build_phi_rtn(g, pf.options());
  OracleOptions oo;
  oo.order = pf.order;
  oo.alpha = pf.alpha;
  const OracleModel o = build_oracle(g, oo);
  const auto states = reachable_states(m, state_limit);
  const auto norm = check_normalization(m, std::span<const PhiRtnState>(states), tolerance);
  double worst = 0.0;
  std::uint64_t mismatches = 0;
  g.for_each_query([&](std::span<const TokenId> toks, double, std::uint64_t) {
    const double d = std::abs(sequence_logprob(m, toks) - sequence_logprob(o, toks));
    if (!(d <= tolerance)) ++mismatches;
    if (!(d <= worst)) worst = d;
  });
  std::cout << "states\t" << norm.states << "\nmax_mass_deviation\t"
            << fmt(norm.max_deviation, "%.3g") << "\nqueries\t"
            << g.expansion_size() << "\nmax_oracle_difference\t"
            << fmt(worst, "%.3g") << '\n';
  if (!norm.ok() || mismatches) {
    std::cerr << "error: check failed: " << norm.violations
              << " unnormalized states, " << mismatches
              << " queries differ from the oracle\n";
    return 2;
  }
  return 0;
}

int cmd_synth(const std::string& kind, const std::string& dir, std::uint64_t seed,
              std::size_t templates, std::size_t entities) {
  Grammar g = [&] {
    if (kind == "desk") {
      DeskGrammarOptions o;
      o.seed = seed;
      if (templates) o.templates = templates;
      if (entities) o.entities = entities;
      return desk_grammar(o);
    }
    SmallGrammarOptions o;
    if (templates) o.max_templates = templates;
    if (entities) o.max_entities = entities;
    return random_small_grammar(seed, o);
  }();
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  for (auto [name, text] : {std::pair{"templates.tsv", g.templates_text()},
                            std::pair{"entities.tsv", g.entities_text()}}) {
    Output out((fs::path(dir) / name).string());
    *out << text;
    out.close();
  }
  return 0;
}

int run(int argc, char** argv) {
  CLI::App app{"phirtn: entity-aware finite-state language models"};
  app.set_version_flag("--version", std::to_string(kFormatVersion),
                       "print the model file format version");
  app.require_subcommand(1);
  app.allow_extras(false);
  std::uint64_t seed = default_seed();
  int rc = 0;

  GrammarFlags gf;
  PhiFlags pf;
  std::string out_path, input, model;

  auto* expand = app.add_subcommand("expand", "rank-ordered expansion as TSV");
  gf.add(expand);
  expand->add_option("-o,--out", out_path, "output file (default stdout)");
  expand->callback([&] { rc = cmd_expand(gf, out_path); });

  auto* strat = app.add_subcommand("stratify", "assign head/torso/tail to query TSV");
  strat->add_option("--input", input, "<query>\\t<prob> lines")->required()->check(CLI::ExistingFile);
  strat->add_option("-o,--out", out_path, "output file (default stdout)");
  strat->callback([&] { rc = cmd_stratify(input, out_path); });

  std::string which = "all";
  std::size_t k = 10'000;
  auto* sample = app.add_subcommand("sample", "weighted sample of one or all strata");
  gf.add(sample);
  sample->add_option("--stratum", which, "head, torso, tail or all")->capture_default_str();
  sample->add_option("-k,--size", k, "queries per stratum")->capture_default_str();
  sample->add_option("--seed", seed, "random seed (default $PHIRTN_SEED or 1)");
  sample->add_option("-o,--out", out_path, "output file (default stdout)");
  sample->callback([&] { rc = cmd_sample(gf, which, k, seed, out_path); });

  auto* build = app.add_subcommand("build", "build a model file");
  build->require_subcommand(1);
  auto* bphi = build->add_subcommand("phi-rtn", "phi-RTN from a grammar");
  gf.add(bphi);
  pf.add(bphi);
  bphi->add_option("-o,--out", out_path, "model file")->required();
  bphi->callback([&] { rc = cmd_build_phi(gf, pf, out_path); });

  std::string corpus, from_arpa, arpa_out;
  bool interpolate = false;
  auto* bng = build->add_subcommand("ngram", "Witten-Bell back-off n-gram");
  gf.add(bng, false);
  bng->add_option("--corpus", corpus, "<sentence>[\\t<count>] lines")->check(CLI::ExistingFile);
  bng->add_option("--from-arpa", from_arpa, "import an ARPA file instead")->check(CLI::ExistingFile);
  bng->add_option("-n,--n", pf.order, "order")->capture_default_str()->check(CLI::Range(1, 255));
  bng->add_flag("--interpolate", interpolate, "interpolated Witten-Bell");
  bng->add_option("-o,--out", out_path, "model file");
  bng->add_option("--arpa", arpa_out, "also write ARPA text");
  bng->callback([&] {
    rc = cmd_build_ngram(gf, corpus, from_arpa, pf.order, interpolate, out_path, arpa_out);
  });

  double theta = 0.0;
  auto* prune = app.add_subcommand("prune", "relative-entropy pruning of an n-gram");
  prune->add_option("--model", model, "n-gram model file")->required()->check(CLI::ExistingFile);
  prune->add_option("--theta", theta, "threshold")->required();
  prune->add_option("-o,--out", out_path, "model file");
  prune->add_option("--arpa", arpa_out, "also write ARPA text");
  prune->callback([&] { rc = cmd_prune(model, theta, out_path, arpa_out); });

  bool trace = false;
  auto* score = app.add_subcommand("score", "natural-log probability per query");
  score->add_option("--model", model, "model file")->required()->check(CLI::ExistingFile);
  score->add_option("--input", input, "queries, first TSV column")->required()->check(CLI::ExistingFile);
  score->add_flag("--trace", trace, "one line per token and a total per query");
  score->add_option("-o,--out", out_path, "output file (default stdout)");
  score->callback([&] { rc = cmd_score(model, input, trace, out_path); });

  auto* ppl = app.add_subcommand("perplexity", "perplexity of a query file");
  ppl->add_option("--model", model, "model file")->required()->check(CLI::ExistingFile);
  ppl->add_option("--input", input, "queries, first TSV column")->required()->check(CLI::ExistingFile);
  ppl->callback([&] { rc = cmd_perplexity(model, input); });

  std::string grammar_dir;
  std::vector<int> orders{2, 3, 4};
  double alpha = 0.1;
  std::size_t dev_size = 10'000;
  unsigned jobs = 1;
  auto* sw = app.add_subcommand("sweep", "size versus perplexity CSV");
  sw->add_option("--grammar-dir", grammar_dir, "directory with templates.tsv and entities.tsv")
      ->required()->check(CLI::ExistingDirectory);
  sw->add_option("--out", out_path, "CSV file (default stdout)");
  sw->add_option("--orders", orders, "n-gram orders")->delimiter(',')->capture_default_str();
  sw->add_option("--alpha", alpha, "phi-RTN alpha")->capture_default_str();
  sw->add_option("--dev-size", dev_size, "queries per stratum")->capture_default_str();
  sw->add_option("--seed", seed, "random seed (default $PHIRTN_SEED or 1)");
  sw->add_option("--jobs", jobs, "worker threads")->capture_default_str()->check(CLI::PositiveNumber);
  sw->callback([&] {
    rc = cmd_sweep(grammar_dir, out_path, orders, alpha, dev_size, seed, jobs);
  });

  std::vector<std::string> models;
  std::vector<double> weights;
  bool optimize = false;
  std::string main_model, dev_path;
  double budget = 0.05;
  auto* interp = app.add_subcommand("interpolate", "linear mixtures");
  interp->add_option("--model", models, "component model (repeatable)")->required()->check(CLI::ExistingFile);
  interp->add_option("--weights", weights, "one weight per --model")->delimiter(',');
  interp->add_option("--input", input, "queries to score")->check(CLI::ExistingFile);
  interp->add_flag("--optimize", optimize, "fit weights by EM on --dev");
  interp->add_option("--dev", dev_path, "dev queries for --optimize")->check(CLI::ExistingFile);
  interp->add_option("--main", main_model, "fixed component for --optimize")->check(CLI::ExistingFile);
  interp->add_option("--budget", budget, "total weight of the --model list")->capture_default_str();
  interp->callback([&] {
    rc = cmd_interpolate(models, weights, optimize, main_model, budget, dev_path, input);
  });

  bool list = false;
  auto* cov = app.add_subcommand("coverage", "queries that follow their intended path");
  gf.add(cov);
  pf.add(cov);
  cov->add_flag("--list", list, "print each uncovered query and its collision");
  cov->callback([&] { rc = cmd_coverage(gf, pf, list); });

  double tolerance = 1e-9;
  std::size_t state_limit = 100'000;
  auto* check = app.add_subcommand("check", "normalization and oracle agreement");
  gf.add(check);
  pf.add(check);
  check->add_option("--max-diff", tolerance, "tolerance")->capture_default_str();
  check->add_option("--state-limit", state_limit, "reachable state cap")->capture_default_str();
  check->callback([&] { rc = cmd_check(gf, pf, tolerance, state_limit); });

  std::string kind = "desk", dir;
  std::size_t n_templates = 0, n_entities = 0;
  auto* synth = app.add_subcommand("synth", "write a synthetic grammar");
  synth->add_option("kind", kind, "desk or small")->check(CLI::IsMember({"desk", "small"}))->capture_default_str();
  synth->add_option("--out-dir", dir, "output directory")->required();
  synth->add_option("--seed", seed, "random seed (default $PHIRTN_SEED or 1)");
  synth->add_option("--templates", n_templates, "template count");
  synth->add_option("--entities", n_entities, "entity count");
  synth->callback([&] { rc = cmd_synth(kind, dir, seed, n_templates, n_entities); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return rc;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
