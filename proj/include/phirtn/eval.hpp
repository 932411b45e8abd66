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
// Evaluation: a type-erased model for files of any kind, linear mixtures
// with EM weight optimization, stratified dev sets and the size versus
// perplexity sweep.

#ifndef PHIRTN_EVAL_HPP_
#define PHIRTN_EVAL_HPP_

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <memory>
#include <string>
#include <thread>
#include <utility>
#include <variant>
#include <vector>

#include "phirtn/error.hpp"
#include "phirtn/grammar.hpp"
#include "phirtn/language_model.hpp"
#include "phirtn/ngram.hpp"
#include "phirtn/phi_rtn.hpp"
#include "phirtn/serialization.hpp"
#include "phirtn/unigram_model.hpp"
#include "phirtn/vocabulary.hpp"

namespace phirtn {

// ---------------------------------------------------------------------------
// Any model

using AnyState = std::variant<UnigramModel::State, NgramState, PhiRtnState>;

class AnyModel {
 public:
  using State = AnyState;

  AnyModel(UnigramModel m) : m_(std::move(m)) {}
  AnyModel(BackoffNgramModel m) : m_(std::move(m)) {}
  AnyModel(PhiRtnModel m) : m_(std::move(m)) {}

  static AnyModel from_container(const Container& c) {
    switch (c.kind()) {
      case ModelKind::kUnigram:
        return UnigramModel::from_container(c);
      case ModelKind::kBackoffNgram:
        return BackoffNgramModel::from_container(c);
      case ModelKind::kPhiRtn:
        return PhiRtnModel::from_container(c);
    }
    throw Error("unknown model kind");
  }

  State start() const {
    return std::visit([](const auto& m) -> State { return m.start(); }, m_);
  }

  Step<State> step(const State& s, TokenId token) const {
    return std::visit(
        [&](const auto& m) -> Step<State> {
          using S = typename std::decay_t<decltype(m)>::State;
          auto r = m.step(std::get<S>(s), token);
          return {r.logprob, std::move(r.next)};
        },
        m_);
  }

  double end(const State& s) const {
    return std::visit(
        [&](const auto& m) {
          using S = typename std::decay_t<decltype(m)>::State;
          return m.end(std::get<S>(s));
        },
        m_);
  }

  const Vocabulary& vocabulary() const {
    return std::visit(
        [](const auto& m) -> const Vocabulary& { return m.vocabulary(); }, m_);
  }

  ModelKind kind() const {
    static constexpr ModelKind kKinds[] = {ModelKind::kUnigram, ModelKind::kBackoffNgram,
                                           ModelKind::kPhiRtn};
    return kKinds[m_.index()];
  }

  Container to_container() const {
    return std::visit([](const auto& m) { return m.to_container(); }, m_);
  }

  template <class M>
  const M* get_if() const {
    return std::get_if<M>(&m_);
  }

 private:
  std::variant<UnigramModel, BackoffNgramModel, PhiRtnModel> m_;
};

inline AnyModel load_model(const std::string& path) {
  return AnyModel::from_container(Container::parse(read_file(path)));
}

inline void save_model(const Container& c, const std::string& path) {
  write_file(path, c.serialize());
}

// ---------------------------------------------------------------------------
// Mixtures

inline double log_sum_exp(std::span<const double> xs) {
  double hi = kNegInf;
  for (double x : xs) hi = std::max(hi, x);
  if (hi == kNegInf) return kNegInf;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - hi);
  return hi + std::log(s);
}

struct MixtureState {
  std::vector<AnyState> parts;
  friend bool operator==(const MixtureState&, const MixtureState&) = default;
};

// P(w|h) = sum_i lambda_i P_i(w|h_i), each component advancing its own
// state. Components must share one vocabulary.
class MixtureModel {
 public:
  using State = MixtureState;

  MixtureModel(std::vector<std::shared_ptr<const AnyModel>> models,
               std::vector<double> weights)
      : models_(std::move(models)), weights_(std::move(weights)) {
    if (models_.empty()) throw Error("mixture: no components");
    if (models_.size() != weights_.size()) {
      throw Error("mixture: one weight per component required");
    }
    double sum = 0.0;
    for (double w : weights_) {
      if (!(w >= 0.0 && w <= 1.0)) throw Error("mixture: weight outside [0, 1]");
      sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw Error("mixture: weights must sum to 1");
    for (const auto& m : models_) {
      if (m->vocabulary() != models_[0]->vocabulary()) {
        throw Error("mixture: components have different vocabularies");
      }
    }
    for (double w : weights_) log_w_.push_back(w > 0.0 ? std::log(w) : kNegInf);
  }

  State start() const {
    State s;
    for (const auto& m : models_) s.parts.push_back(m->start());
    return s;
  }

  Step<State> step(const State& s, TokenId token) const {
    Step<State> out{0.0, {}};
    std::vector<double> terms(models_.size());
    for (std::size_t i = 0; i < models_.size(); ++i) {
      auto r = models_[i]->step(s.parts[i], token);
      terms[i] = log_w_[i] + r.logprob;
      out.next.parts.push_back(std::move(r.next));
    }
    out.logprob = log_sum_exp(terms);
    return out;
  }

  double end(const State& s) const {
    std::vector<double> terms(models_.size());
    for (std::size_t i = 0; i < models_.size(); ++i) {
      terms[i] = log_w_[i] + models_[i]->end(s.parts[i]);
    }
    return log_sum_exp(terms);
  }

  const Vocabulary& vocabulary() const { return models_[0]->vocabulary(); }
  const std::vector<double>& weights() const { return weights_; }

 private:
  std::vector<std::shared_ptr<const AnyModel>> models_;
  std::vector<double> weights_;
  std::vector<double> log_w_;
};

// Per-event log-probabilities of `corpus` (each sequence's tokens then
// </s>), concatenated.
template <LanguageModel M>
std::vector<double> event_logprobs(const M& lm,
                                   std::span<const std::vector<TokenId>> corpus) {
  std::vector<double> out;
  for (const auto& seq : corpus) {
    auto s = lm.start();
    for (TokenId t : seq) {
      auto r = lm.step(s, t);
      out.push_back(r.logprob);
      s = std::move(r.next);
    }
    out.push_back(lm.end(s));
  }
  return out;
}

struct WeightFit {
  std::vector<double> weights;  // free components; they sum to `budget`
  double fixed_weight = 0.0;    // 1 - budget when a fixed component exists
  std::vector<double> log_likelihood;  // initial value, then one per update
  int iterations = 0;
};

// EM for the free weights of a mixture whose optional fixed component
// keeps weight 1 - budget. `free_logprobs[i]` holds event_logprobs of free
// component i. Starts from equal shares of the budget and stops after
// `max_iterations` updates or when an update gains less than `tolerance`.
inline WeightFit optimize_weights(
    const std::vector<std::vector<double>>& free_logprobs,
    const std::vector<double>* fixed_logprobs, double budget,
    int max_iterations = 500, double tolerance = 1e-9) {
  const std::size_t k = free_logprobs.size();
  if (k == 0) throw Error("optimize_weights: no free components");
  if (!(budget > 0.0 && budget <= 1.0)) {
    throw Error("optimize_weights: budget must be in (0, 1]");
  }
  if (!fixed_logprobs && std::abs(budget - 1.0) > 1e-12) {
    throw Error("optimize_weights: budget below 1 needs a fixed component");
  }
  const std::size_t n = free_logprobs[0].size();
  if (n == 0) throw Error("optimize_weights: empty dev corpus");
  for (const auto& lp : free_logprobs) {
    if (lp.size() != n) throw Error("optimize_weights: event counts differ");
  }
  if (fixed_logprobs && fixed_logprobs->size() != n) {
    throw Error("optimize_weights: event counts differ");
  }
  WeightFit fit;
  fit.weights.assign(k, budget / static_cast<double>(k));
  fit.fixed_weight = fixed_logprobs ? 1.0 - budget : 0.0;
  const double log_fixed = fixed_logprobs ? std::log1p(-budget) : kNegInf;

  std::vector<double> terms(k + 1), resp(k);
  auto pass = [&](bool update) {
    CompensatedSum ll;
    std::vector<CompensatedSum> acc(k);
    std::vector<double> logw(k);
    for (std::size_t i = 0; i < k; ++i) {
      logw[i] = fit.weights[i] > 0.0 ? std::log(fit.weights[i]) : kNegInf;
    }
    for (std::size_t t = 0; t < n; ++t) {
      for (std::size_t i = 0; i < k; ++i) terms[i] = logw[i] + free_logprobs[i][t];
      terms[k] = fixed_logprobs ? log_fixed + (*fixed_logprobs)[t] : kNegInf;
      const double z = log_sum_exp(terms);
      if (z == kNegInf) {
        ll.add(kNegInf);
        continue;
      }
      ll.add(z);
      if (update) {
        for (std::size_t i = 0; i < k; ++i) acc[i].add(std::exp(terms[i] - z));
      }
    }
    if (update) {
      double total = 0.0;
      for (const auto& a : acc) total += a.value();
      if (total > 0.0) {
        for (std::size_t i = 0; i < k; ++i) {
          fit.weights[i] = budget * acc[i].value() / total;
        }
      }
    }
    return ll.value();
  };

  fit.log_likelihood.push_back(pass(false));
  for (int it = 0; it < max_iterations; ++it) {
    pass(true);
    fit.log_likelihood.push_back(pass(false));
    ++fit.iterations;
    const double gain = fit.log_likelihood.back() -
                        fit.log_likelihood[fit.log_likelihood.size() - 2];
    if (!(gain >= tolerance)) break;
  }
  return fit;
}

// Model-level convenience: weights for `query_models` sharing `budget`,
// with `main` (if given) fixed at 1 - budget.
inline WeightFit optimize_weights(
    std::span<const AnyModel* const> query_models,
    std::span<const std::vector<TokenId>> dev, double budget,
    const AnyModel* main = nullptr) {
  std::vector<std::vector<double>> lps;
  for (const AnyModel* m : query_models) lps.push_back(event_logprobs(*m, dev));
  std::vector<double> fixed;
  if (main) fixed = event_logprobs(*main, dev);
  return optimize_weights(lps, main ? &fixed : nullptr, budget);
}

// ---------------------------------------------------------------------------
// Dev sets

struct DevSets {
  // Indexed by Stratum.
  std::array<std::vector<std::vector<TokenId>>, 3> strata;
  std::array<std::vector<double>, 3> joint_probs;
};

// Up to `per_stratum` queries from each stratum of the ranked expansion,
// weighted by joint probability without replacement.
inline DevSets make_dev_sets(const Grammar& g,
                             std::span<const RankedQuery> ranked,
                             std::size_t per_stratum, std::uint64_t seed) {
  DevSets d;
  for (int s = 0; s < 3; ++s) {
    const auto which = static_cast<Stratum>(s);
    for (std::uint64_t idx :
         sample_stratum(ranked, which, per_stratum, seed + static_cast<std::uint64_t>(s))) {
      const ExpandedQuery q = g.query(idx);
      d.strata[s].push_back(q.tokens);
      d.joint_probs[s].push_back(q.joint_prob);
    }
  }
  return d;
}

// ---------------------------------------------------------------------------
// Sweep

struct SweepConfig {
  enum class Kind { kPhiRtn, kNgram };
  Kind kind = Kind::kNgram;
  int order = 3;
  double theta = 0.0;   // n-gram pruning threshold
  double alpha = 0.1;   // phi-RTN
};

struct SweepRecord {
  std::string model;   // "phi-rtn" or "ngram"
  std::string params;  // e.g. "n=3;theta=0.000244141"
  std::size_t bytes = 0;
  std::array<double, 3> ppl{};  // head, torso, tail
  std::size_t explicit_entries = 0;
  std::string error;  // non-empty when the configuration failed
};

inline std::string format_double(double x) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

inline std::string sweep_csv_header() {
  return "model,params,bytes,ppl_head,ppl_torso,ppl_tail\n";
}

inline std::string to_csv_row(const SweepRecord& r) {
  std::string s = r.model + "," + r.params + "," + std::to_string(r.bytes);
  for (double p : r.ppl) s += "," + format_double(p);
  return s + "\n";
}

// Failed configurations are left out.
inline std::string to_csv(std::span<const SweepRecord> records) {
  std::string s = sweep_csv_header();
  for (const auto& r : records) {
    if (r.error.empty()) s += to_csv_row(r);
  }
  return s;
}

template <LanguageModel M>
std::array<double, 3> stratum_perplexities(const M& lm, const DevSets& dev) {
  std::array<double, 3> out{};
  for (int s = 0; s < 3; ++s) {
    out[s] = perplexity(lm, std::span<const std::vector<TokenId>>(dev.strata[s])).value;
  }
  return out;
}

// Evaluates every configuration. N-gram configurations of one order share
// a single estimate and pruning analysis; independent groups run on up to
// `jobs` threads. Records come back in configuration order; a failing
// configuration gets its `error` set and the sweep goes on.
inline std::vector<SweepRecord> sweep(const Grammar& g, const DevSets& dev,
                                      std::span<const SweepConfig> configs,
                                      unsigned jobs = 1) {
  using Kind = SweepConfig::Kind;
  std::vector<SweepRecord> out(configs.size());
  // Groups: one per phi-RTN config, one per distinct n-gram order.
  std::vector<std::vector<std::size_t>> groups;
  std::vector<int> orders;
  std::vector<std::size_t> ngram_group;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    if (configs[i].kind == Kind::kPhiRtn) {
      groups.push_back({i});
      continue;
    }
    auto it = std::find(orders.begin(), orders.end(), configs[i].order);
    if (it == orders.end()) {
      orders.push_back(configs[i].order);
      ngram_group.push_back(groups.size());
      groups.push_back({i});
    } else {
      groups[ngram_group[it - orders.begin()]].push_back(i);
    }
  }

  auto describe = [&](std::size_t i) {
    SweepRecord r;
    const SweepConfig& c = configs[i];
    if (c.kind == Kind::kPhiRtn) {
      r.model = "phi-rtn";
      r.params = "n=" + std::to_string(c.order) + ";alpha=" + format_double(c.alpha);
    } else {
      r.model = "ngram";
      r.params = "n=" + std::to_string(c.order) + ";theta=" + format_double(c.theta);
    }
    return r;
  };
  auto fail_all = [&](const std::vector<std::size_t>& grp, const char* what) {
    for (std::size_t i : grp) {
      if (out[i].model.empty()) {
        out[i] = describe(i);
        out[i].error = what;
      }
    }
  };
  auto build_group = [&](const std::vector<std::size_t>& grp) {
    const SweepConfig& c0 = configs[grp[0]];
    if (c0.kind == Kind::kPhiRtn) {
      PhiRtnOptions o;
      o.order = c0.order;
      o.alpha = c0.alpha;
      const PhiRtnModel m = build_phi_rtn(g, o);
      SweepRecord r = describe(grp[0]);
      r.bytes = m.to_container().byte_size();
      r.ppl = stratum_perplexities(m, dev);
      out[grp[0]] = std::move(r);
      return;
    }
    const BackoffNgramModel full =
        estimate_witten_bell(WeightedCorpus::from_grammar(g), c0.order);
    const EntropyPruner pruner(full);
    for (std::size_t i : grp) {
      SweepRecord r = describe(i);
      try {
        const BackoffNgramModel m = pruner.prune(configs[i].theta);
        r.bytes = m.to_container().byte_size();
        r.explicit_entries = m.explicit_count();
        r.ppl = stratum_perplexities(m, dev);
      } catch (const std::exception& e) {
        r.error = e.what();
      }
      out[i] = std::move(r);
    }
  };
  auto run_group = [&](const std::vector<std::size_t>& grp) {
    try {
      build_group(grp);
    } catch (const std::exception& e) {
      fail_all(grp, e.what());
    }
  };

  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(groups.size())));
  if (jobs == 1) {
    for (const auto& grp : groups) run_group(grp);
    return out;
  }
  // Groups write disjoint records, so no locking is needed.
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (unsigned j = 0; j < jobs; ++j) {
    pool.emplace_back([&] {
      for (std::size_t gi; (gi = next.fetch_add(1)) < groups.size();) {
        run_group(groups[gi]);
      }
    });
  }
  for (auto& t : pool) t.join();
  return out;
}

// The default grid: phi-RTN and n-grams of orders 2..4, each n-gram order
// at every pruning threshold.
inline std::vector<SweepConfig> default_sweep_configs(
    std::span<const int> orders, double alpha) {
  std::vector<SweepConfig> out;
  for (int n : orders) {
    out.push_back({SweepConfig::Kind::kPhiRtn, n, 0.0, alpha});
    for (double th : pruning_thresholds()) {
      out.push_back({SweepConfig::Kind::kNgram, n, th, alpha});
    }
  }
  return out;
}

}  // namespace phirtn

template <>
struct std::hash<phirtn::MixtureState> {
  std::size_t operator()(const phirtn::MixtureState& s) const {
    std::size_t h = 0;
    for (const auto& p : s.parts) {
      h = h * 1000003u ^ std::hash<phirtn::AnyState>()(p);
    }
    return h;
  }
};

#endif  // PHIRTN_EVAL_HPP_
