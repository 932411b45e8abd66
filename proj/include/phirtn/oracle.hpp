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
// Brute-force reference for the phi-RTN semantics, for testing only.
//
// The entity network is substituted into every slot site, giving one
// explicit state per (return site, entity context) pair, and the complete
// distribution of every state is tabulated over all events. Phi mass is
// normalized by summing the target distribution over the events that are
// not explicit, instead of the 1 - sum(explicit) shortcut the model uses.
// The unigram table is counted over the full expansion. States are keyed
// by token strings and none of the model's data structures are reused.
//
// Also: a normalization checker and a bounded exhaustive sequence-mass sum
// that work on any LanguageModel.

#ifndef PHIRTN_ORACLE_HPP_
#define PHIRTN_ORACLE_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <deque>
#include <map>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "phirtn/error.hpp"
#include "phirtn/grammar.hpp"
#include "phirtn/language_model.hpp"
#include "phirtn/vocabulary.hpp"

namespace phirtn {

struct OracleOptions {
  double alpha = 0.1;
  int order = 3;
  double unigram_epsilon = 1e-10;
  std::size_t max_arcs = 1'000'000;  // explicit arcs after substitution
};

class OracleModel {
 public:
  using State = std::uint32_t;

  OracleModel(const Grammar& g, const OracleOptions& options)
      : vocab_(g.vocabulary()), opt_(options) {
    if (!(opt_.alpha > 0.0 && opt_.alpha < 1.0)) {
      throw BuildError("oracle: alpha must be in (0, 1)");
    }
    if (opt_.order < 2) throw BuildError("oracle: order must be >= 2");
    CountTemplates(g);
    CountEntities(g);
    CountUnigram(g);
    Materialize();
  }

  State start() const { return start_; }

  Step<State> step(State s, TokenId token) const {
    const TokenId w = vocab_.scorable(token);
    return {Log(dist_[s][w]), next_[s][w]};
  }

  double end(State s) const { return Log(dist_[s][Vocabulary::kEos]); }

  const Vocabulary& vocabulary() const { return vocab_; }

  std::size_t state_count() const { return keys_.size(); }
  std::size_t arc_count() const { return arc_count_; }
  const std::string& key(State s) const { return keys_[s]; }
  double unigram(TokenId w) const { return unigram_[w]; }

  // Intended derivation: template words on template arcs, each slot entered
  // through the template state's phi transition and left through the
  // entity state's phi transition, regardless of precedence.
  double intended_logprob(const Grammar& g, const Derivation& d) const {
    const auto& words = vocab_.words();
    std::string prefix;
    double lp = 0.0;
    std::size_t slot = 0;
    const auto& toks = g.templates()[d.template_index].tokens;
    for (std::size_t i = 0; i < toks.size(); ++i) {
      const State t = Lookup(TemplateKey(prefix));
      if (toks[i] != Vocabulary::kNonterminal) {
        lp += Log(dist_[t][toks[i]]);
        prefix = Extend(prefix, words[toks[i]]);
        continue;
      }
      // Phi factor at the template state, then the entity's own arcs.
      const std::string site = Extend(prefix, vocab_.nonterminal());
      lp += std::log(phi_scale_[t]);
      std::string ctx;
      for (TokenId w : g.entities()[d.entities[slot]].tokens) {
        lp += Log(entity_arc_.at(ctx).at(w));
        ctx = Truncate(Extend(ctx, words[w]));
      }
      ++slot;
      const State e = Lookup(EntityKey(site, ctx));
      lp += std::log(phi_scale_[e]);
      prefix = site;
      const TokenId after =
          i + 1 < toks.size() ? toks[i + 1] : Vocabulary::kEos;
      lp += Log(dist_[Lookup(TemplateKey(prefix))][after]);
      if (after == Vocabulary::kEos) return lp;
      prefix = Extend(prefix, words[after]);
      ++i;
    }
    return lp + Log(dist_[Lookup(TemplateKey(prefix))][Vocabulary::kEos]);
  }

  // One line per (state, event) with nonzero probability.
  std::string dump_tsv() const {
    std::string out = "state\tevent\tprob\tnext\n";
    char buf[64];
    for (State s = 0; s < keys_.size(); ++s) {
      for (TokenId w = 0; w < vocab_.size(); ++w) {
        if (dist_[s][w] <= 0.0) continue;
        std::snprintf(buf, sizeof buf, "%.17g", dist_[s][w]);
        out += keys_[s] + '\t' + vocab_.word(w) + '\t' + buf + '\t' +
               (w == Vocabulary::kEos ? std::string("-")
                                      : keys_[next_[s][w]]) +
               '\n';
      }
    }
    return out;
  }

 private:
  static double Log(double p) { return p > 0.0 ? std::log(p) : kNegInf; }

  static std::string Extend(const std::string& prefix, const std::string& w) {
    return prefix.empty() ? w : prefix + ' ' + w;
  }
  static std::string TemplateKey(const std::string& prefix) {
    return "T[" + prefix + "]";
  }
  static std::string EntityKey(const std::string& site,
                               const std::string& ctx) {
    return "E[" + site + "][" + ctx + "]";
  }

  // Keeps the last order - 1 words of a context.
  std::string Truncate(const std::string& ctx) const {
    std::vector<std::string> parts;
    std::size_t pos = 0;
    while (pos <= ctx.size()) {
      const std::size_t sp = std::min(ctx.find(' ', pos), ctx.size());
      parts.push_back(ctx.substr(pos, sp - pos));
      pos = sp + 1;
    }
    const std::size_t keep = static_cast<std::size_t>(opt_.order - 1);
    std::string out;
    for (std::size_t i = parts.size() > keep ? parts.size() - keep : 0;
         i < parts.size(); ++i) {
      out = Extend(out, parts[i]);
    }
    return out;
  }

  State Lookup(const std::string& key) const {
    const auto it = index_.find(key);
    if (it == index_.end()) throw Error("oracle: no state " + key);
    return it->second;
  }

  void CountTemplates(const Grammar& g) {
    const auto& words = vocab_.words();
    for (const auto& t : g.templates()) {
      std::string prefix;
      for (TokenId tok : t.tokens) {
        tmass_[prefix] += t.prob;
        if (tok == Vocabulary::kNonterminal) {
          tslot_[prefix] += t.prob;
          sites_.insert(Extend(prefix, words[tok]));
        } else {
          tword_[prefix][tok] += t.prob;
        }
        prefix = Extend(prefix, words[tok]);
      }
      tmass_[prefix] += t.prob;
      tend_[prefix] += t.prob;
    }
  }

  void CountEntities(const Grammar& g) {
    const auto& words = vocab_.words();
    std::map<std::string, double> total;
    std::map<std::string, std::map<TokenId, double>> count;
    for (const auto& e : g.entities()) {
      std::string ctx;
      for (TokenId w : e.tokens) {
        total[ctx] += e.prob;
        count[ctx][w] += e.prob;
        ctx = Truncate(Extend(ctx, words[w]));
      }
      total[ctx] += e.prob;
      entity_end_[ctx] += e.prob;
    }
    const double keep = 1.0 - opt_.alpha;
    for (const auto& [ctx, tot] : total) {
      auto& arcs = entity_arc_[ctx];
      for (const auto& [w, c] : count[ctx]) arcs[w] = keep * c / tot;
      entity_final_[ctx] = entity_end_[ctx] / tot;
    }
  }

  void CountUnigram(const Grammar& g) {
    std::vector<double> counts(vocab_.size(), 0.0);
    g.for_each_query([&](std::span<const TokenId> toks, double p,
                         std::uint64_t) {
      for (TokenId w : toks) counts[w] += p;
      counts[Vocabulary::kEos] += p;
    });
    double total = 0.0;
    for (TokenId w = 0; w < vocab_.size(); ++w) {
      if (!vocab_.is_event(w)) {
        counts[w] = 0.0;
        continue;
      }
      counts[w] += opt_.unigram_epsilon;
      total += counts[w];
    }
    unigram_.resize(vocab_.size());
    for (TokenId w = 0; w < vocab_.size(); ++w) unigram_[w] = counts[w] / total;
  }

  State Add(const std::string& key) {
    const auto id = static_cast<State>(keys_.size());
    index_.emplace(key, id);
    keys_.push_back(key);
    dist_.emplace_back(vocab_.size(), 0.0);
    next_.emplace_back(vocab_.size(), 0);
    phi_scale_.push_back(0.0);
    return id;
  }

  // Fills `s` with explicit events `expl` and routes the rest through
  // `fallback` (a full distribution) scaled into `leftover`.
  void Fill(State s, const std::map<TokenId, double>& expl, double leftover,
            const std::vector<double>& fallback) {
    double z = 0.0;
    for (TokenId w = 0; w < vocab_.size(); ++w) {
      if (vocab_.is_event(w) && !expl.count(w)) z += fallback[w];
    }
    if (!(z > 0.0)) throw BuildError("oracle: no mass left at " + keys_[s]);
    phi_scale_[s] = leftover / z;
    for (TokenId w = 0; w < vocab_.size(); ++w) {
      if (!vocab_.is_event(w)) continue;
      const auto it = expl.find(w);
      dist_[s][w] = it != expl.end() ? it->second : phi_scale_[s] * fallback[w];
    }
  }

  void Materialize() {
    const auto& words = vocab_.words();
    const double alpha = opt_.alpha, keep = 1.0 - alpha;
    std::size_t planned = 0;
    for (const auto& [p, m] : tword_) planned += m.size();
    for (const auto& [c, m] : entity_arc_) planned += m.size() * sites_.size();
    if (planned > opt_.max_arcs) {
      throw Error("oracle: " + std::to_string(planned) +
                  " arcs exceed the limit of " +
                  std::to_string(opt_.max_arcs));
    }
    arc_count_ = planned;

    const State u = Add("U");
    for (TokenId w = 0; w < vocab_.size(); ++w) {
      dist_[u][w] = unigram_[w];
      next_[u][w] = u;
    }
    phi_scale_[u] = 1.0;
    for (const auto& [p, m] : tmass_) Add(TemplateKey(p));
    for (const auto& site : sites_) {
      for (const auto& [ctx, arcs] : entity_arc_) Add(EntityKey(site, ctx));
    }
    start_ = Lookup(TemplateKey(""));

    auto explicit_template = [&](const std::string& p) {
      std::map<TokenId, double> expl;
      const double m = tmass_.at(p);
      if (auto it = tword_.find(p); it != tword_.end()) {
        for (const auto& [w, c] : it->second) expl[w] = keep * c / m;
      }
      if (auto it = tend_.find(p); it != tend_.end()) {
        expl[Vocabulary::kEos] = keep * it->second / m;
      }
      return expl;
    };
    auto template_leftover = [&](const std::string& p) {
      const auto it = tslot_.find(p);
      return alpha + (it == tslot_.end() ? 0.0 : keep * it->second / tmass_.at(p));
    };

    // Template states without a slot: unigram fallback.
    for (const auto& [p, m] : tmass_) {
      if (tslot_.count(p)) continue;
      const State s = Lookup(TemplateKey(p));
      const auto expl = explicit_template(p);
      Fill(s, expl, template_leftover(p), unigram_);
      for (TokenId w = 0; w < vocab_.size(); ++w) {
        next_[s][w] = expl.count(w) && w != Vocabulary::kEos
                          ? Lookup(TemplateKey(Extend(p, words[w])))
                          : u;
      }
    }
    // Entity states: fall back to the site's template state.
    for (const auto& site : sites_) {
      const State r = Lookup(TemplateKey(site));
      for (const auto& [ctx, arcs] : entity_arc_) {
        const State s = Lookup(EntityKey(site, ctx));
        Fill(s, arcs, alpha + keep * entity_final_.at(ctx), dist_[r]);
        for (TokenId w = 0; w < vocab_.size(); ++w) {
          next_[s][w] =
              arcs.count(w)
                  ? Lookup(EntityKey(site, Truncate(Extend(ctx, words[w]))))
                  : next_[r][w];
        }
      }
    }
    // Template states with a slot: fall back to the entity start at the
    // slot's site.
    for (const auto& [p, m] : tmass_) {
      if (!tslot_.count(p)) continue;
      const State s = Lookup(TemplateKey(p));
      const State e0 =
          Lookup(EntityKey(Extend(p, vocab_.nonterminal()), std::string()));
      const auto expl = explicit_template(p);
      Fill(s, expl, template_leftover(p), dist_[e0]);
      for (TokenId w = 0; w < vocab_.size(); ++w) {
        next_[s][w] = expl.count(w) && w != Vocabulary::kEos
                          ? Lookup(TemplateKey(Extend(p, words[w])))
                          : next_[e0][w];
      }
    }
  }

  Vocabulary vocab_;
  OracleOptions opt_;
  // Template statistics keyed by prefix text.
  std::map<std::string, double> tmass_, tslot_, tend_;
  std::map<std::string, std::map<TokenId, double>> tword_;
  std::set<std::string> sites_;  // prefix text ending in the non-terminal
  // Entity statistics keyed by context text.
  std::map<std::string, std::map<TokenId, double>> entity_arc_;
  std::map<std::string, double> entity_end_, entity_final_;
  std::vector<double> unigram_;

  std::unordered_map<std::string, State> index_;
  std::vector<std::string> keys_;
  std::vector<std::vector<double>> dist_;
  std::vector<std::vector<State>> next_;
  std::vector<double> phi_scale_;  // leftover / fallback mass, per state
  State start_ = 0;
  std::size_t arc_count_ = 0;
};

inline OracleModel build_oracle(const Grammar& g,
                                const OracleOptions& options = {}) {
  return OracleModel(g, options);
}

// ---------------------------------------------------------------------------
// Checks on any LanguageModel

// Breadth-first closure of the start state under every scorable token.
// Throws if more than `limit` states are reachable.
template <LanguageModel M>
std::vector<typename M::State> reachable_states(const M& lm,
                                                std::size_t limit = 100'000) {
  using S = typename M::State;
  std::vector<S> out{lm.start()};
  std::unordered_set<S> seen{lm.start()};
  const auto tokens = lm.vocabulary().tokens();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const S cur = out[i];
    for (TokenId t : tokens) {
      S next = lm.step(cur, t).next;
      if (seen.insert(next).second) {
        out.push_back(std::move(next));
        if (out.size() > limit) {
          throw Error("reachable_states: more than " + std::to_string(limit) +
                      " states");
        }
      }
    }
  }
  return out;
}

struct NormalizationReport {
  std::size_t states = 0;
  double max_deviation = 0.0;  // max over states of |mass - 1|
  std::size_t worst = 0;       // index of that state in the input
  double tolerance = 1e-9;
  std::size_t violations = 0;

  bool ok() const { return violations == 0; }
};

template <LanguageModel M>
NormalizationReport check_normalization(
    const M& lm, std::span<const typename M::State> states,
    double tolerance = 1e-9) {
  NormalizationReport r;
  r.tolerance = tolerance;
  for (std::size_t i = 0; i < states.size(); ++i) {
    const double dev = std::abs(state_mass(lm, states[i]) - 1.0);
    ++r.states;
    if (!(dev <= tolerance)) ++r.violations;
    if (!(dev <= r.max_deviation)) {
      r.max_deviation = dev;
      r.worst = i;
    }
  }
  return r;
}

// Sum over every token sequence of length <= max_len of its probability
// including </s>, by dynamic programming over states. Throws when a
// frontier would exceed `cap` (states times tokens per length).
template <LanguageModel M>
double exhaustive_mass(const M& lm, std::size_t max_len,
                       std::size_t cap = 50'000'000) {
  using S = typename M::State;
  const auto tokens = lm.vocabulary().tokens();
  std::unordered_map<S, double> frontier{{lm.start(), 1.0}};
  CompensatedSum total;
  for (std::size_t len = 0;; ++len) {
    for (const auto& [s, p] : frontier) total.add(p * std::exp(lm.end(s)));
    if (len == max_len) break;
    if (frontier.size() * tokens.size() > cap) {
      throw Error("exhaustive_mass: frontier too large");
    }
    std::unordered_map<S, double> next;
    for (const auto& [s, p] : frontier) {
      for (TokenId t : tokens) {
        const auto st = lm.step(s, t);
        if (st.logprob == kNegInf) continue;
        next[st.next] += p * std::exp(st.logprob);
      }
    }
    frontier = std::move(next);
  }
  return total.value();
}

}  // namespace phirtn

#endif  // PHIRTN_ORACLE_HPP_
