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
// Deterministic approximate RTN for a two-level entity grammar.
//
// Three components share one event set:
//
//   template FST   trie over template token sequences. Arc and final
//                  probabilities are maximum likelihood estimates scaled by
//                  (1 - alpha). A state where a slot occurs has one
//                  non-terminal arc; its target is the return state.
//   entity FST     non-backoff n-gram over entity names, contexts truncated
//                  to n - 1 tokens, arcs scaled by (1 - alpha). Final
//                  probabilities are kept as mass only.
//   unigram state  self-loop distribution over every event.
//
// Matching gives regular symbols precedence. A token that has no explicit
// arc follows the state's failure (phi) transition, scaled by a weight that
// fits everything reachable that way into the state's leftover mass:
//
//   template state without a slot   -> unigram state
//   template state with a slot      -> entity start, remembering the
//                                      return state
//   entity state                    -> the remembered return state
//
// Exit weights depend on the (entity state, return state) pair and are
// computed at scoring time from a stored per-state marginal unigram sum and
// the sparse overlap with the return state's explicit arcs. The start
// state's exit weight for each slot is also stored, computed by the same
// function.
//
// End of sequence is the event </s>: it is explicit at template states with
// final mass and never explicit in the entity FST.

#ifndef PHIRTN_PHI_RTN_HPP_
#define PHIRTN_PHI_RTN_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "phirtn/error.hpp"
#include "phirtn/grammar.hpp"
#include "phirtn/language_model.hpp"
#include "phirtn/serialization.hpp"
#include "phirtn/unigram_model.hpp"
#include "phirtn/vocabulary.hpp"

namespace phirtn {

inline constexpr std::uint32_t kNoState = 0xffffffffu;

struct PhiRtnOptions {
  double alpha = 0.1;
  int order = 3;                   // entity n-gram order
  double unigram_epsilon = 1e-10;  // pseudo-count added to every event
};

inline void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw BuildError("alpha must be in (0, 1)");
  }
}

// Sorted-label arc storage shared by both FSTs: arcs of state s are
// [begin[s], begin[s + 1]).
struct ArcTable {
  std::vector<std::uint32_t> begin{0};
  std::vector<TokenId> label;
  std::vector<std::uint32_t> target;
  std::vector<double> logprob;

  std::size_t state_count() const { return begin.size() - 1; }
  std::size_t arc_count() const { return label.size(); }

  // Arc index of `token` at `state`, or kNoState.
  std::uint32_t find(std::uint32_t state, TokenId token) const {
    const auto first = label.begin() + begin[state];
    const auto last = label.begin() + begin[state + 1];
    const auto it = std::lower_bound(first, last, token);
    if (it == last || *it != token) return kNoState;
    return static_cast<std::uint32_t>(it - label.begin());
  }

  std::span<const TokenId> labels(std::uint32_t state) const {
    return std::span<const TokenId>(label).subspan(
        begin[state], begin[state + 1] - begin[state]);
  }
};

struct TemplateFst {
  double alpha = 0.1;
  ArcTable arcs;                      // word arcs only
  std::vector<double> final_logprob;  // kNegInf when not final
  std::vector<std::uint32_t> nonterminal_target;  // kNoState when no slot
  std::vector<double> leftover;  // alpha + (1 - alpha) * slot share

  std::size_t state_count() const { return final_logprob.size(); }
  bool has_slot(std::uint32_t s) const {
    return nonterminal_target[s] != kNoState;
  }
};

struct EntityFst {
  double alpha = 0.1;
  int order = 3;
  ArcTable arcs;
  std::vector<double> final_prob;  // P(final | s), unscaled
  std::vector<double> marginal;    // sum of P_unigram over explicit labels

  static constexpr std::uint32_t kStart = 0;
  std::size_t state_count() const { return final_prob.size(); }
  double leftover(std::uint32_t s) const {
    return alpha + (1.0 - alpha) * final_prob[s];
  }
};

inline TemplateFst build_template_fst(std::span<const Template> templates,
                                      const Vocabulary& vocab, double alpha) {
  check_alpha(alpha);
  if (templates.empty()) throw BuildError("template FST: no templates");
  std::vector<std::map<TokenId, std::uint32_t>> children(1);
  std::vector<double> mass(1, 0.0), end(1, 0.0);
  for (const auto& t : templates) {
    std::uint32_t s = 0;
    mass[0] += t.prob;
    for (TokenId tok : t.tokens) {
      if (tok != Vocabulary::kNonterminal &&
          (tok < Vocabulary::kFirstWord || tok >= vocab.size())) {
        throw BuildError("template FST: token id outside vocabulary");
      }
      auto [it, added] = children[s].try_emplace(
          tok, static_cast<std::uint32_t>(children.size()));
      if (added) {
        children.emplace_back();
        mass.push_back(0.0);
        end.push_back(0.0);
      }
      s = it->second;
      mass[s] += t.prob;
    }
    end[s] += t.prob;
  }
  TemplateFst fst;
  fst.alpha = alpha;
  const double keep = 1.0 - alpha;
  const std::size_t n = children.size();
  fst.final_logprob.assign(n, kNegInf);
  fst.nonterminal_target.assign(n, kNoState);
  fst.leftover.assign(n, alpha);
  for (std::size_t s = 0; s < n; ++s) {
    for (const auto& [tok, child] : children[s]) {
      if (tok == Vocabulary::kNonterminal) {
        if (children[child].count(Vocabulary::kNonterminal)) {
          throw BuildError("template FST: consecutive non-terminals");
        }
        fst.nonterminal_target[s] = child;
        fst.leftover[s] = alpha + keep * mass[child] / mass[s];
        continue;
      }
      fst.arcs.label.push_back(tok);
      fst.arcs.target.push_back(child);
      fst.arcs.logprob.push_back(std::log(keep * mass[child] / mass[s]));
    }
    fst.arcs.begin.push_back(static_cast<std::uint32_t>(fst.arcs.label.size()));
    if (end[s] > 0.0) fst.final_logprob[s] = std::log(keep * end[s] / mass[s]);
  }
  return fst;
}

// Contexts are the last min(k, order - 1) tokens after k entity tokens; the
// start context is empty and only occurs at the entity start. States are
// numbered by first appearance.
inline EntityFst build_entity_fst(std::span<const Entity> entities,
                                  const Vocabulary& vocab, int order,
                                  double alpha) {
  check_alpha(alpha);
  if (order < 2) throw BuildError("entity FST: n-gram order must be >= 2");
  if (entities.empty()) throw BuildError("entity FST: no entities");
  std::unordered_map<std::vector<TokenId>, std::uint32_t, TokenSeqHash> ids;
  std::vector<double> total, end;
  auto state_of = [&](const std::vector<TokenId>& ctx) {
    auto [it, added] =
        ids.try_emplace(ctx, static_cast<std::uint32_t>(total.size()));
    if (added) {
      total.push_back(0.0);
      end.push_back(0.0);
    }
    return it->second;
  };
  state_of({});
  struct Count {
    double weight = 0.0;
    std::uint32_t target = kNoState;
  };
  std::unordered_map<std::uint64_t, Count> counts;
  const std::size_t keep_tokens = static_cast<std::size_t>(order - 1);
  std::vector<TokenId> ctx;
  for (const auto& e : entities) {
    ctx.clear();
    std::uint32_t s = EntityFst::kStart;
    for (TokenId tok : e.tokens) {
      if (tok < Vocabulary::kFirstWord || tok >= vocab.size()) {
        throw BuildError("entity FST: token id outside vocabulary");
      }
      ctx.push_back(tok);
      if (ctx.size() > keep_tokens) ctx.erase(ctx.begin());
      const std::uint32_t next = state_of(ctx);
      auto& c = counts[(static_cast<std::uint64_t>(s) << 32) | tok];
      c.weight += e.prob;
      c.target = next;
      total[s] += e.prob;
      s = next;
    }
    end[s] += e.prob;
    total[s] += e.prob;
  }
  std::vector<std::pair<std::uint64_t, Count>> sorted(counts.begin(),
                                                      counts.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  EntityFst fst;
  fst.alpha = alpha;
  fst.order = order;
  const double keep = 1.0 - alpha;
  const std::size_t n = total.size();
  fst.arcs.begin.assign(n + 1, 0);
  for (const auto& [key, c] : sorted) {
    const auto s = static_cast<std::uint32_t>(key >> 32);
    fst.arcs.label.push_back(static_cast<TokenId>(key & 0xffffffffu));
    fst.arcs.target.push_back(c.target);
    fst.arcs.logprob.push_back(std::log(keep * c.weight / total[s]));
    ++fst.arcs.begin[s + 1];
  }
  for (std::size_t s = 0; s < n; ++s) fst.arcs.begin[s + 1] += fst.arcs.begin[s];
  fst.final_prob.resize(n);
  for (std::size_t s = 0; s < n; ++s) fst.final_prob[s] = end[s] / total[s];
  fst.marginal.assign(n, 0.0);
  return fst;
}

// P(w) proportional to the expected number of occurrences of w in a query
// drawn from the grammar, with one </s> per query and `epsilon` added to
// every event (so <unk> and words outside the grammar stay positive).
inline UnigramModel build_unigram(const Grammar& g, double epsilon = 1e-10) {
  if (!(epsilon > 0.0)) throw BuildError("unigram: epsilon must be positive");
  const Vocabulary& vocab = g.vocabulary();
  std::vector<double> entity_counts(vocab.size(), 0.0);
  for (const auto& e : g.entities()) {
    for (TokenId t : e.tokens) entity_counts[t] += e.prob;
  }
  std::vector<double> counts(vocab.size(), 0.0);
  for (const auto& t : g.templates()) {
    for (TokenId tok : t.tokens) {
      if (tok != Vocabulary::kNonterminal) counts[tok] += t.prob;
    }
    const double slots = static_cast<double>(t.slot_count()) * t.prob;
    if (slots > 0.0) {
      for (TokenId w = 0; w < vocab.size(); ++w) {
        counts[w] += slots * entity_counts[w];
      }
    }
  }
  counts[Vocabulary::kEos] += 1.0;
  CompensatedSum total;
  for (TokenId w = 0; w < vocab.size(); ++w) {
    if (!vocab.is_event(w)) {
      counts[w] = 0.0;
      continue;
    }
    counts[w] += epsilon;
    total.add(counts[w]);
  }
  for (auto& c : counts) c /= total.value();
  return UnigramModel(vocab, counts);
}

struct PhiRtnState {
  enum class Component : std::uint8_t { kTemplate = 0, kEntity = 1, kUnigram = 2 };
  Component component = Component::kTemplate;
  std::uint32_t state = 0;
  std::uint32_t return_state = 0;  // template state; entity component only

  friend bool operator==(const PhiRtnState&, const PhiRtnState&) = default;
};

class PhiRtnModel {
 public:
  using State = PhiRtnState;
  using Component = PhiRtnState::Component;

  // Computes the marginal sums and the static phi weights. Throws
  // BuildError if a normalization denominator is not positive.
  PhiRtnModel(Vocabulary vocab, TemplateFst templates, EntityFst entities,
              UnigramModel unigram, double unigram_epsilon = 1e-10)
      : vocab_(std::move(vocab)),
        t_(std::move(templates)),
        e_(std::move(entities)),
        u_(std::move(unigram)),
        epsilon_(unigram_epsilon) {
    Validate();
    Assemble();
  }

  State start() const { return {}; }

  Step<State> step(const State& s, TokenId token) const {
    return Match(s, vocab_.scorable(token));
  }

  double end(const State& s) const {
    return Match(s, Vocabulary::kEos).logprob;
  }

  const Vocabulary& vocabulary() const { return vocab_; }
  double alpha() const { return t_.alpha; }
  int order() const { return e_.order; }
  double unigram_epsilon() const { return epsilon_; }
  const TemplateFst& template_fst() const { return t_; }
  const EntityFst& entity_fst() const { return e_; }
  const UnigramModel& unigram() const { return u_; }

  double log_phi_weight(std::uint32_t template_state) const {
    return log_beta_[template_state];
  }
  // Stored exit weight from the entity start back to the return state of
  // the slot at `template_state` (which must have one).
  double log_start_exit_weight(std::uint32_t template_state) const {
    return log_start_exit_[template_state];
  }

  // Exit weight from entity state `e` to template state `r`:
  //   (alpha + (1 - alpha) P(final|e)) / (1 - sum_{w explicit at e} P(w|r))
  // where P(.|r) is the full template distribution at r. The sum is the
  // explicit arcs of r that e shares plus r's phi weight times the unigram
  // mass of the remaining labels of e.
  double log_exit_weight(std::uint32_t e, std::uint32_t r) const {
    double shared_explicit = 0.0, shared_unigram = 0.0;
    for (std::uint32_t a = t_.arcs.begin[r]; a < t_.arcs.begin[r + 1]; ++a) {
      const TokenId w = t_.arcs.label[a];
      if (e_.arcs.find(e, w) != kNoState) {
        shared_explicit += std::exp(t_.arcs.logprob[a]);
        shared_unigram += std::exp(u_.logprob(w));
      }
    }
    const double rest = std::max(0.0, e_.marginal[e] - shared_unigram);
    const double covered = shared_explicit + std::exp(log_beta_[r]) * rest;
    return std::log(e_.leftover(e)) - std::log1p(-covered);
  }

  // Log-probability of the derivation the grammar intends (template words
  // on template arcs, each slot entered and left through the phi chain),
  // together with the state after each token. Differs from
  // sequence_logprob exactly when precedence shadows that derivation.
  struct IntendedPath {
    double logprob = 0.0;
    std::vector<State> states;  // one per token
  };

  IntendedPath intended_path(const Grammar& g, const Derivation& d) const {
    IntendedPath out;
    std::uint32_t s = 0;
    std::size_t slot = 0;
    auto fail = [] { throw Error("intended path: grammar does not match model"); };
    for (TokenId tok : g.templates()[d.template_index].tokens) {
      if (tok != Vocabulary::kNonterminal) {
        const std::uint32_t a = t_.arcs.find(s, tok);
        if (a == kNoState) fail();
        out.logprob += t_.arcs.logprob[a];
        s = t_.arcs.target[a];
        out.states.push_back({Component::kTemplate, s, 0});
        continue;
      }
      const std::uint32_t r = t_.nonterminal_target[s];
      if (r == kNoState) fail();
      out.logprob += log_beta_[s];
      std::uint32_t e = EntityFst::kStart;
      for (TokenId w : g.entities()[d.entities[slot]].tokens) {
        const std::uint32_t a = e_.arcs.find(e, w);
        if (a == kNoState) fail();
        out.logprob += e_.arcs.logprob[a];
        e = e_.arcs.target[a];
        out.states.push_back({Component::kEntity, e, r});
      }
      ++slot;
      out.logprob += log_exit_weight(e, r);
      s = r;
    }
    if (t_.final_logprob[s] == kNegInf) fail();
    out.logprob += t_.final_logprob[s];
    return out;
  }

  Container to_container() const {
    Container c(ModelKind::kPhiRtn);
    c.add(section::kVocabulary, encode_vocabulary(vocab_));
    {
      ByteWriter w;
      const std::size_t n = t_.state_count();
      w.u32(static_cast<std::uint32_t>(n));
      for (std::size_t s = 0; s < n; ++s) {
        w.f64(t_.final_logprob[s]);
        w.u32(t_.nonterminal_target[s]);
        w.f64(t_.leftover[s]);
        w.u32(t_.arcs.begin[s + 1] - t_.arcs.begin[s]);
        for (auto a = t_.arcs.begin[s]; a < t_.arcs.begin[s + 1]; ++a) {
          w.u32(t_.arcs.label[a]);
          w.u32(t_.arcs.target[a]);
          w.f64(t_.arcs.logprob[a]);
        }
      }
      c.add(section::kTemplateTrie, w.take());
    }
    {
      ByteWriter w;
      const std::size_t n = e_.state_count();
      w.u32(static_cast<std::uint32_t>(n));
      for (std::size_t s = 0; s < n; ++s) {
        w.f64(e_.final_prob[s]);
        w.u32(e_.arcs.begin[s + 1] - e_.arcs.begin[s]);
        for (auto a = e_.arcs.begin[s]; a < e_.arcs.begin[s + 1]; ++a) {
          w.u32(e_.arcs.label[a]);
          w.u32(e_.arcs.target[a]);
          w.f64(e_.arcs.logprob[a]);
        }
      }
      c.add(section::kEntityNgrams, w.take());
    }
    {
      ByteWriter w;
      w.u32(static_cast<std::uint32_t>(vocab_.size()));
      for (TokenId t = 0; t < vocab_.size(); ++t) w.f64(u_.logprob(t));
      c.add(section::kUnigramTable, w.take());
    }
    {
      ByteWriter w;
      w.u32(static_cast<std::uint32_t>(log_beta_.size()));
      for (std::size_t s = 0; s < log_beta_.size(); ++s) {
        w.f64(log_beta_[s]);
        if (t_.has_slot(static_cast<std::uint32_t>(s))) {
          w.f64(log_start_exit_[s]);
        }
      }
      c.add(section::kPhiWeights, w.take());
    }
    {
      ByteWriter w;
      w.u32(static_cast<std::uint32_t>(e_.marginal.size()));
      for (double m : e_.marginal) w.f64(m);
      c.add(section::kMarginalSums, w.take());
    }
    {
      ByteWriter w;
      w.f64(t_.alpha);
      w.i32(e_.order);
      w.f64(epsilon_);
      c.add(section::kPhiRtnParams, w.take());
    }
    return c;
  }

  static PhiRtnModel from_container(const Container& c) {
    if (c.kind() != ModelKind::kPhiRtn) throw Error("not a phi-rtn model");
    PhiRtnModel m;
    m.vocab_ = decode_vocabulary(c.get(section::kVocabulary).bytes);
    const std::size_t v = m.vocab_.size();
    {
      ByteReader r(c.get(section::kPhiRtnParams).bytes);
      m.t_.alpha = m.e_.alpha = r.f64();
      m.e_.order = r.i32();
      m.epsilon_ = r.f64();
      if (!(m.t_.alpha > 0.0 && m.t_.alpha < 1.0) || m.e_.order < 2) {
        throw Error("model file: bad phi-rtn parameters");
      }
    }
    auto read_arcs = [&](ByteReader& r, ArcTable& arcs, std::size_t states) {
      const std::uint32_t k = r.count(16);
      for (std::uint32_t i = 0; i < k; ++i) {
        arcs.label.push_back(r.u32());
        arcs.target.push_back(r.u32());
        arcs.logprob.push_back(r.f64());
        const auto n = arcs.label.size();
        if (arcs.label.back() >= v || arcs.target.back() >= states ||
            (i > 0 && arcs.label[n - 2] >= arcs.label[n - 1])) {
          throw Error("model file: bad arc");
        }
      }
      arcs.begin.push_back(static_cast<std::uint32_t>(arcs.label.size()));
    };
    {
      ByteReader r(c.get(section::kTemplateTrie).bytes);
      const std::uint32_t n = r.count(24);
      for (std::uint32_t s = 0; s < n; ++s) {
        m.t_.final_logprob.push_back(r.f64());
        m.t_.nonterminal_target.push_back(r.u32());
        m.t_.leftover.push_back(r.f64());
        if (m.t_.nonterminal_target.back() != kNoState &&
            m.t_.nonterminal_target.back() >= n) {
          throw Error("model file: bad non-terminal target");
        }
        read_arcs(r, m.t_.arcs, n);
      }
      if (n == 0 || !r.done()) throw Error("model file: bad template trie");
    }
    {
      ByteReader r(c.get(section::kEntityNgrams).bytes);
      const std::uint32_t n = r.count(12);
      for (std::uint32_t s = 0; s < n; ++s) {
        m.e_.final_prob.push_back(r.f64());
        read_arcs(r, m.e_.arcs, n);
      }
      if (n == 0 || !r.done()) throw Error("model file: bad entity n-grams");
    }
    {
      ByteReader r(c.get(section::kUnigramTable).bytes);
      if (r.count(8) != v) throw Error("model file: unigram size mismatch");
      std::vector<double> logs(v);
      for (auto& x : logs) x = r.f64();
      m.u_ = UnigramModel::from_logprobs(m.vocab_, std::move(logs));
    }
    {
      ByteReader r(c.get(section::kPhiWeights).bytes);
      const std::uint32_t n = r.count(8);
      if (n != m.t_.state_count()) throw Error("model file: phi weight count");
      m.log_beta_.resize(n);
      m.log_start_exit_.assign(n, 0.0);
      for (std::uint32_t s = 0; s < n; ++s) {
        m.log_beta_[s] = r.f64();
        if (m.t_.has_slot(s)) m.log_start_exit_[s] = r.f64();
      }
      if (!r.done()) throw Error("model file: bad phi weights");
    }
    {
      ByteReader r(c.get(section::kMarginalSums).bytes);
      const std::uint32_t n = r.count(8);
      if (n != m.e_.state_count()) throw Error("model file: marginal count");
      m.e_.marginal.resize(n);
      for (auto& x : m.e_.marginal) x = r.f64();
    }
    return m;
  }

 private:
  PhiRtnModel() : u_(UnigramModel::uniform(Vocabulary())) {}

  void Validate() const {
    if (t_.alpha != e_.alpha) {
      throw BuildError("assemble: template and entity alpha differ");
    }
    if (u_.vocabulary() != vocab_) {
      throw BuildError("assemble: unigram vocabulary differs");
    }
    for (TokenId w : vocab_.tokens()) {
      if (u_.logprob(w) == kNegInf) {
        throw BuildError("assemble: unigram gives zero probability to '" +
                         vocab_.word(w) + "'");
      }
    }
    if (u_.logprob(Vocabulary::kEos) == kNegInf) {
      throw BuildError("assemble: unigram gives zero probability to </s>");
    }
  }

  double U(TokenId w) const { return std::exp(u_.logprob(w)); }

  // Probability of event w at template state r, which has no slot.
  double TemplateProb(std::uint32_t r, TokenId w) const {
    if (w == Vocabulary::kEos) {
      if (t_.final_logprob[r] != kNegInf) return std::exp(t_.final_logprob[r]);
    } else if (auto a = t_.arcs.find(r, w); a != kNoState) {
      return std::exp(t_.arcs.logprob[a]);
    }
    return std::exp(log_beta_[r]) * U(w);
  }

  void Assemble() {
    const std::size_t ns = t_.state_count();
    for (std::size_t e = 0; e < e_.state_count(); ++e) {
      CompensatedSum m;
      for (TokenId w : e_.arcs.labels(static_cast<std::uint32_t>(e))) {
        m.add(U(w));
      }
      e_.marginal[e] = m.value();
    }
    log_beta_.assign(ns, 0.0);
    log_start_exit_.assign(ns, 0.0);
    auto fail = [](std::size_t s, double denom) {
      throw BuildError("assemble: phi normalization denominator " +
                       std::to_string(denom) + " at template state " +
                       std::to_string(s));
    };
    // The denominators are summed over the events that are not explicit
    // at the state rather than taken as one minus the explicit mass, which
    // cancels badly when the explicit arcs hold nearly everything.
    std::vector<TokenId> events = vocab_.tokens();
    events.push_back(Vocabulary::kEos);
    auto is_explicit = [&](std::uint32_t s, TokenId w) {
      return w == Vocabulary::kEos ? t_.final_logprob[s] != kNegInf
                                   : t_.arcs.find(s, w) != kNoState;
    };
    // States without a slot back off to the unigram.
    for (std::uint32_t s = 0; s < ns; ++s) {
      if (t_.has_slot(s)) continue;
      CompensatedSum rest;
      for (TokenId w : events) {
        if (!is_explicit(s, w)) rest.add(U(w));
      }
      const double denom = rest.value();
      if (!(denom > 0.0)) fail(s, denom);
      log_beta_[s] = std::log(t_.leftover[s]) - std::log(denom);
    }
    // States with a slot back off into the entity start; their return
    // states have no slot, so their weights are already known.
    for (std::uint32_t s = 0; s < ns; ++s) {
      if (!t_.has_slot(s)) continue;
      const std::uint32_t r = t_.nonterminal_target[s];
      const double log_exit = log_exit_weight(EntityFst::kStart, r);
      log_start_exit_[s] = log_exit;
      auto q = [&](TokenId w) {
        if (w != Vocabulary::kEos) {
          if (auto a = e_.arcs.find(EntityFst::kStart, w); a != kNoState) {
            return std::exp(e_.arcs.logprob[a]);
          }
        }
        return std::exp(log_exit) * TemplateProb(r, w);
      };
      CompensatedSum rest;
      for (TokenId w : events) {
        if (!is_explicit(s, w)) rest.add(q(w));
      }
      const double denom = rest.value();
      if (!(denom > 0.0)) fail(s, denom);
      log_beta_[s] = std::log(t_.leftover[s]) - std::log(denom);
    }
  }

  // Matches at template state r, which has no slot.
  Step<State> MatchReturn(std::uint32_t r, TokenId w, double lp) const {
    if (w == Vocabulary::kEos) {
      if (t_.final_logprob[r] != kNegInf) {
        return {lp + t_.final_logprob[r], {Component::kTemplate, r, 0}};
      }
    } else if (auto a = t_.arcs.find(r, w); a != kNoState) {
      return {lp + t_.arcs.logprob[a],
              {Component::kTemplate, t_.arcs.target[a], 0}};
    }
    return {lp + log_beta_[r] + u_.logprob(w), {Component::kUnigram, 0, 0}};
  }

  // Matches at entity state e with return state r; `log_exit` is the exit
  // weight when already known.
  Step<State> MatchEntity(std::uint32_t e, std::uint32_t r, TokenId w,
                          double lp, const double* log_exit) const {
    if (w != Vocabulary::kEos) {
      if (auto a = e_.arcs.find(e, w); a != kNoState) {
        return {lp + e_.arcs.logprob[a],
                {Component::kEntity, e_.arcs.target[a], r}};
      }
    }
    lp += log_exit ? *log_exit : log_exit_weight(e, r);
    return MatchReturn(r, w, lp);
  }

  Step<State> Match(const State& st, TokenId w) const {
    switch (st.component) {
      case Component::kTemplate: {
        const std::uint32_t s = st.state;
        if (w == Vocabulary::kEos) {
          if (t_.final_logprob[s] != kNegInf) {
            return {t_.final_logprob[s], st};
          }
        } else if (auto a = t_.arcs.find(s, w); a != kNoState) {
          return {t_.arcs.logprob[a],
                  {Component::kTemplate, t_.arcs.target[a], 0}};
        }
        if (t_.has_slot(s)) {
          return MatchEntity(EntityFst::kStart, t_.nonterminal_target[s], w,
                             log_beta_[s], &log_start_exit_[s]);
        }
        return {log_beta_[s] + u_.logprob(w), {Component::kUnigram, 0, 0}};
      }
      case Component::kEntity:
        return MatchEntity(st.state, st.return_state, w, 0.0, nullptr);
      case Component::kUnigram:
        return {u_.logprob(w), st};
    }
    return {kNegInf, st};
  }

  Vocabulary vocab_;
  TemplateFst t_;
  EntityFst e_;
  UnigramModel u_;
  double epsilon_ = 1e-10;
  std::vector<double> log_beta_;
  std::vector<double> log_start_exit_;
};

// Builds all components from a grammar. The model vocabulary is the
// grammar's.
inline PhiRtnModel build_phi_rtn(const Grammar& g,
                                 const PhiRtnOptions& options = {}) {
  const Vocabulary& v = g.vocabulary();
  return PhiRtnModel(v, build_template_fst(g.templates(), v, options.alpha),
                     build_entity_fst(g.entities(), v, options.order,
                                      options.alpha),
                     build_unigram(g, options.unigram_epsilon),
                     options.unigram_epsilon);
}

// ---------------------------------------------------------------------------
// Coverage

struct CoverageReport {
  std::uint64_t queries = 0;
  std::uint64_t covered = 0;
  double covered_mass = 0.0;             // sum of joint probs of covered
  std::vector<std::uint64_t> uncovered;  // expansion indices

  double fraction() const {
    return queries ? static_cast<double>(covered) / queries : 1.0;
  }
  double weighted_fraction() const { return covered_mass; }
};

// A query is covered when scoring it visits exactly the states of its
// intended derivation.
inline bool follows_intended_path(const PhiRtnModel& m, const Grammar& g,
                                  const Derivation& d,
                                  std::span<const TokenId> tokens) {
  const auto path = m.intended_path(g, d);
  auto st = m.start();
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    st = m.step(st, tokens[i]).next;
    if (!(st == path.states[i])) return false;
  }
  return true;
}

inline CoverageReport coverage(const PhiRtnModel& m, const Grammar& g) {
  if (g.vocabulary() != m.vocabulary() &&
      !m.vocabulary().extends(g.vocabulary())) {
    throw Error("coverage: model vocabulary does not cover the grammar");
  }
  CoverageReport r;
  CompensatedSum mass;
  g.for_each_query([&](std::span<const TokenId> toks, double p,
                       std::uint64_t i) {
    ++r.queries;
    if (follows_intended_path(m, g, g.derivation(i), toks)) {
      ++r.covered;
      mass.add(p);
    } else {
      r.uncovered.push_back(i);
    }
  });
  r.covered_mass = mass.value();
  return r;
}

}  // namespace phirtn

template <>
struct std::hash<phirtn::PhiRtnState> {
  std::size_t operator()(const phirtn::PhiRtnState& s) const {
    const std::uint64_t h = (static_cast<std::uint64_t>(s.state) << 32) ^
                            (static_cast<std::uint64_t>(s.return_state) << 2) ^
                            static_cast<std::uint64_t>(s.component);
    return std::hash<std::uint64_t>{}(h * 0x9e3779b97f4a7c15ULL);
  }
};

#endif  // PHIRTN_PHI_RTN_HPP_
