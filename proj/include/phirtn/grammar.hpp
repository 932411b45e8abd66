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
// Entity-centric query grammars: a weighted template list whose templates
// contain slots for one non-terminal, and the weighted entity list that fills
// those slots. Parsing, expansion into the full query set, rank-percentile
// stratification, stratum sampling, and detection of queries whose intended
// derivation is shadowed by regular-symbol precedence.

#ifndef PHIRTN_GRAMMAR_HPP_
#define PHIRTN_GRAMMAR_HPP_

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "phirtn/error.hpp"
#include "phirtn/random.hpp"
#include "phirtn/vocabulary.hpp"

namespace phirtn {

struct Template {
  std::vector<TokenId> tokens;  // words and Vocabulary::kNonterminal
  double prob = 0.0;

  std::size_t slot_count() const {
    return static_cast<std::size_t>(
        std::count(tokens.begin(), tokens.end(), Vocabulary::kNonterminal));
  }
  friend bool operator==(const Template&, const Template&) = default;
};

struct Entity {
  std::vector<TokenId> tokens;
  double prob = 0.0;
  friend bool operator==(const Entity&, const Entity&) = default;
};

// Which template produced a query and which entity filled each slot.
struct Derivation {
  std::size_t template_index = 0;
  std::vector<std::size_t> entities;
};

struct ExpandedQuery {
  std::vector<TokenId> tokens;
  double joint_prob = 0.0;
  std::uint64_t index = 0;  // position in expansion order
};

struct GrammarOptions {
  // Probability lists must sum to one within this tolerance; sums inside it
  // are renormalized.
  double sum_tolerance = 1e-6;
};

namespace detail {

// Below this the list is already normalized as far as doubles allow;
// rescaling again would perturb values and break text round trips.
inline constexpr double kExactSumSlack = 1e-12;

inline void normalize_probs(std::vector<double*> probs, double tolerance,
                            std::string_view what) {
  double sum = 0.0;
  for (const double* p : probs) sum += *p;
  if (std::abs(sum - 1.0) > tolerance) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.12g", sum);
    throw Error(std::string(what) + " probabilities sum to " + buf +
                ", expected 1");
  }
  if (std::abs(sum - 1.0) > kExactSumSlack) {
    for (double* p : probs) *p /= sum;
  }
}

inline std::string format_prob(double p) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", p);
  return buf;
}

}  // namespace detail

class Grammar {
 public:
  Grammar(Vocabulary vocab, std::vector<Template> templates,
          std::vector<Entity> entities, GrammarOptions options = {})
      : vocab_(std::move(vocab)),
        templates_(std::move(templates)),
        entities_(std::move(entities)) {
    Validate(options);
  }

  const Vocabulary& vocabulary() const { return vocab_; }
  const std::vector<Template>& templates() const { return templates_; }
  const std::vector<Entity>& entities() const { return entities_; }
  const std::string& nonterminal_name() const { return vocab_.nonterminal(); }

  // Same grammar over a vocabulary that extends this one (ids preserved).
  Grammar with_vocabulary(Vocabulary superset) const {
    if (!superset.extends(vocab_)) {
      throw Error("grammar: replacement vocabulary does not extend the "
                  "grammar vocabulary");
    }
    Grammar g = *this;
    g.vocab_ = std::move(superset);
    return g;
  }

  // Number of queries in the full expansion, sum over templates of
  // |E|^slots.
  std::uint64_t expansion_size() const { return offsets_.back(); }

  Derivation derivation(std::uint64_t index) const {
    if (index >= expansion_size()) throw Error("grammar: query index range");
    const auto it =
        std::upper_bound(offsets_.begin(), offsets_.end(), index) - 1;
    Derivation d;
    d.template_index = static_cast<std::size_t>(it - offsets_.begin());
    std::uint64_t local = index - *it;
    const std::size_t slots = templates_[d.template_index].slot_count();
    d.entities.assign(slots, 0);
    for (std::size_t k = slots; k-- > 0;) {
      d.entities[k] = static_cast<std::size_t>(local % entities_.size());
      local /= entities_.size();
    }
    return d;
  }

  double joint_prob(const Derivation& d) const {
    double p = templates_[d.template_index].prob;
    for (std::size_t e : d.entities) p *= entities_[e].prob;
    return p;
  }

  void tokens_of(const Derivation& d, std::vector<TokenId>& out) const {
    out.clear();
    std::size_t slot = 0;
    for (TokenId t : templates_[d.template_index].tokens) {
      if (t == Vocabulary::kNonterminal) {
        const auto& e = entities_[d.entities[slot++]].tokens;
        out.insert(out.end(), e.begin(), e.end());
      } else {
        out.push_back(t);
      }
    }
  }

  ExpandedQuery query(std::uint64_t index) const {
    const Derivation d = derivation(index);
    ExpandedQuery q;
    tokens_of(d, q.tokens);
    q.joint_prob = joint_prob(d);
    q.index = index;
    return q;
  }

  // Streams the full expansion in order (template index major, entity index
  // minor, first slot most significant). `fn(tokens, joint_prob, index)`;
  // the token span is only valid during the call.
  template <class Fn>
  void for_each_query(Fn&& fn) const {
    std::vector<TokenId> tokens;
    Derivation d;
    std::uint64_t index = 0;
    for (std::size_t t = 0; t < templates_.size(); ++t) {
      const std::size_t slots = templates_[t].slot_count();
      d.template_index = t;
      d.entities.assign(slots, 0);
      while (true) {
        tokens_of(d, tokens);
        fn(std::span<const TokenId>(tokens), joint_prob(d), index++);
        // Odometer increment, last slot fastest.
        std::size_t k = slots;
        while (k > 0 && ++d.entities[k - 1] == entities_.size()) {
          d.entities[--k] = 0;
        }
        if (k == 0) break;
      }
    }
  }

  // Text forms accepted by parse_grammar; probabilities use 17 significant
  // digits so parsing them back is exact.
  std::string templates_text() const {
    std::string out;
    for (const auto& t : templates_) {
      out += vocab_.join(t.tokens) + '\t' + detail::format_prob(t.prob) + '\n';
    }
    return out;
  }

  std::string entities_text() const {
    std::string out;
    for (const auto& e : entities_) {
      out += vocab_.join(e.tokens) + '\t' + detail::format_prob(e.prob) + '\n';
    }
    return out;
  }

  friend bool operator==(const Grammar& a, const Grammar& b) {
    return a.vocab_ == b.vocab_ && a.templates_ == b.templates_ &&
           a.entities_ == b.entities_;
  }

 private:
  void Validate(const GrammarOptions& options) {
    if (templates_.empty()) throw Error("grammar: no templates");
    if (entities_.empty()) throw Error("grammar: no entities");
    std::vector<double*> tp, ep;
    std::unordered_set<std::vector<TokenId>, TokenSeqHash> seen;
    for (std::size_t i = 0; i < templates_.size(); ++i) {
      const auto& t = templates_[i];
      const std::string where = "template " + std::to_string(i + 1);
      if (t.tokens.empty()) throw Error(where + ": no tokens");
      CheckProb(t.prob, where);
      for (std::size_t j = 0; j < t.tokens.size(); ++j) {
        CheckToken(t.tokens[j], true, where);
        if (j > 0 && t.tokens[j] == Vocabulary::kNonterminal &&
            t.tokens[j - 1] == Vocabulary::kNonterminal) {
          throw Error(where + ": consecutive non-terminals");
        }
      }
      if (!seen.insert(t.tokens).second) {
        throw Error(where + ": duplicate template '" + vocab_.join(t.tokens) +
                    "'");
      }
      tp.push_back(&templates_[i].prob);
    }
    seen.clear();
    for (std::size_t i = 0; i < entities_.size(); ++i) {
      const auto& e = entities_[i];
      const std::string where = "entity " + std::to_string(i + 1);
      if (e.tokens.empty()) throw Error(where + ": no tokens");
      CheckProb(e.prob, where);
      for (TokenId t : e.tokens) CheckToken(t, false, where);
      if (!seen.insert(e.tokens).second) {
        throw Error(where + ": duplicate entity '" + vocab_.join(e.tokens) +
                    "'");
      }
      ep.push_back(&entities_[i].prob);
    }
    detail::normalize_probs(std::move(tp), options.sum_tolerance, "template");
    detail::normalize_probs(std::move(ep), options.sum_tolerance, "entity");

    offsets_.assign(1, 0);
    const double max_size = 9.0e18;
    for (const auto& t : templates_) {
      const double n =
          std::pow(static_cast<double>(entities_.size()), t.slot_count());
      if (static_cast<double>(offsets_.back()) + n > max_size) {
        throw Error("grammar: expansion size overflows");
      }
      std::uint64_t count = 1;
      for (std::size_t k = 0; k < t.slot_count(); ++k) count *= entities_.size();
      offsets_.push_back(offsets_.back() + count);
    }
  }

  static void CheckProb(double p, const std::string& where) {
    if (!(p > 0.0 && p <= 1.0)) {
      throw Error(where + ": probability must be in (0, 1]");
    }
  }

  void CheckToken(TokenId t, bool allow_nonterminal,
                  const std::string& where) const {
    if (t == Vocabulary::kNonterminal) {
      if (!allow_nonterminal) throw Error(where + ": contains non-terminal");
      return;
    }
    if (t < Vocabulary::kFirstWord || t >= vocab_.size()) {
      throw Error(where + ": reserved or unknown token id " +
                  std::to_string(t));
    }
  }

  Vocabulary vocab_;
  std::vector<Template> templates_;
  std::vector<Entity> entities_;
  std::vector<std::uint64_t> offsets_;  // first query index per template
};

namespace detail {

struct ParsedLine {
  std::size_t line = 0;
  std::vector<std::string_view> tokens;
  double prob = 0.0;
};

inline std::vector<ParsedLine> parse_weighted_lines(std::string_view text) {
  std::vector<ParsedLine> out;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const std::size_t nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{}
                                        : text.substr(nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
    if (line.front() == '#') continue;
    const std::size_t tab = line.rfind('\t');
    if (tab == std::string_view::npos) {
      throw ParseError(line_no, "expected '<tokens>\\t<probability>'");
    }
    ParsedLine p;
    p.line = line_no;
    std::string_view lhs = line.substr(0, tab);
    std::string_view rhs = line.substr(tab + 1);
    while (!rhs.empty() && rhs.front() == ' ') rhs.remove_prefix(1);
    while (!rhs.empty() && rhs.back() == ' ') rhs.remove_suffix(1);
    const auto [end, ec] =
        std::from_chars(rhs.data(), rhs.data() + rhs.size(), p.prob);
    if (ec != std::errc() || end != rhs.data() + rhs.size()) {
      throw ParseError(line_no, "bad probability '" + std::string(rhs) + "'");
    }
    if (!(p.prob > 0.0 && p.prob <= 1.0)) {
      throw ParseError(line_no, "probability must be in (0, 1]");
    }
    std::size_t pos = 0;
    while (pos < lhs.size()) {
      const std::size_t b = lhs.find_first_not_of(" \t", pos);
      if (b == std::string_view::npos) break;
      const std::size_t e = std::min(lhs.find_first_of(" \t", b), lhs.size());
      p.tokens.push_back(lhs.substr(b, e - b));
      pos = e;
    }
    if (p.tokens.empty()) throw ParseError(line_no, "no tokens");
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace detail

// Parses the two weighted lists. Errors name the offending line; list-level
// problems (sums, duplicates) are reported per file.
inline Grammar parse_grammar(
    std::string_view templates_text, std::string_view entities_text,
    std::string_view nonterminal = Vocabulary::kDefaultNonterminal,
    GrammarOptions options = {}) {
  Vocabulary vocab(nonterminal);
  std::vector<Template> templates;
  std::vector<Entity> entities;
  auto reserved = [&](std::string_view tok) {
    return tok == Vocabulary::kEosWord || tok == Vocabulary::kUnkWord ||
           tok == Vocabulary::kBosWord;
  };
  for (auto& line : detail::parse_weighted_lines(templates_text)) {
    Template t;
    t.prob = line.prob;
    for (auto tok : line.tokens) {
      if (reserved(tok)) {
        throw ParseError(line.line, "templates: reserved token '" +
                                        std::string(tok) + "'");
      }
      const TokenId id = vocab.insert(tok);
      if (id == Vocabulary::kNonterminal && !t.tokens.empty() &&
          t.tokens.back() == Vocabulary::kNonterminal) {
        throw ParseError(line.line, "templates: consecutive non-terminals");
      }
      t.tokens.push_back(id);
    }
    templates.push_back(std::move(t));
  }
  for (auto& line : detail::parse_weighted_lines(entities_text)) {
    Entity e;
    e.prob = line.prob;
    for (auto tok : line.tokens) {
      if (reserved(tok)) {
        throw ParseError(line.line, "entities: reserved token '" +
                                        std::string(tok) + "'");
      }
      const TokenId id = vocab.insert(tok);
      if (id == Vocabulary::kNonterminal) {
        throw ParseError(line.line, "entities: contains the non-terminal");
      }
      e.tokens.push_back(id);
    }
    entities.push_back(std::move(e));
  }
  try {
    return Grammar(std::move(vocab), std::move(templates), std::move(entities),
                   options);
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    throw ParseError(0, e.what());
  }
}

// Full expansion as a list. Throws if it would exceed `max_queries`.
inline std::vector<ExpandedQuery> expand(
    const Grammar& g, std::optional<std::uint64_t> max_queries = std::nullopt) {
  if (max_queries && g.expansion_size() > *max_queries) {
    throw Error("expand: expansion has " + std::to_string(g.expansion_size()) +
                " queries, limit " + std::to_string(*max_queries));
  }
  std::vector<ExpandedQuery> out;
  out.reserve(static_cast<std::size_t>(g.expansion_size()));
  g.for_each_query([&](std::span<const TokenId> toks, double p,
                       std::uint64_t index) {
    out.push_back({std::vector<TokenId>(toks.begin(), toks.end()), p, index});
  });
  return out;
}

// ---------------------------------------------------------------------------
// Stratification

enum class Stratum : std::uint8_t { kHead = 0, kTorso = 1, kTail = 2 };

inline constexpr std::string_view to_string(Stratum s) {
  switch (s) {
    case Stratum::kHead:
      return "head";
    case Stratum::kTorso:
      return "torso";
    case Stratum::kTail:
      return "tail";
  }
  return "?";
}

inline Stratum parse_stratum(std::string_view s) {
  if (s == "head") return Stratum::kHead;
  if (s == "torso") return Stratum::kTorso;
  if (s == "tail") return Stratum::kTail;
  throw Error("unknown stratum '" + std::string(s) + "'");
}

// Head is ranks [0, ceil(0.1 N)), torso up to ceil(0.5 N), tail the rest.
inline std::size_t head_size(std::size_t n) { return (n + 9) / 10; }
inline std::size_t head_torso_size(std::size_t n) { return (n + 1) / 2; }

inline Stratum stratum_of_rank(std::size_t rank, std::size_t n) {
  if (rank < head_size(n)) return Stratum::kHead;
  if (rank < head_torso_size(n)) return Stratum::kTorso;
  return Stratum::kTail;
}

namespace detail {

inline bool words_less(const Vocabulary& vocab, std::span<const TokenId> a,
                       std::span<const TokenId> b) {
  return std::lexicographical_compare(
      a.begin(), a.end(), b.begin(), b.end(),
      [&](TokenId x, TokenId y) { return vocab.word(x) < vocab.word(y); });
}

}  // namespace detail

// Rank order: joint probability descending, then query text
// lexicographically (word by word), then expansion index.
inline std::vector<Stratum> stratify(std::span<const ExpandedQuery> queries,
                                     const Vocabulary& vocab) {
  std::vector<std::size_t> order(queries.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& qa = queries[a];
    const auto& qb = queries[b];
    if (qa.joint_prob != qb.joint_prob) return qa.joint_prob > qb.joint_prob;
    if (qa.tokens != qb.tokens) {
      return detail::words_less(vocab, qa.tokens, qb.tokens);
    }
    return qa.index < qb.index;
  });
  std::vector<Stratum> out(queries.size());
  for (std::size_t r = 0; r < order.size(); ++r) {
    out[order[r]] = stratum_of_rank(r, order.size());
  }
  return out;
}

struct RankedQuery {
  std::uint64_t index = 0;
  double joint_prob = 0.0;
};

// The whole expansion in rank order without materializing token lists;
// the stratum of entry r is stratum_of_rank(r, size).
inline std::vector<RankedQuery> rank_expansion(const Grammar& g) {
  std::vector<RankedQuery> out;
  out.reserve(static_cast<std::size_t>(g.expansion_size()));
  g.for_each_query([&](std::span<const TokenId>, double p, std::uint64_t i) {
    out.push_back({i, p});
  });
  std::vector<TokenId> ta, tb;
  std::sort(out.begin(), out.end(),
            [&](const RankedQuery& a, const RankedQuery& b) {
              if (a.joint_prob != b.joint_prob) {
                return a.joint_prob > b.joint_prob;
              }
              g.tokens_of(g.derivation(a.index), ta);
              g.tokens_of(g.derivation(b.index), tb);
              if (ta != tb) return detail::words_less(g.vocabulary(), ta, tb);
              return a.index < b.index;
            });
  return out;
}

// ---------------------------------------------------------------------------
// Sampling

// Weighted sampling without replacement (exponential-key method): item i
// gets key log(u_i) / w_i and the k largest keys win. Returns positions
// into `weights` ordered by key.
inline std::vector<std::size_t> weighted_sample(std::span<const double> weights,
                                                std::size_t k,
                                                std::uint64_t seed) {
  if (k >= weights.size()) k = weights.size();
  Rng rng(seed);
  std::vector<std::pair<double, std::size_t>> keys(weights.size());
  for (std::size_t i = 0; i < weights.size(); ++i) {
    keys[i] = {std::log(uniform_open01(rng)) / weights[i], i};
  }
  auto better = [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  };
  std::partial_sort(keys.begin(), keys.begin() + static_cast<long>(k),
                    keys.end(), better);
  std::vector<std::size_t> out(k);
  for (std::size_t i = 0; i < k; ++i) out[i] = keys[i].second;
  return out;
}

// Draws k queries of one stratum without replacement, weighted by joint
// probability. k larger than the stratum returns all of it.
inline std::vector<ExpandedQuery> sample_stratum(
    std::span<const ExpandedQuery> queries, std::span<const Stratum> strata,
    Stratum which, std::size_t k, std::uint64_t seed) {
  if (queries.size() != strata.size()) {
    throw Error("sample_stratum: strata do not match queries");
  }
  std::vector<std::size_t> members;
  std::vector<double> weights;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    if (strata[i] == which) {
      members.push_back(i);
      weights.push_back(queries[i].joint_prob);
    }
  }
  if (members.empty()) {
    throw Error("sample_stratum: stratum '" + std::string(to_string(which)) +
                "' is empty");
  }
  std::vector<ExpandedQuery> out;
  for (std::size_t pos : weighted_sample(weights, k, seed)) {
    out.push_back(queries[members[pos]]);
  }
  return out;
}

// Same over a ranked expansion; returns query indices.
inline std::vector<std::uint64_t> sample_stratum(
    std::span<const RankedQuery> ranked, Stratum which, std::size_t k,
    std::uint64_t seed) {
  const std::size_t n = ranked.size();
  std::size_t lo = 0, hi = 0;
  switch (which) {
    case Stratum::kHead:
      lo = 0, hi = head_size(n);
      break;
    case Stratum::kTorso:
      lo = head_size(n), hi = head_torso_size(n);
      break;
    case Stratum::kTail:
      lo = head_torso_size(n), hi = n;
      break;
  }
  if (lo >= hi) {
    throw Error("sample_stratum: stratum '" + std::string(to_string(which)) +
                "' is empty");
  }
  std::vector<double> weights(hi - lo);
  for (std::size_t i = lo; i < hi; ++i) weights[i - lo] = ranked[i].joint_prob;
  std::vector<std::uint64_t> out;
  for (std::size_t pos : weighted_sample(weights, k, seed)) {
    out.push_back(ranked[lo + pos].index);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Collisions

struct Collision {
  enum class Kind : std::uint8_t {
    kEntry,  // first entity token continues the template prefix
    kExit,   // token after the slot continues the entity context
  };
  std::uint64_t index = 0;
  Kind kind = Kind::kEntry;
  std::size_t slot = 0;
  TokenId token = 0;
  std::vector<TokenId> shadowing_prefix;  // template prefix or entity context
  std::string reason;
};

// Finds queries whose intended derivation cannot be followed once regular
// symbols take precedence over entering or leaving the entity network:
// either the first entity token is also a template continuation of the
// prefix before the slot, or the token after the slot is also a
// continuation of the entity n-gram context (order `order`) reached at the
// end of the entity. Only the first shadowing point of a query is reported.
class CollisionDetector {
 public:
  CollisionDetector(const Grammar& g, int order) : g_(&g), order_(order) {
    if (order < 2) throw Error("collision_report: n-gram order must be >= 2");
    const auto& ts = g.templates();
    for (const auto& t : ts) {
      std::vector<TokenId> prefix;
      for (TokenId tok : t.tokens) {
        if (tok != Vocabulary::kNonterminal) template_next_[prefix].insert(tok);
        prefix.push_back(tok);
      }
    }
    for (const auto& e : g.entities()) {
      for (std::size_t i = 0; i < e.tokens.size(); ++i) {
        entity_next_[Context(e.tokens, i)].insert(e.tokens[i]);
      }
    }
    // Per template slot: continuation set before the slot and the token
    // after it (0 when the slot ends the template).
    slots_.resize(ts.size());
    for (std::size_t t = 0; t < ts.size(); ++t) {
      std::vector<TokenId> prefix;
      const auto& toks = ts[t].tokens;
      for (std::size_t i = 0; i < toks.size(); ++i) {
        if (toks[i] == Vocabulary::kNonterminal) {
          SlotInfo s;
          s.prefix = prefix;
          if (auto it = template_next_.find(prefix); it != template_next_.end()) {
            s.next = &it->second;
          }
          s.after = i + 1 < toks.size() ? toks[i + 1] : Vocabulary::kEos;
          slots_[t].push_back(std::move(s));
        }
        prefix.push_back(toks[i]);
      }
    }
    ends_.resize(g.entities().size(), nullptr);
    for (std::size_t e = 0; e < g.entities().size(); ++e) {
      const auto& toks = g.entities()[e].tokens;
      if (auto it = entity_next_.find(Context(toks, toks.size()));
          it != entity_next_.end()) {
        ends_[e] = &it->second;
      }
    }
  }

  std::optional<Collision> check(const Derivation& d) const {
    const auto& slots = slots_[d.template_index];
    for (std::size_t k = 0; k < slots.size(); ++k) {
      const auto& s = slots[k];
      const auto& etoks = g_->entities()[d.entities[k]].tokens;
      if (s.next && s.next->count(etoks.front())) {
        Collision c;
        c.kind = Collision::Kind::kEntry;
        c.slot = k;
        c.token = etoks.front();
        c.shadowing_prefix = s.prefix;
        return c;
      }
      const auto* cont = ends_[d.entities[k]];
      if (s.after != Vocabulary::kEos && cont && cont->count(s.after)) {
        Collision c;
        c.kind = Collision::Kind::kExit;
        c.slot = k;
        c.token = s.after;
        c.shadowing_prefix = Context(etoks, etoks.size());
        return c;
      }
    }
    return std::nullopt;
  }

  std::string describe(const Collision& c) const {
    const auto& v = g_->vocabulary();
    std::string ctx = v.join(c.shadowing_prefix);
    if (c.kind == Collision::Kind::kEntry) {
      return "entry shadowed: '" + v.word(c.token) +
             "' continues template prefix '" + ctx + "'";
    }
    return "exit shadowed: '" + v.word(c.token) +
           "' continues entity context '" + ctx + "'";
  }

 private:
  struct SlotInfo {
    std::vector<TokenId> prefix;
    const std::unordered_set<TokenId>* next = nullptr;
    TokenId after = Vocabulary::kEos;
  };

  // Entity n-gram context after the first `len` tokens: the last
  // min(len, order - 1) of them.
  std::vector<TokenId> Context(const std::vector<TokenId>& toks,
                               std::size_t len) const {
    const std::size_t keep = std::min<std::size_t>(len, order_ - 1);
    return std::vector<TokenId>(toks.begin() + static_cast<long>(len - keep),
                                toks.begin() + static_cast<long>(len));
  }

  const Grammar* g_;
  int order_;
  std::unordered_map<std::vector<TokenId>, std::unordered_set<TokenId>,
                     TokenSeqHash>
      template_next_, entity_next_;
  std::vector<std::vector<SlotInfo>> slots_;
  std::vector<const std::unordered_set<TokenId>*> ends_;
};

inline std::vector<Collision> collision_report(const Grammar& g,
                                               int order = 3) {
  CollisionDetector det(g, order);
  std::vector<Collision> out;
  std::vector<TokenId> scratch;
  for (std::uint64_t i = 0; i < g.expansion_size(); ++i) {
    if (auto c = det.check(g.derivation(i))) {
      c->index = i;
      c->reason = det.describe(*c);
      out.push_back(std::move(*c));
    }
  }
  return out;
}

}  // namespace phirtn

#endif  // PHIRTN_GRAMMAR_HPP_
