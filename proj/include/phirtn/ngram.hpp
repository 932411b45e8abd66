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
// Back-off n-gram models: weighted corpora, Witten-Bell estimation with
// fractional counts, relative-entropy pruning, ARPA text and the binary
// container (model kind 1).

#ifndef PHIRTN_NGRAM_HPP_
#define PHIRTN_NGRAM_HPP_

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "phirtn/error.hpp"
#include "phirtn/grammar.hpp"
#include "phirtn/language_model.hpp"
#include "phirtn/serialization.hpp"
#include "phirtn/vocabulary.hpp"

namespace phirtn {

// ---------------------------------------------------------------------------
// Weighted corpora

struct WeightedSentence {
  std::vector<TokenId> tokens;
  double count = 1.0;
};

// Sentences with positive real pseudo-counts. Either an explicit list or a
// view of a grammar's full expansion with count = joint / min joint, which
// is streamed rather than stored.
class WeightedCorpus {
 public:
  WeightedCorpus(Vocabulary vocab, std::vector<WeightedSentence> sentences)
      : vocab_(std::move(vocab)), sentences_(std::move(sentences)) {
    if (sentences_.empty()) throw Error("weighted corpus: no sentences");
    for (const auto& s : sentences_) {
      if (!(s.count > 0.0) || !std::isfinite(s.count)) {
        throw Error("weighted corpus: counts must be positive");
      }
    }
  }

  static WeightedCorpus from_grammar(const Grammar& g) {
    WeightedCorpus c(g.vocabulary());
    double min_joint = 1.0;
    for (std::size_t t = 0; t < g.templates().size(); ++t) {
      // Same multiplication order as Grammar::joint_prob.
      Derivation d;
      d.template_index = t;
      const auto& ents = g.entities();
      std::size_t lightest = 0;
      for (std::size_t e = 1; e < ents.size(); ++e) {
        if (ents[e].prob < ents[lightest].prob) lightest = e;
      }
      d.entities.assign(g.templates()[t].slot_count(), lightest);
      min_joint = std::min(min_joint, g.joint_prob(d));
    }
    c.grammar_ = g;
    c.scale_ = 1.0 / min_joint;
    return c;
  }

  const Vocabulary& vocabulary() const { return vocab_; }

  std::uint64_t size() const {
    return grammar_ ? grammar_->expansion_size() : sentences_.size();
  }

  // fn(std::span<const TokenId> tokens, double count)
  template <class Fn>
  void for_each(Fn&& fn) const {
    if (grammar_) {
      grammar_->for_each_query(
          [&](std::span<const TokenId> toks, double p, std::uint64_t) {
            fn(toks, p * scale_);
          });
      return;
    }
    for (const auto& s : sentences_) {
      fn(std::span<const TokenId>(s.tokens), s.count);
    }
  }

 private:
  explicit WeightedCorpus(Vocabulary vocab) : vocab_(std::move(vocab)) {}

  Vocabulary vocab_;
  std::vector<WeightedSentence> sentences_;
  std::optional<Grammar> grammar_;
  double scale_ = 1.0;
};

// Pseudo-count of each query = joint_prob / min joint_prob, so the rarest
// query counts once.
inline WeightedCorpus make_weighted_corpus(
    std::span<const ExpandedQuery> queries, const Vocabulary& vocab) {
  if (queries.empty()) throw Error("weighted corpus: empty expansion");
  double min_joint = queries.front().joint_prob;
  for (const auto& q : queries) min_joint = std::min(min_joint, q.joint_prob);
  if (!(min_joint > 0.0)) throw Error("weighted corpus: zero probability");
  std::vector<WeightedSentence> out;
  out.reserve(queries.size());
  for (const auto& q : queries) out.push_back({q.tokens, q.joint_prob / min_joint});
  return WeightedCorpus(vocab, std::move(out));
}

// ---------------------------------------------------------------------------
// Counting

// N-gram counts over <s> w_1 .. w_m </s>, stored as a trie.
class NgramCounts {
 public:
  NgramCounts(int order, std::size_t vocab_size)
      : order_(order), vocab_size_(vocab_size) {
    if (order < 1) throw Error("n-gram order must be >= 1");
    count_.push_back(0.0);
    word_.push_back(0);
    parent_.push_back(0);
    depth_.push_back(0);
  }

  void add(std::span<const TokenId> tokens, double c) {
    padded_.clear();
    padded_.push_back(Vocabulary::kBos);
    for (TokenId t : tokens) {
      if (t >= vocab_size_ || t == Vocabulary::kBos ||
          t == Vocabulary::kNonterminal || t == Vocabulary::kEos) {
        throw Error("n-gram counts: token id not a word");
      }
      padded_.push_back(t);
    }
    padded_.push_back(Vocabulary::kEos);
    for (std::size_t j = 0; j < padded_.size(); ++j) {
      std::uint32_t node = 0;
      const std::size_t last = std::min(padded_.size(), j + order_);
      for (std::size_t k = j; k < last; ++k) {
        node = Child(node, padded_[k]);
        count_[node] += c;
      }
    }
  }

  int order() const { return order_; }
  std::size_t node_count() const { return count_.size(); }
  double count(std::uint32_t node) const { return count_[node]; }
  TokenId word(std::uint32_t node) const { return word_[node]; }
  std::uint32_t parent(std::uint32_t node) const { return parent_[node]; }
  int depth(std::uint32_t node) const { return depth_[node]; }

 private:
  std::uint32_t Child(std::uint32_t p, TokenId w) {
    const std::uint64_t key = (static_cast<std::uint64_t>(p) << 32) | w;
    auto [it, added] =
        index_.try_emplace(key, static_cast<std::uint32_t>(count_.size()));
    if (added) {
      count_.push_back(0.0);
      word_.push_back(w);
      parent_.push_back(p);
      depth_.push_back(static_cast<std::uint8_t>(depth_[p] + 1));
    }
    return it->second;
  }

  int order_;
  std::size_t vocab_size_;
  std::vector<double> count_;
  std::vector<TokenId> word_;
  std::vector<std::uint32_t> parent_;
  std::vector<std::uint8_t> depth_;
  std::unordered_map<std::uint64_t, std::uint32_t> index_;
  std::vector<TokenId> padded_;
};

// ---------------------------------------------------------------------------
// Model

struct NgramState {
  std::uint8_t order = 0;  // context length; 0 is the empty context
  std::uint32_t index = 0;
  friend bool operator==(const NgramState&, const NgramState&) = default;
};

struct WittenBellOptions {
  // false: explicit P(w|h) = c(h,w) / (c(h) + T(h)), the leftover backs
  // off. true: P(w|h) = (c(h,w) + T(h) P(w|h')) / (c(h) + T(h)).
  bool interpolate = false;
};

class BackoffNgramModel {
 public:
  using State = NgramState;

  struct Entry {
    TokenId word = 0;
    std::uint32_t parent = 0;  // index in the previous order
    double logprob = kNegInf;  // natural log
    double logbow = 0.0;       // meaningful when the entry has children
    std::uint32_t child_begin = 0, child_end = 0;

    bool has_children() const { return child_end > child_begin; }
  };

  int order() const { return static_cast<int>(orders_.size()); }
  const Vocabulary& vocabulary() const { return vocab_; }
  const std::vector<Entry>& entries(int k) const { return orders_[k - 1]; }

  std::size_t entry_count() const {
    std::size_t n = 0;
    for (const auto& o : orders_) n += o.size();
    return n;
  }

  // Entries of order >= 2; the prunable part of the model.
  std::size_t explicit_count() const {
    return entry_count() - (orders_.empty() ? 0 : orders_[0].size());
  }

  State start() const { return start_; }

  Step<State> step(const State& s, TokenId token) const {
    return Score(s, vocab_.scorable(token));
  }

  double end(const State& s) const {
    return Score(s, Vocabulary::kEos).logprob;
  }

  // Tokens of the n-gram an entry stands for.
  std::vector<TokenId> ngram(int k, std::uint32_t index) const {
    std::vector<TokenId> out(k);
    for (int j = k; j >= 1; --j) {
      const Entry& e = orders_[j - 1][index];
      out[j - 1] = e.word;
      index = e.parent;
    }
    return out;
  }

  // Index of an n-gram's entry in order tokens.size(), if present.
  std::optional<std::uint32_t> find(std::span<const TokenId> tokens) const {
    if (tokens.empty() || tokens.size() > orders_.size()) return std::nullopt;
    std::uint32_t idx = 0;
    for (std::size_t j = 0; j < tokens.size(); ++j) {
      const auto& level = orders_[j];
      std::size_t lo = 0, hi = level.size();
      if (j > 0) {
        const Entry& p = orders_[j - 1][idx];
        lo = p.child_begin;
        hi = p.child_end;
      }
      const auto it = std::lower_bound(
          level.begin() + lo, level.begin() + hi, tokens[j],
          [](const Entry& e, TokenId w) { return e.word < w; });
      if (it == level.begin() + hi || it->word != tokens[j]) return std::nullopt;
      idx = static_cast<std::uint32_t>(it - level.begin());
    }
    return idx;
  }

  // log P(w | context) with back-off; the context is used from its
  // longest suffix present in the model.
  double logprob(std::span<const TokenId> context, TokenId w) const {
    const std::size_t max_ctx = orders_.size() - 1;
    if (context.size() > max_ctx) context = context.last(max_ctx);
    double acc = 0.0;
    for (std::size_t skip = 0; skip <= context.size(); ++skip) {
      const auto ctx = context.subspan(skip);
      std::optional<std::uint32_t> c;
      if (!ctx.empty()) {
        c = find(ctx);
        if (!c) continue;
      }
      const State st{static_cast<std::uint8_t>(ctx.size()), c.value_or(0)};
      if (const auto idx = FindChild(st, w)) {
        return acc + orders_[ctx.size()][*idx].logprob;
      }
      if (!ctx.empty()) {
        const Entry& h = orders_[ctx.size() - 1][*c];
        if (h.has_children()) acc += h.logbow;
      }
    }
    return kNegInf;
  }

  // Max over contexts of |sum explicit P + bow * (1 - sum explicit P_bo) - 1|
  // and of the unigram level's |sum - 1|.
  double max_normalization_error() const {
    CompensatedSum uni;
    for (const auto& e : orders_[0]) {
      if (vocab_.is_event(e.word)) uni.add(std::exp(e.logprob));
    }
    double worst = std::abs(uni.value() - 1.0);
    for (int k = 1; k < order(); ++k) {
      for (std::uint32_t i = 0; i < orders_[k - 1].size(); ++i) {
        const Entry& h = orders_[k - 1][i];
        if (!h.has_children()) continue;
        const auto ctx = ngram(k, i);
        const auto shorter = std::span<const TokenId>(ctx).subspan(1);
        CompensatedSum expl, lower;
        for (auto c = h.child_begin; c < h.child_end; ++c) {
          const TokenId w = orders_[k][c].word;
          expl.add(std::exp(orders_[k][c].logprob));
          lower.add(std::exp(logprob(shorter, w)));
        }
        const double total =
            expl.value() + std::exp(h.logbow) * (1.0 - lower.value());
        worst = std::max(worst, std::abs(total - 1.0));
      }
    }
    return worst;
  }

  // Drops entries (order >= 2) whose mask bit is false, keeping every
  // ancestor of a kept entry, and recomputes back-off weights.
  BackoffNgramModel subset(const std::vector<std::vector<bool>>& keep) const {
    BackoffNgramModel m;
    m.vocab_ = vocab_;
    m.orders_.resize(orders_.size());
    m.orders_[0] = orders_[0];
    std::vector<std::uint32_t> remap(orders_[0].size());
    for (std::uint32_t i = 0; i < remap.size(); ++i) remap[i] = i;
    for (std::size_t k = 1; k < orders_.size(); ++k) {
      std::vector<std::uint32_t> next(orders_[k].size(), kDropped);
      auto& out = m.orders_[k];
      for (std::uint32_t i = 0; i < orders_[k].size(); ++i) {
        const Entry& e = orders_[k][i];
        if (!keep[k][i] || remap[e.parent] == kDropped) continue;
        next[i] = static_cast<std::uint32_t>(out.size());
        Entry copy = e;
        copy.parent = remap[e.parent];
        out.push_back(copy);
      }
      remap = std::move(next);
    }
    m.Link();
    m.ComputeBackoffWeights();
    return m;
  }

  Container to_container() const {
    Container c(ModelKind::kBackoffNgram);
    c.add(section::kVocabulary, encode_vocabulary(vocab_));
    ByteWriter w;
    w.u32(static_cast<std::uint32_t>(orders_.size()));
    for (std::size_t k = 0; k < orders_.size(); ++k) {
      const bool inner = k + 1 < orders_.size();
      w.u32(static_cast<std::uint32_t>(orders_[k].size()));
      for (const Entry& e : orders_[k]) {
        w.u32(e.word);
        w.f64(e.logprob);
        if (inner) {
          w.u32(e.child_end - e.child_begin);
          if (e.has_children()) w.f64(e.logbow);
        }
      }
    }
    c.add(section::kNgramOrders, w.take());
    return c;
  }

  static BackoffNgramModel from_container(const Container& c) {
    if (c.kind() != ModelKind::kBackoffNgram) {
      throw Error("not a back-off n-gram model");
    }
    BackoffNgramModel m;
    m.vocab_ = decode_vocabulary(c.get(section::kVocabulary).bytes);
    ByteReader r(c.get(section::kNgramOrders).bytes);
    const std::uint32_t n = r.count(4);
    if (n < 1 || n > 255) throw Error("model file: bad n-gram order");
    m.orders_.resize(n);
    std::uint64_t expected = 0;  // children announced by the previous order
    for (std::uint32_t k = 0; k < n; ++k) {
      const bool inner = k + 1 < n;
      const std::uint32_t count = r.count(12);
      if (k > 0 && count != expected) {
        throw Error("model file: n-gram child counts do not match");
      }
      expected = 0;
      auto& level = m.orders_[k];
      level.resize(count);
      std::uint32_t parent = 0, remaining = 0;
      for (std::uint32_t i = 0; i < count; ++i) {
        Entry& e = level[i];
        if (k > 0) {
          while (remaining == 0) {
            const Entry& p = m.orders_[k - 1][parent];
            remaining = p.child_end - p.child_begin;
            if (remaining == 0) ++parent;
          }
          e.parent = parent;
          if (--remaining == 0) ++parent;
        }
        e.word = r.u32();
        if (e.word >= m.vocab_.size()) throw Error("model file: bad word id");
        e.logprob = r.f64();
        if (inner) {
          const std::uint32_t children = r.u32();
          e.child_begin = static_cast<std::uint32_t>(expected);
          expected += children;
          e.child_end = static_cast<std::uint32_t>(expected);
          if (children > 0) e.logbow = r.f64();
        }
      }
    }
    if (expected != 0 || !r.done()) throw Error("model file: bad n-gram data");
    m.Link();
    return m;
  }

  // ARPA text: log10 values with 7 decimals, entries in storage order,
  // back-off weights only on entries that have continuations.
  std::string to_arpa() const {
    std::string out = "\n\\data\\\n";
    char buf[64];
    for (std::size_t k = 0; k < orders_.size(); ++k) {
      std::snprintf(buf, sizeof buf, "ngram %zu=%zu\n", k + 1,
                    orders_[k].size());
      out += buf;
    }
    for (std::size_t k = 0; k < orders_.size(); ++k) {
      std::snprintf(buf, sizeof buf, "\n\\%zu-grams:\n", k + 1);
      out += buf;
      for (std::uint32_t i = 0; i < orders_[k].size(); ++i) {
        const Entry& e = orders_[k][i];
        out += FormatLog10(e.logprob);
        out += '\t';
        out += vocab_.join(ngram(static_cast<int>(k + 1), i));
        if (e.has_children()) {
          out += '\t';
          out += FormatLog10(e.logbow);
        }
        out += '\n';
      }
    }
    out += "\n\\end\\\n";
    return out;
  }

  static BackoffNgramModel from_arpa(
      std::string_view text,
      std::string_view nonterminal = Vocabulary::kDefaultNonterminal);

 private:
  friend class WittenBellEstimator;
  friend class EntropyPruner;
  static constexpr std::uint32_t kDropped = 0xffffffffu;

  static std::string FormatLog10(double ln) {
    if (ln == kNegInf || ln / std::numbers::ln10 <= -99.0) return "-99";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.7f", ln / std::numbers::ln10);
    return buf;
  }

  std::optional<std::uint32_t> FindChild(const State& s, TokenId w) const {
    if (s.order == 0) {
      const TokenId idx = w < unigram_index_.size() ? unigram_index_[w] : kDropped;
      if (idx == kDropped) return std::nullopt;
      return idx;
    }
    if (s.order >= orders_.size()) return std::nullopt;
    const Entry& h = orders_[s.order - 1][s.index];
    const auto& level = orders_[s.order];
    const auto first = level.begin() + h.child_begin;
    const auto last = level.begin() + h.child_end;
    const auto it = std::lower_bound(
        first, last, w, [](const Entry& e, TokenId x) { return e.word < x; });
    if (it == last || it->word != w) return std::nullopt;
    return static_cast<std::uint32_t>(it - level.begin());
  }

  State Suffix(const State& s) const {
    if (s.order <= 1) return {};
    return suffix_[s.order - 1][s.index];
  }

  Step<State> Score(State ctx, TokenId w) const {
    double acc = 0.0;
    while (true) {
      if (const auto idx = FindChild(ctx, w)) {
        const double lp = acc + orders_[ctx.order][*idx].logprob;
        State next{static_cast<std::uint8_t>(ctx.order + 1), *idx};
        while (next.order > 0 &&
               (next.order >= orders_.size() ||
                !orders_[next.order - 1][next.index].has_children())) {
          next = Suffix(next);
        }
        return {lp, next};
      }
      if (ctx.order == 0) return {kNegInf, {}};
      acc += orders_[ctx.order - 1][ctx.index].logbow;
      ctx = Suffix(ctx);
    }
  }

  // Child ranges from parents, suffix links, the unigram index and the
  // start state. Entries must be sorted by (parent, word).
  void Link() {
    for (std::size_t k = 0; k + 1 < orders_.size(); ++k) {
      for (auto& e : orders_[k]) e.child_begin = e.child_end = 0;
      const auto& next = orders_[k + 1];
      for (std::uint32_t i = 0; i < next.size(); ++i) {
        Entry& p = orders_[k][next[i].parent];
        if (p.child_end == 0) p.child_begin = i;
        p.child_end = i + 1;
      }
    }
    for (auto& e : orders_.back()) e.child_begin = e.child_end = 0;
    unigram_index_.assign(vocab_.size(), kDropped);
    for (std::uint32_t i = 0; i < orders_[0].size(); ++i) {
      unigram_index_[orders_[0][i].word] = i;
    }
    suffix_.assign(orders_.size(), {});
    for (std::size_t k = 1; k < orders_.size(); ++k) {
      suffix_[k].resize(orders_[k].size());
      for (std::uint32_t i = 0; i < orders_[k].size(); ++i) {
        const auto toks = ngram(static_cast<int>(k + 1), i);
        State link{};
        for (std::size_t skip = 1; skip < toks.size(); ++skip) {
          if (auto idx = find(std::span<const TokenId>(toks).subspan(skip))) {
            link = {static_cast<std::uint8_t>(toks.size() - skip), *idx};
            break;
          }
        }
        suffix_[k][i] = link;
      }
    }
    start_ = {};
    if (orders_.size() > 1) {
      const TokenId bos = unigram_index_[Vocabulary::kBos];
      if (bos != kDropped && orders_[0][bos].has_children()) start_ = {1, bos};
    }
  }

  // Back-off weights from explicit probabilities, lowest order first.
  void ComputeBackoffWeights() {
    for (int k = 1; k < order(); ++k) ComputeBackoffWeightsAt(k);
  }

  // Back-off weights of the order-k contexts; orders below k must be done.
  void ComputeBackoffWeightsAt(int k) {
    {
      for (std::uint32_t i = 0; i < orders_[k - 1].size(); ++i) {
        Entry& h = orders_[k - 1][i];
        if (!h.has_children()) {
          h.logbow = 0.0;
          continue;
        }
        const auto ctx = ngram(k, i);
        const auto shorter = std::span<const TokenId>(ctx).subspan(1);
        CompensatedSum expl, lower;
        for (auto c = h.child_begin; c < h.child_end; ++c) {
          expl.add(std::exp(orders_[k][c].logprob));
          lower.add(std::exp(logprob(shorter, orders_[k][c].word)));
        }
        h.logbow = BackoffLogWeight(1.0 - expl.value(), 1.0 - lower.value());
      }
    }
  }

  static double BackoffLogWeight(double numerator, double denominator) {
    if (numerator <= 0.0) return kNegInf;
    // Every lower-order event is explicit: no mass can be routed there.
    if (denominator <= 0.0) return kNegInf;
    return std::log(numerator) - std::log(denominator);
  }

  Vocabulary vocab_;
  std::vector<std::vector<Entry>> orders_;
  std::vector<std::vector<State>> suffix_;  // per order, longest suffix
  std::vector<TokenId> unigram_index_;
  State start_{};
};

// ---------------------------------------------------------------------------
// Witten-Bell estimation

class WittenBellEstimator {
 public:
  static BackoffNgramModel Estimate(const WeightedCorpus& corpus, int n,
                                    const WittenBellOptions& options) {
    if (n < 1) throw Error("witten-bell: order must be >= 1");
    const Vocabulary& vocab = corpus.vocabulary();
    NgramCounts counts(n, vocab.size());
    corpus.for_each(
        [&](std::span<const TokenId> toks, double c) { counts.add(toks, c); });
    BackoffNgramModel m;
    m.vocab_ = vocab;
    m.orders_.resize(n);

    // Trie nodes grouped by depth in (parent, word) order.
    std::vector<std::vector<std::uint32_t>> by_depth(n + 1);
    for (std::uint32_t i = 1; i < counts.node_count(); ++i) {
      by_depth[counts.depth(i)].push_back(i);
    }
    std::vector<std::uint32_t> position(counts.node_count(), 0);
    for (int k = 1; k <= n; ++k) {
      auto& nodes = by_depth[k];
      std::sort(nodes.begin(), nodes.end(),
                [&](std::uint32_t a, std::uint32_t b) {
                  const auto pa = position[counts.parent(a)];
                  const auto pb = position[counts.parent(b)];
                  if (pa != pb) return pa < pb;
                  return counts.word(a) < counts.word(b);
                });
      for (std::uint32_t i = 0; i < nodes.size(); ++i) position[nodes[i]] = i;
    }

    // Unigrams: every event gets an entry, plus <s> as a context.
    {
      std::vector<double> c(vocab.size(), 0.0);
      for (std::uint32_t node : by_depth[1]) c[counts.word(node)] = counts.count(node);
      double total = 0.0;
      std::size_t types = 0, unseen = 0, events = 0;
      for (TokenId w = 0; w < vocab.size(); ++w) {
        if (!vocab.is_event(w)) continue;
        ++events;
        total += c[w];
        if (c[w] > 0.0) {
          ++types;
        } else {
          ++unseen;
        }
      }
      const double denom = total + static_cast<double>(types);
      const double reserve = static_cast<double>(types) / denom;
      auto& level = m.orders_[0];
      for (TokenId w = 0; w < vocab.size(); ++w) {
        const bool bos = w == Vocabulary::kBos && c[w] > 0.0 && n > 1;
        if (!vocab.is_event(w) && !bos) continue;
        BackoffNgramModel::Entry e;
        e.word = w;
        if (bos) {
          e.logprob = kNegInf;
        } else if (options.interpolate) {
          e.logprob = std::log((c[w] + static_cast<double>(types) /
                                           static_cast<double>(events)) /
                               denom);
        } else if (c[w] > 0.0) {
          const double extra =
              unseen == 0 ? reserve / static_cast<double>(events) : 0.0;
          e.logprob = std::log(c[w] / denom + extra);
        } else {
          e.logprob = std::log(reserve / static_cast<double>(unseen));
        }
        level.push_back(e);
      }
    }
    // Map trie nodes of depth 1 to unigram entries.
    std::vector<std::uint32_t> entry_of(counts.node_count(), kNone);
    {
      std::vector<std::uint32_t> by_word(vocab.size(), kNone);
      for (std::uint32_t i = 0; i < m.orders_[0].size(); ++i) {
        by_word[m.orders_[0][i].word] = i;
      }
      for (std::uint32_t node : by_depth[1]) {
        entry_of[node] = by_word[counts.word(node)];
      }
    }

    m.Link();
    // Higher orders, one at a time, so lower-order probabilities (and back-off
    // weights) are final when needed.
    for (int k = 2; k <= n; ++k) {
      auto& level = m.orders_[k - 1];
      const auto& nodes = by_depth[k];
      // Context totals and type counts.
      std::unordered_map<std::uint32_t, std::pair<double, double>> ctx;
      for (std::uint32_t node : nodes) {
        auto& t = ctx[counts.parent(node)];
        t.first += counts.count(node);
        t.second += counts.count(node) > 0.0 ? 1.0 : 0.0;
      }
      for (std::uint32_t node : nodes) {
        const std::uint32_t parent_entry = entry_of[counts.parent(node)];
        if (parent_entry == kNone) continue;
        BackoffNgramModel::Entry e;
        e.word = counts.word(node);
        e.parent = parent_entry;
        const auto [total, types] = ctx[counts.parent(node)];
        const double c = counts.count(node);
        if (options.interpolate) {
          const auto hist = m.ngram(k - 1, parent_entry);
          const double lower = std::exp(
              m.logprob(std::span<const TokenId>(hist).subspan(1), e.word));
          e.logprob = std::log((c + types * lower) / (total + types));
        } else {
          e.logprob = std::log(c / (total + types));
        }
        entry_of[node] = static_cast<std::uint32_t>(level.size());
        level.push_back(e);
      }
      // Order k - 1 now has its continuations; its back-off weights only
      // need the orders below.
      m.Link();
      m.ComputeBackoffWeightsAt(k - 1);
    }
    return m;
  }

 private:
  static constexpr std::uint32_t kNone = 0xffffffffu;
};

inline BackoffNgramModel estimate_witten_bell(
    const WeightedCorpus& corpus, int n, const WittenBellOptions& options = {}) {
  return WittenBellEstimator::Estimate(corpus, n, options);
}

// ---------------------------------------------------------------------------
// Relative-entropy pruning

// Per-entry cost of removing an n-gram (h, w) and backing off instead:
//
//   dH = -P(h) [ P(w|h) (ln P'(w|h) - ln P(w|h)) + N(h) (ln b'(h) - ln b(h)) ]
//
// with N(h) the non-explicit mass at h, b'(h) the back-off weight after
// removing w and P'(w|h) = b'(h) P(w|h'). The pruning score is the relative
// perplexity increase exp(dH) - 1. Costs are taken on the unpruned model
// with every other entry in place, processing the highest order first, so
// they do not depend on the threshold; one analysis serves a whole sweep.
class EntropyPruner {
 public:
  explicit EntropyPruner(const BackoffNgramModel& model) : model_(&model) {
    const int n = model.order();
    cost_.resize(n);
    for (int k = 2; k <= n; ++k) {
      cost_[k - 1].assign(model.entries(k).size(), 0.0);
      const auto& hist = model.entries(k - 1);
      for (std::uint32_t i = 0; i < hist.size(); ++i) {
        const auto& h = hist[i];
        if (!h.has_children()) continue;
        const auto ctx = model.ngram(k - 1, i);
        const auto shorter = std::span<const TokenId>(ctx).subspan(1);
        const double log_ph = HistoryLogprob(ctx);
        const double ph = std::exp(log_ph);
        CompensatedSum expl, lower;
        std::vector<double> lower_p;
        for (auto c = h.child_begin; c < h.child_end; ++c) {
          const auto& e = model.entries(k)[c];
          expl.add(std::exp(e.logprob));
          lower_p.push_back(std::exp(model.logprob(shorter, e.word)));
          lower.add(lower_p.back());
        }
        const double num = 1.0 - expl.value();
        const double den = 1.0 - lower.value();
        const double bow = h.logbow;
        for (auto c = h.child_begin; c < h.child_end; ++c) {
          const auto& e = model.entries(k)[c];
          const double p = std::exp(e.logprob);
          const double pbo = lower_p[c - h.child_begin];
          const double new_bow = std::log(num + p) - std::log(den + pbo);
          double dh = p * (new_bow + std::log(pbo) - e.logprob);
          if (num > 0.0) dh += num * (new_bow - bow);
          dh = -ph * dh;
          cost_[k - 1][c] = std::expm1(dh);
        }
      }
    }
  }

  double cost(int k, std::uint32_t index) const { return cost_[k - 1][index]; }

  // Removes every entry with cost < theta that has no surviving
  // continuation. theta <= 0 returns the model unchanged.
  BackoffNgramModel prune(double theta) const {
    const BackoffNgramModel& m = *model_;
    if (!(theta > 0.0)) return m;
    const int n = m.order();
    std::vector<std::vector<bool>> keep(n);
    keep[0].assign(m.entries(1).size(), true);
    bool any = false;
    for (int k = n; k >= 2; --k) {
      const auto& level = m.entries(k);
      keep[k - 1].assign(level.size(), true);
      for (std::uint32_t i = 0; i < level.size(); ++i) {
        bool has_kept_child = false;
        if (k < n) {
          for (auto c = level[i].child_begin; c < level[i].child_end; ++c) {
            if (keep[k][c]) {
              has_kept_child = true;
              break;
            }
          }
        }
        if (!has_kept_child && cost_[k - 1][i] < theta) {
          keep[k - 1][i] = false;
          any = true;
        }
      }
    }
    if (!any) return m;
    return m.subset(keep);
  }

 private:
  // ln P(h) by the chain rule, a leading <s> counting as certain.
  double HistoryLogprob(const std::vector<TokenId>& h) const {
    double lp = 0.0;
    for (std::size_t i = 0; i < h.size(); ++i) {
      if (i == 0 && h[0] == Vocabulary::kBos) continue;
      lp += model_->logprob(std::span<const TokenId>(h).first(i), h[i]);
    }
    return lp;
  }

  const BackoffNgramModel* model_;
  std::vector<std::vector<double>> cost_;
};

inline BackoffNgramModel entropy_prune(const BackoffNgramModel& model,
                                       double theta) {
  if (!(theta >= 0.0)) throw Error("entropy_prune: theta must be >= 0");
  if (theta == 0.0) return model;
  return EntropyPruner(model).prune(theta);
}

// The threshold set {0} and 4^-i for 4 <= i < 20, ascending.
inline std::vector<double> pruning_thresholds() {
  std::vector<double> out{0.0};
  for (int i = 19; i >= 4; --i) out.push_back(std::pow(4.0, -i));
  return out;
}

// ---------------------------------------------------------------------------
// ARPA import

inline BackoffNgramModel BackoffNgramModel::from_arpa(
    std::string_view text, std::string_view nonterminal) {
  std::vector<std::string_view> lines;
  while (!text.empty()) {
    const std::size_t nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    text = nl == std::string_view::npos ? std::string_view{}
                                        : text.substr(nl + 1);
  }
  auto split = [](std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t pos = 0;
    while (pos < s.size()) {
      const std::size_t b = s.find_first_not_of(" \t", pos);
      if (b == std::string_view::npos) break;
      const std::size_t e = std::min(s.find_first_of(" \t", b), s.size());
      out.push_back(s.substr(b, e - b));
      pos = e;
    }
    return out;
  };
  auto number = [](std::string_view s, std::size_t line) {
    double v = 0.0;
    const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || end != s.data() + s.size() || !std::isfinite(v)) {
      throw ParseError(line, "arpa: bad number '" + std::string(s) + "'");
    }
    return v;
  };
  auto to_ln = [](double log10v) {
    return log10v <= -99.0 ? kNegInf : log10v * std::numbers::ln10;
  };

  std::size_t i = 0;
  while (i < lines.size() && lines[i].find_first_not_of(" \t") == std::string_view::npos) ++i;
  if (i == lines.size() || lines[i] != "\\data\\") {
    throw ParseError(i + 1, "arpa: missing \\data\\ header");
  }
  ++i;
  std::vector<std::size_t> declared;
  for (; i < lines.size() && !lines[i].empty(); ++i) {
    const auto line = lines[i];
    if (line.substr(0, 6) != "ngram ") {
      throw ParseError(i + 1, "arpa: expected 'ngram k=count'");
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError(i + 1, "arpa: missing '='");
    const double k = number(line.substr(6, eq - 6), i + 1);
    const double cnt = number(line.substr(eq + 1), i + 1);
    if (k != static_cast<double>(declared.size() + 1) || cnt < 0) {
      throw ParseError(i + 1, "arpa: orders must be declared as 1, 2, ...");
    }
    declared.push_back(static_cast<std::size_t>(cnt));
  }
  if (declared.empty()) throw ParseError(i + 1, "arpa: no n-gram counts");

  BackoffNgramModel m;
  m.vocab_ = Vocabulary(nonterminal);
  m.orders_.resize(declared.size());
  struct Raw {
    std::vector<TokenId> tokens;
    double logprob, logbow;
    bool has_bow;
  };
  std::vector<std::vector<Raw>> raw(declared.size());
  std::size_t listed_words = 0;
  for (std::size_t k = 1; k <= declared.size(); ++k) {
    while (i < lines.size() && lines[i].empty()) ++i;
    const std::string header = "\\" + std::to_string(k) + "-grams:";
    if (i == lines.size() || lines[i] != header) {
      throw ParseError(i + 1, "arpa: expected " + header);
    }
    ++i;
    for (; i < lines.size() && !lines[i].empty(); ++i) {
      const auto f = split(lines[i]);
      if (f.size() != k + 1 && f.size() != k + 2) {
        throw ParseError(i + 1, "arpa: wrong field count for a " +
                                    std::to_string(k) + "-gram");
      }
      Raw r;
      r.logprob = to_ln(number(f[0], i + 1));
      for (std::size_t j = 1; j <= k; ++j) {
        if (f[j] == nonterminal) {
          throw ParseError(i + 1, "arpa: non-terminal in n-gram");
        }
        r.tokens.push_back(m.vocab_.insert(f[j]));
      }
      r.has_bow = f.size() == k + 2;
      r.logbow = r.has_bow ? to_ln(number(f[k + 1], i + 1)) : 0.0;
      if (r.logprob > 1e-6) {
        throw ParseError(i + 1, "arpa: probability above one");
      }
      raw[k - 1].push_back(std::move(r));
    }
    if (raw[k - 1].size() != declared[k - 1]) {
      throw ParseError(i + 1, "arpa: " + std::to_string(k) +
                                  "-gram count differs from the header");
    }
    if (k == 1) listed_words = m.vocab_.size();
  }
  while (i < lines.size() && lines[i].empty()) ++i;
  if (i == lines.size() || lines[i] != "\\end\\") {
    throw ParseError(i + 1, "arpa: missing \\end\\");
  }

  // Unigrams: every event needs an entry; missing ones get zero mass. Words
  // of higher orders must have been listed as unigrams.
  {
    for (std::size_t k = 2; k <= declared.size(); ++k) {
      for (const auto& r : raw[k - 1]) {
        for (TokenId t : r.tokens) {
          if (t >= listed_words) {
            throw ParseError(0, "arpa: '" + m.vocab_.word(t) +
                                    "' is missing from the 1-grams");
          }
        }
      }
    }
  }
  {
    std::vector<const Raw*> by_word(m.vocab_.size(), nullptr);
    for (const auto& r : raw[0]) {
      if (by_word[r.tokens[0]]) throw ParseError(0, "arpa: duplicate unigram");
      by_word[r.tokens[0]] = &r;
    }
    for (TokenId w = 0; w < m.vocab_.size(); ++w) {
      if (!by_word[w] && !m.vocab_.is_event(w)) continue;
      Entry e;
      e.word = w;
      if (by_word[w]) {
        e.logprob = w == Vocabulary::kBos ? kNegInf : by_word[w]->logprob;
        e.logbow = by_word[w]->logbow;
      }
      m.orders_[0].push_back(e);
    }
  }
  m.unigram_index_.assign(m.vocab_.size(), kDropped);
  for (std::uint32_t j = 0; j < m.orders_[0].size(); ++j) {
    m.unigram_index_[m.orders_[0][j].word] = j;
  }
  for (std::size_t k = 2; k <= declared.size(); ++k) {
    // Parents must exist one order down; link that order before lookups.
    m.Link();
    auto& level = m.orders_[k - 1];
    for (const auto& r : raw[k - 1]) {
      const auto parent = m.find(std::span<const TokenId>(r.tokens).first(k - 1));
      if (!parent) {
        throw ParseError(0, "arpa: " + m.vocab_.join(r.tokens) +
                                " has no entry for its prefix");
      }
      Entry e;
      e.word = r.tokens.back();
      e.parent = *parent;
      e.logprob = r.logprob;
      e.logbow = r.logbow;
      level.push_back(e);
    }
    std::sort(level.begin(), level.end(), [](const Entry& a, const Entry& b) {
      return a.parent != b.parent ? a.parent < b.parent : a.word < b.word;
    });
    for (std::size_t j = 1; j < level.size(); ++j) {
      if (level[j].parent == level[j - 1].parent &&
          level[j].word == level[j - 1].word) {
        throw ParseError(0, "arpa: duplicate " + std::to_string(k) + "-gram");
      }
    }
  }
  m.Link();
  // Weights on entries without continuations are never used or written.
  for (auto& level : m.orders_) {
    for (auto& e : level) {
      if (!e.has_children()) e.logbow = 0.0;
    }
  }
  return m;
}

}  // namespace phirtn

template <>
struct std::hash<phirtn::NgramState> {
  std::size_t operator()(const phirtn::NgramState& s) const {
    return std::hash<std::uint64_t>{}(
        (static_cast<std::uint64_t>(s.order) << 32) | s.index);
  }
};

#endif  // PHIRTN_NGRAM_HPP_
