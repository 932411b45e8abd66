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
// Seeded synthetic grammars and corpora: a desk-scale media-query grammar
// (few frequent carrier words, many rare entity words, Zipf weights),
// random small grammars with deliberate vocabulary overlap for exhaustive
// checks, and a general-domain corpus for a stand-in background model.

#ifndef PHIRTN_SYNTHETIC_HPP_
#define PHIRTN_SYNTHETIC_HPP_

#include <algorithm>
#include <cstdint>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "phirtn/grammar.hpp"
#include "phirtn/ngram.hpp"
#include "phirtn/random.hpp"
#include "phirtn/vocabulary.hpp"

namespace phirtn {

// Distinct pronounceable pseudo-words, deterministic for a seed. `tag`
// keeps different pools disjoint.
inline std::vector<std::string> pseudo_words(std::size_t n, std::uint64_t seed,
                                             char tag) {
  static constexpr const char* kOnsets[] = {"b", "d", "f", "g", "k", "l",
                                            "m", "n", "p", "r", "s", "t",
                                            "v", "z", "br", "dr", "kl", "st"};
  static constexpr const char* kVowels[] = {"a", "e", "i", "o", "u", "ai",
                                            "ou"};
  Rng rng(seed);
  std::unordered_set<std::string> seen;
  std::vector<std::string> out;
  out.reserve(n);
  while (out.size() < n) {
    std::string w(1, tag);
    const std::size_t syllables = 2 + uniform_index(rng, 3);
    for (std::size_t i = 0; i < syllables; ++i) {
      w += kOnsets[uniform_index(rng, std::size(kOnsets))];
      w += kVowels[uniform_index(rng, std::size(kVowels))];
    }
    if (seen.insert(w).second) out.push_back(std::move(w));
  }
  return out;
}

inline const std::vector<std::string>& carrier_words() {
  static const std::vector<std::string> kWords = {
      "play",   "show",    "me",      "hey",    "VA",      "put",
      "on",     "the",     "some",    "by",     "listen",  "to",
      "start",  "queue",   "find",    "shuffle", "songs",   "music",
      "album",  "artist",  "from",    "please", "can",     "you",
      "i",      "want",    "hear",    "next",   "radio",   "station",
      "open",   "search",  "for",     "watch",  "video",   "a",
      "my",     "playlist", "turn",   "up",     "add",     "with",
      "latest", "new",     "called",  "track",  "song",    "tune",
      "give",   "something", "like",  "could",  "would",   "tell",
      "about",  "who",     "is",      "what",   "let's",   "now"};
  return kWords;
}

struct DeskGrammarOptions {
  std::size_t templates = 50;
  std::size_t entities = 100'000;
  std::size_t entity_words = 25'000;
  double zipf_exponent = 1.0;
  // Fraction of entity tokens replaced by a carrier word.
  double collision_rate = 0.01;
  std::uint64_t seed = 1;
};

// Single-slot templates with 1-4 carrier words, mostly ending in the slot;
// entities of 1-4 tokens drawn by Zipf rank from the pseudo-word pool.
// Template and entity probabilities are Zipf over a shuffled order.
inline Grammar desk_grammar(const DeskGrammarOptions& o = {}) {
  Rng rng(o.seed);
  const auto& carriers = carrier_words();
  Vocabulary vocab;
  for (const auto& w : carriers) vocab.insert(w);

  std::vector<Template> templates;
  {
    std::unordered_set<std::vector<TokenId>, TokenSeqHash> seen;
    const auto tw = zipf_weights(o.templates, o.zipf_exponent);
    const DiscreteSampler carrier_rank(zipf_weights(carriers.size(), 0.8));
    bool bare = false;
    while (templates.size() < o.templates) {
      std::vector<TokenId> toks;
      if (!bare) {
        bare = true;  // one template is the bare slot
      } else {
        const std::size_t before = 1 + uniform_index(rng, 4);
        for (std::size_t i = 0; i < before; ++i) {
          toks.push_back(static_cast<TokenId>(Vocabulary::kFirstWord +
                                              carrier_rank(rng)));
        }
      }
      toks.push_back(Vocabulary::kNonterminal);
      if (uniform01(rng) < 0.15) {
        const std::size_t after = 1 + uniform_index(rng, 2);
        for (std::size_t i = 0; i < after; ++i) {
          toks.push_back(static_cast<TokenId>(Vocabulary::kFirstWord +
                                              carrier_rank(rng)));
        }
      }
      if (!seen.insert(toks).second) continue;
      templates.push_back({std::move(toks), 0.0});
    }
    std::vector<std::size_t> order(templates.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[uniform_index(rng, i)]);
    }
    for (std::size_t i = 0; i < order.size(); ++i) templates[order[i]].prob = tw[i];
  }

  std::vector<Entity> entities;
  {
    const auto words = pseudo_words(o.entity_words, o.seed ^ 0x9e37u, 'q');
    std::vector<TokenId> ids;
    ids.reserve(words.size());
    for (const auto& w : words) ids.push_back(vocab.insert(w));
    const DiscreteSampler word_rank(zipf_weights(ids.size(), o.zipf_exponent));
    const DiscreteSampler length({0.3, 0.4, 0.2, 0.1});
    std::unordered_set<std::vector<TokenId>, TokenSeqHash> seen;
    while (entities.size() < o.entities) {
      std::vector<TokenId> toks(1 + length(rng));
      for (auto& t : toks) {
        t = uniform01(rng) < o.collision_rate
                ? static_cast<TokenId>(Vocabulary::kFirstWord +
                                       uniform_index(rng, carriers.size()))
                : ids[word_rank(rng)];
      }
      if (!seen.insert(toks).second) continue;
      entities.push_back({std::move(toks), 0.0});
    }
    const auto ew = zipf_weights(entities.size(), o.zipf_exponent);
    // Entities are generated in random order already; rank = position.
    for (std::size_t i = 0; i < entities.size(); ++i) entities[i].prob = ew[i];
  }
  return Grammar(std::move(vocab), std::move(templates), std::move(entities));
}

struct SmallGrammarOptions {
  std::size_t max_templates = 10;
  std::size_t max_entities = 50;
  std::size_t max_slots = 2;
};

// Random small grammar over tiny shared word pools so that template and
// entity vocabularies overlap (collisions at slot entry and exit), with
// templates of 0 to max_slots slots.
inline Grammar random_small_grammar(std::uint64_t seed,
                                    const SmallGrammarOptions& o = {}) {
  Rng rng(seed);
  Vocabulary vocab;
  const auto carrier = pseudo_words(6, seed * 7 + 1, 'c');
  const auto names = pseudo_words(14, seed * 7 + 2, 'e');
  std::vector<TokenId> cw, ew;
  for (const auto& w : carrier) cw.push_back(vocab.insert(w));
  for (const auto& w : names) ew.push_back(vocab.insert(w));
  // Entity words sometimes borrow carrier words.
  std::vector<TokenId> entity_pool = ew;
  entity_pool.insert(entity_pool.end(), cw.begin(), cw.begin() + 3);

  const std::size_t nt = 1 + uniform_index(rng, o.max_templates);
  const std::size_t ne = 1 + uniform_index(rng, o.max_entities);
  std::vector<Template> templates;
  std::unordered_set<std::vector<TokenId>, TokenSeqHash> seen;
  std::size_t attempts = 0;
  while (templates.size() < nt && ++attempts < 10'000) {
    const std::size_t len = 1 + uniform_index(rng, 5);
    const std::size_t slots = uniform_index(rng, o.max_slots + 1);
    std::vector<TokenId> toks;
    for (std::size_t i = 0; i < len; ++i) {
      toks.push_back(cw[uniform_index(rng, cw.size())]);
    }
    for (std::size_t k = 0; k < slots; ++k) {
      const std::size_t pos = uniform_index(rng, toks.size() + 1);
      const bool clash =
          (pos > 0 && toks[pos - 1] == Vocabulary::kNonterminal) ||
          (pos < toks.size() && toks[pos] == Vocabulary::kNonterminal);
      if (!clash) toks.insert(toks.begin() + pos, Vocabulary::kNonterminal);
    }
    if (!seen.insert(toks).second) continue;
    templates.push_back({std::move(toks), 0.05 + uniform01(rng)});
  }
  std::vector<Entity> entities;
  seen.clear();
  attempts = 0;
  while (entities.size() < ne && ++attempts < 10'000) {
    const std::size_t len = 1 + uniform_index(rng, 3);
    std::vector<TokenId> toks;
    for (std::size_t i = 0; i < len; ++i) {
      toks.push_back(entity_pool[uniform_index(rng, entity_pool.size())]);
    }
    if (!seen.insert(toks).second) continue;
    entities.push_back({std::move(toks), 0.05 + uniform01(rng)});
  }
  double tsum = 0.0, esum = 0.0;
  for (const auto& t : templates) tsum += t.prob;
  for (const auto& e : entities) esum += e.prob;
  for (auto& t : templates) t.prob /= tsum;
  for (auto& e : entities) e.prob /= esum;
  return Grammar(std::move(vocab), std::move(templates), std::move(entities));
}

// `base` plus `n` general-domain pseudo-words, ids of `base` unchanged.
inline Vocabulary extend_vocabulary(const Vocabulary& base, std::size_t n,
                                    std::uint64_t seed) {
  Vocabulary v = base;
  for (const auto& w : pseudo_words(n, seed ^ 0x51a7u, 'g')) v.insert(w);
  return v;
}

struct GeneralCorpusOptions {
  std::size_t sentences = 50'000;
  std::size_t general_words = 3'000;
  // Probability that a token is a carrier word or a (Zipf-frequent) entity
  // word of the grammar rather than a general word.
  double carrier_rate = 0.15;
  double entity_rate = 0.03;
  std::uint64_t seed = 7;
};

// Unit-count sentences of 2-10 tokens from a Zipf mixture over general
// words, carrier words and the most frequent entity words. `vocab` must
// come from extend_vocabulary(grammar vocabulary, general_words, seed).
inline WeightedCorpus general_corpus(const Grammar& g, const Vocabulary& vocab,
                                     const GeneralCorpusOptions& o = {}) {
  Rng rng(o.seed);
  std::vector<TokenId> general;
  for (const auto& w : pseudo_words(o.general_words, o.seed ^ 0x51a7u, 'g')) {
    const auto id = vocab.find(w);
    if (!id) throw Error("general corpus: vocabulary was not extended");
    general.push_back(*id);
  }
  std::vector<TokenId> carriers;
  std::vector<double> entity_weight(g.vocabulary().size(), 0.0);
  for (const auto& t : g.templates()) {
    for (TokenId tok : t.tokens) {
      if (tok != Vocabulary::kNonterminal) carriers.push_back(tok);
    }
  }
  std::sort(carriers.begin(), carriers.end());
  carriers.erase(std::unique(carriers.begin(), carriers.end()), carriers.end());
  for (const auto& e : g.entities()) {
    for (TokenId tok : e.tokens) entity_weight[tok] += e.prob;
  }
  std::vector<TokenId> entity_words;
  for (TokenId w = Vocabulary::kFirstWord; w < entity_weight.size(); ++w) {
    if (entity_weight[w] > 0.0) entity_words.push_back(w);
  }
  std::sort(entity_words.begin(), entity_words.end(), [&](TokenId a, TokenId b) {
    return entity_weight[a] != entity_weight[b] ? entity_weight[a] > entity_weight[b]
                                                : a < b;
  });
  entity_words.resize(std::min<std::size_t>(entity_words.size(), 500));

  const DiscreteSampler pick_general(zipf_weights(general.size(), 1.0));
  const DiscreteSampler pick_carrier(zipf_weights(std::max<std::size_t>(1, carriers.size()), 1.0));
  const DiscreteSampler pick_entity(zipf_weights(std::max<std::size_t>(1, entity_words.size()), 1.0));
  std::vector<WeightedSentence> out;
  out.reserve(o.sentences);
  for (std::size_t i = 0; i < o.sentences; ++i) {
    WeightedSentence s;
    const std::size_t len = 2 + uniform_index(rng, 9);
    for (std::size_t j = 0; j < len; ++j) {
      const double u = uniform01(rng);
      if (u < o.carrier_rate && !carriers.empty()) {
        s.tokens.push_back(carriers[pick_carrier(rng)]);
      } else if (u < o.carrier_rate + o.entity_rate && !entity_words.empty()) {
        s.tokens.push_back(entity_words[pick_entity(rng)]);
      } else {
        s.tokens.push_back(general[pick_general(rng)]);
      }
    }
    out.push_back(std::move(s));
  }
  return WeightedCorpus(vocab, std::move(out));
}

}  // namespace phirtn

#endif  // PHIRTN_SYNTHETIC_HPP_
