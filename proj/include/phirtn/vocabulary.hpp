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
// Token <-> id mapping shared by grammars and every model kind.

#ifndef PHIRTN_VOCABULARY_HPP_
#define PHIRTN_VOCABULARY_HPP_

#include <cstdint>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "phirtn/error.hpp"

namespace phirtn {

using TokenId = std::uint32_t;

// Reserved ids are fixed:
//   0  </s>      end of sequence; scored through end(), an event in every
//                state distribution
//   1  <unk>     out-of-vocabulary tokens
//   2  $entity   the grammar non-terminal (spelling configurable); never
//                scorable
//   3  <s>       sequence start context for n-gram histories; never scorable
// Ordinary words are numbered densely from 4 in insertion order.
class Vocabulary {
 public:
  static constexpr TokenId kEos = 0;
  static constexpr TokenId kUnk = 1;
  static constexpr TokenId kNonterminal = 2;
  static constexpr TokenId kBos = 3;
  static constexpr TokenId kFirstWord = 4;

  static constexpr std::string_view kEosWord = "</s>";
  static constexpr std::string_view kUnkWord = "<unk>";
  static constexpr std::string_view kBosWord = "<s>";
  static constexpr std::string_view kDefaultNonterminal = "$entity";

  explicit Vocabulary(std::string_view nonterminal = kDefaultNonterminal) {
    Add(kEosWord);
    Add(kUnkWord);
    Add(nonterminal);
    Add(kBosWord);
  }

  // Returns the id of `word`, adding it if absent.
  TokenId insert(std::string_view word) {
    if (auto it = ids_.find(word); it != ids_.end()) return it->second;
    return Add(word);
  }

  std::optional<TokenId> find(std::string_view word) const {
    if (auto it = ids_.find(word); it != ids_.end()) return it->second;
    return std::nullopt;
  }

  // Maps unknown words to <unk>.
  TokenId lookup(std::string_view word) const {
    return find(word).value_or(kUnk);
  }

  const std::string& word(TokenId id) const { return words_.at(id); }
  const std::string& nonterminal() const { return words_[kNonterminal]; }
  std::size_t size() const { return words_.size(); }
  const std::vector<std::string>& words() const { return words_; }

  // True for ids that carry probability mass: </s>, <unk>, ordinary words.
  bool is_event(TokenId id) const {
    return id < words_.size() && id != kNonterminal && id != kBos;
  }

  // Maps ids that cannot be stepped over (</s>, <s>, the non-terminal, out of
  // range) to <unk>, so step functions stay total.
  TokenId scorable(TokenId id) const {
    return (id >= kFirstWord && id < words_.size()) ? id : kUnk;
  }

  // Number of events, i.e. the support size of every state distribution.
  std::size_t event_count() const { return words_.size() - 2; }

  // Scorable tokens excluding </s>, in id order.
  std::vector<TokenId> tokens() const {
    std::vector<TokenId> out;
    out.reserve(words_.size() - 3);
    out.push_back(kUnk);
    for (TokenId id = kFirstWord; id < words_.size(); ++id) out.push_back(id);
    return out;
  }

  // Whitespace tokenization followed by lookup().
  std::vector<TokenId> map(std::string_view text) const {
    std::vector<TokenId> out;
    std::istringstream in{std::string(text)};
    std::string tok;
    while (in >> tok) out.push_back(lookup(tok));
    return out;
  }

  std::string join(const std::vector<TokenId>& ids) const {
    std::string out;
    for (TokenId id : ids) {
      if (!out.empty()) out += ' ';
      out += word(id);
    }
    return out;
  }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.words_ == b.words_;
  }

  // True if every id of `other` names the same word here.
  bool extends(const Vocabulary& other) const {
    if (other.size() > size()) return false;
    for (std::size_t i = 0; i < other.size(); ++i) {
      if (words_[i] != other.words_[i]) return false;
    }
    return true;
  }

 private:
  struct Hash {
    using is_transparent = void;
    std::size_t operator()(std::string_view s) const {
      return std::hash<std::string_view>{}(s);
    }
  };

  TokenId Add(std::string_view word) {
    if (word.empty()) throw Error("vocabulary: empty token");
    if (ids_.count(word)) {
      throw Error("vocabulary: duplicate reserved token '" +
                  std::string(word) + "'");
    }
    const auto id = static_cast<TokenId>(words_.size());
    words_.emplace_back(word);
    ids_.emplace(std::string(word), id);
    return id;
  }

  std::vector<std::string> words_;
  std::unordered_map<std::string, TokenId, Hash, std::equal_to<>> ids_;
};

// Hash for token sequences used as map keys (trie prefixes, n-gram
// contexts).
struct TokenSeqHash {
  std::size_t operator()(const std::vector<TokenId>& seq) const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (TokenId t : seq) {
      h ^= t;
      h *= 0x100000001b3ULL;
    }
    return static_cast<std::size_t>(h ^ (h >> 29));
  }
};

}  // namespace phirtn

#endif  // PHIRTN_VOCABULARY_HPP_
