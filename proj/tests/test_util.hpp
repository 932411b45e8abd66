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

#ifndef PHIRTN_TESTS_TEST_UTIL_HPP_
#define PHIRTN_TESTS_TEST_UTIL_HPP_

#include <string>

#include "phirtn/grammar.hpp"
#include "phirtn/serialization.hpp"

namespace phirtn::testing {

inline std::string data_path(const std::string& rel) {
  return std::string(PHIRTN_DATA_DIR) + "/" + rel;
}

// The six templates with the six listed entities renormalized.
inline Grammar media_grammar() {
  return parse_grammar(read_text_file(data_path("media/templates.tsv")),
                       read_text_file(data_path("media/entities_listed.tsv")));
}

// Raw listed probabilities plus one filler entity.
inline Grammar media_grammar_raw() {
  return parse_grammar(read_text_file(data_path("media/templates.tsv")),
                       read_text_file(data_path("media/entities.tsv")));
}

inline std::vector<TokenId> ids(const Vocabulary& v, const std::string& text) {
  return v.map(text);
}

}  // namespace phirtn::testing

#endif  // PHIRTN_TESTS_TEST_UTIL_HPP_
