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

#ifndef PHIRTN_PHIRTN_HPP_
#define PHIRTN_PHIRTN_HPP_

#include "phirtn/error.hpp"
#include "phirtn/eval.hpp"
#include "phirtn/grammar.hpp"
#include "phirtn/language_model.hpp"
#include "phirtn/ngram.hpp"
#include "phirtn/oracle.hpp"
#include "phirtn/phi_rtn.hpp"
#include "phirtn/random.hpp"
#include "phirtn/serialization.hpp"
#include "phirtn/synthetic.hpp"
#include "phirtn/unigram_model.hpp"
#include "phirtn/vocabulary.hpp"

#endif  // PHIRTN_PHIRTN_HPP_
