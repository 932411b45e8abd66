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
// Exception types shared by all modules.

#ifndef PHIRTN_ERROR_HPP_
#define PHIRTN_ERROR_HPP_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace phirtn {

// Base class for data and validation errors. Usage errors (bad flags) are
// reported separately by the CLI.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input text. `line()` is 1-based, 0 when not tied to a line.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// A model could not be built from otherwise valid input.
class BuildError : public Error {
 public:
  using Error::Error;
};

}  // namespace phirtn

#endif  // PHIRTN_ERROR_HPP_
