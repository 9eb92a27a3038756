// Copyright 2026 The SK-Net Authors. All Rights Reserved.
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

#pragma once

#include <cstddef>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sknet {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes that do not fit an operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration or precondition on hyperparameters.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file; the message carries the offending line number.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(what + " (line " + std::to_string(line) + ")"), detail_(what), line_(line) {}
  std::size_t line() const { return line_; }
  /// The message without the line suffix.
  const std::string& detail() const { return detail_; }

 private:
  std::string detail_;
  std::size_t line_;
};

/// A training loss became non-finite.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// Batch-norm evaluation requested before any statistics were gathered.
class UninitializedStatsError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline void append_all(std::ostringstream&) {}

template <typename T, typename... Rest>
void append_all(std::ostringstream& oss, T&& head, Rest&&... rest) {
  oss << std::forward<T>(head);
  append_all(oss, std::forward<Rest>(rest)...);
}

}  // namespace detail

/// Concatenates streamable pieces into a message.
template <typename... Args>
std::string concat_message(Args&&... args) {
  std::ostringstream oss;
  detail::append_all(oss, std::forward<Args>(args)...);
  return oss.str();
}

template <typename E = Error, typename... Args>
[[noreturn]] void raise(Args&&... args) {
  throw E(concat_message(std::forward<Args>(args)...));
}

template <typename E = Error, typename... Args>
void require(bool condition, Args&&... args) {
  if (!condition) raise<E>(std::forward<Args>(args)...);
}

}  // namespace sknet
