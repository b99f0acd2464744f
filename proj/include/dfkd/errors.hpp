// Copyright 2026 The dfkd Authors. All Rights Reserved.
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

#include <cstdint>
#include <stdexcept>
#include <string>

namespace dfkd {

// Precondition violated by a caller-supplied value.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// An operation was invoked on an object that is not in a usable state.
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// A file exists but its contents do not follow the expected layout.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A file could not be opened, or ended early.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what, std::int64_t offset = -1)
      : std::runtime_error(what), offset_(offset) {}

  // Byte offset at which reading failed, or -1 when not applicable.
  std::int64_t offset() const noexcept { return offset_; }

 private:
  std::int64_t offset_;
};

// Training produced a NaN or infinite loss.
class NonFiniteLoss : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Structured-text config could not be parsed or validated.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& what, int line = 0)
      : std::runtime_error(what), line_(line) {}

  int line() const noexcept { return line_; }

 private:
  int line_;
};

}  // namespace dfkd
