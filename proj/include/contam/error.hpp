// Copyright 2026 The contam Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace contam {

enum class ErrorKind { kFormat, kData, kConfig, kIo, kRun };

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kFormat: return "format error";
    case ErrorKind::kData: return "data error";
    case ErrorKind::kConfig: return "config error";
    case ErrorKind::kIo: return "I/O error";
    case ErrorKind::kRun: return "run error";
  }
  return "error";
}

// Base of every error thrown by the library. what() is prefixed with the kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message),
        kind_(kind),
        message_(message) {}

  ErrorKind kind() const noexcept { return kind_; }
  // Message without the kind prefix.
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorKind kind_;
  std::string message_;
};

// Malformed file contents (bad magic, truncated payload, missing JSON field).
class FormatError : public Error {
 public:
  explicit FormatError(const std::string& m) : Error(ErrorKind::kFormat, m) {}
};

// Well-formed input that violates a domain invariant.
class DataError : public Error {
 public:
  explicit DataError(const std::string& m) : Error(ErrorKind::kData, m) {}
};

// Statistic undefined for the given input (constant series, zero mean).
class DegenerateError : public DataError {
 public:
  explicit DegenerateError(const std::string& m) : DataError(m) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& m) : Error(ErrorKind::kConfig, m) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& m) : Error(ErrorKind::kIo, m) {}
};

// Failure of one experiment cell; the message names the (lambda, run) cell.
class RunError : public Error {
 public:
  explicit RunError(const std::string& m) : Error(ErrorKind::kRun, m) {}
};

}  // namespace contam
