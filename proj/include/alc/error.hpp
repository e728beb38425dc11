// Copyright 2026 The alc Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace alc {

/// Error families. The CLI maps each family to its own exit code.
enum class ErrorFamily { Config, Io, Schema, State };

class Error : public std::runtime_error {
 public:
  Error(ErrorFamily family, const std::string& what)
      : std::runtime_error(what), family_(family) {}

  ErrorFamily family() const noexcept { return family_; }

 private:
  ErrorFamily family_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error(ErrorFamily::Config, what) {}
};

struct IoError : Error {
  explicit IoError(const std::string& what) : Error(ErrorFamily::Io, what) {}
};

struct SchemaError : Error {
  explicit SchemaError(const std::string& what) : Error(ErrorFamily::Schema, what) {}
};

struct StateError : Error {
  explicit StateError(const std::string& what) : Error(ErrorFamily::State, what) {}
};

/// External detector failures; each subtype is a distinct failure mode.
struct DetectorCommandError : IoError {
  DetectorCommandError(const std::string& what, int exit_code)
      : IoError(what), exit_code(exit_code) {}
  int exit_code;
};

struct DetectorOutputMissing : IoError {
  using IoError::IoError;
};

inline int exit_code_for(ErrorFamily family) {
  switch (family) {
    case ErrorFamily::Config: return 2;
    case ErrorFamily::Io: return 3;
    case ErrorFamily::Schema: return 4;
    case ErrorFamily::State: return 5;
  }
  return 1;
}

}  // namespace alc
