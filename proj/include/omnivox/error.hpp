#pragma once

#include <stdexcept>
#include <string>

namespace omnivox {

// Base for every error the library raises. code() is a short stable token
// that the CLI prints so callers can match on it.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& what)
      : std::runtime_error(what), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& what) : Error("dimension", what) {}
};

class DivisibilityError : public Error {
 public:
  explicit DivisibilityError(const std::string& what) : Error("divisibility", what) {}
};

class EmptyInputError : public Error {
 public:
  explicit EmptyInputError(const std::string& what) : Error("empty-input", what) {}
};

class ContractError : public Error {
 public:
  explicit ContractError(const std::string& what) : Error("contract", what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error("config", what) {}
};

class StageOrderError : public Error {
 public:
  explicit StageOrderError(const std::string& what) : Error("stage-order", what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error("io", what) {}
};

}  // namespace omnivox
