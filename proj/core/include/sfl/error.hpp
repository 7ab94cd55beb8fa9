#pragma once

#include <stdexcept>
#include <string>

namespace sfl {

/// Broad error classes. The CLI maps each one to its own exit status.
enum class ErrorCategory {
  Config = 3,
  Io = 4,
  Format = 5,
  Shape = 6,
  Contract = 7,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorCategory::Config, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorCategory::Io, what) {}
};

class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what) : Error(ErrorCategory::Format, what) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error(ErrorCategory::Shape, what) {}
};

/// A documented precondition of an operation was violated.
class ContractError : public Error {
 public:
  explicit ContractError(const std::string& what) : Error(ErrorCategory::Contract, what) {}
};

}  // namespace sfl
