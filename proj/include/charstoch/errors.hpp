#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace charstoch {

/// Broad class of a failure; the CLI maps it to an exit code.
enum class ErrorCategory { Config, Numerical };

/// Base of every error raised by the library. `kind()` is a stable
/// machine-readable name (e.g. "EvalDomainError").
class Error : public std::runtime_error {
public:
  Error(std::string kind, ErrorCategory category, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)), category_(category) {}

  const std::string& kind() const noexcept { return kind_; }
  ErrorCategory category() const noexcept { return category_; }

private:
  std::string kind_;
  ErrorCategory category_;
};

/// Lexing/parsing failure at a byte offset of the source text.
class ParseError : public Error {
public:
  ParseError(std::string kind, std::size_t offset, const std::string& what)
      : Error(std::move(kind), ErrorCategory::Config,
              what + " at offset " + std::to_string(offset)),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

private:
  std::size_t offset_;
};

struct IllegalCharacter : ParseError {
  IllegalCharacter(std::size_t offset, const std::string& what)
      : ParseError("IllegalCharacter", offset, what) {}
};
struct SyntaxError : ParseError {
  SyntaxError(std::size_t offset, const std::string& what)
      : ParseError("SyntaxError", offset, what) {}
};
struct UnknownVariable : ParseError {
  UnknownVariable(std::size_t offset, const std::string& name)
      : ParseError("UnknownVariable", offset, "unknown variable '" + name + "'") {}
};
struct UnknownFunction : ParseError {
  UnknownFunction(std::size_t offset, const std::string& name)
      : ParseError("UnknownFunction", offset, "unknown function '" + name + "'") {}
};
struct ArityMismatch : ParseError {
  ArityMismatch(std::size_t offset, const std::string& what)
      : ParseError("ArityMismatch", offset, what) {}
};

struct SchemaError : Error {
  explicit SchemaError(const std::string& what)
      : Error("SchemaError", ErrorCategory::Config, what) {}
};
struct ValidationError : Error {
  explicit ValidationError(const std::string& what)
      : Error("ValidationError", ErrorCategory::Config, what) {}
};

/// Evaluation produced a non-finite value (log of nonpositive, x/0, ...).
class EvalDomainError : public Error {
public:
  EvalDomainError(std::size_t offset, const std::string& what)
      : Error("EvalDomainError", ErrorCategory::Numerical,
              what + " (expression offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

private:
  std::size_t offset_;
};

#define CHARSTOCH_NUMERICAL_ERROR(Name)                                        \
  struct Name : Error {                                                        \
    explicit Name(const std::string& what)                                     \
        : Error(#Name, ErrorCategory::Numerical, what) {}                      \
  };

CHARSTOCH_NUMERICAL_ERROR(DegenerateKernel)
CHARSTOCH_NUMERICAL_ERROR(EmptyKernelSupport)
CHARSTOCH_NUMERICAL_ERROR(NoConvergence)
CHARSTOCH_NUMERICAL_ERROR(OutOfBracket)
CHARSTOCH_NUMERICAL_ERROR(NearBlowup)
CHARSTOCH_NUMERICAL_ERROR(SingularJacobian)
CHARSTOCH_NUMERICAL_ERROR(ZeroMass)

#undef CHARSTOCH_NUMERICAL_ERROR

}  // namespace charstoch
