#pragma once

#include <stdexcept>
#include <string>

namespace lime_shift {

// Base of every error raised by the library. `kind()` is a short stable tag
// used by the CLI for its one-line machine-parsable reasons.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

// A precondition on an argument was violated (dimension mismatch, empty
// input, out-of-range parameter).
class ContractViolation : public Error {
 public:
  explicit ContractViolation(const std::string& what) : Error("contract", what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error("config", what) {}
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line, std::size_t column)
      : Error("parse", what + " at line " + std::to_string(line) + ", column " +
                           std::to_string(column)),
        line_(line),
        column_(column) {}
  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

class TrainingError : public Error {
 public:
  explicit TrainingError(const std::string& what) : Error("training", what) {}
};

class ProtocolError : public Error {
 public:
  ProtocolError(const std::string& what, std::string payload)
      : Error("protocol", what), payload_(std::move(payload)) {}
  const std::string& payload() const noexcept { return payload_; }

 private:
  std::string payload_;
};

class SelectionError : public Error {
 public:
  explicit SelectionError(const std::string& what) : Error("selection", what) {}
};

class SolverError : public Error {
 public:
  explicit SolverError(const std::string& what) : Error("solver", what) {}
};

// Correlation is undefined for constant input; reported as absent, never 0.
class CorrelationUndefined : public Error {
 public:
  explicit CorrelationUndefined(const std::string& what) : Error("correlation", what) {}
};

class AuditError : public Error {
 public:
  explicit AuditError(const std::string& what) : Error("audit", what) {}
};

// Wraps an error raised inside a named pipeline stage.
class StageError : public Error {
 public:
  StageError(const std::string& stage, const Error& inner)
      : Error(inner.kind(), stage + ": " + inner.what()), stage_(stage) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

}  // namespace lime_shift
