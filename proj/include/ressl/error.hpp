#pragma once

#include <stdexcept>
#include <string>

namespace ressl {

// Process exit codes used by the command-line tool.
enum class ExitCode : int {
  ok = 0,
  config = 2,
  construction = 3,
  numeric = 4,
  io = 5,
};

class Error : public std::runtime_error {
 public:
  Error(ExitCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

// Invalid configuration values, malformed config documents, bad CLI usage.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ExitCode::config, what) {}
};

// A metric was asked of a curve that cannot support it (too short, duplicate x, ...).
class InvalidCurveError : public ConfigError {
 public:
  explicit InvalidCurveError(const std::string& what) : ConfigError("invalid curve: " + what) {}
};

class InvalidReportError : public ConfigError {
 public:
  explicit InvalidReportError(const std::string& what) : ConfigError("invalid report: " + what) {}
};

// Ragged or otherwise non-rectangular tables.
class ShapeError : public ConfigError {
 public:
  explicit ShapeError(const std::string& what) : ConfigError("shape error: " + what) {}
};

// Dataset construction could not satisfy the requested quotas.
class ConstructionError : public Error {
 public:
  explicit ConstructionError(const std::string& what) : Error(ExitCode::construction, what) {}
};

// CSV ingestion failures (missing column, non-numeric feature, too few rows).
class IngestionError : public ConstructionError {
 public:
  explicit IngestionError(const std::string& what) : ConstructionError("ingestion error: " + what) {}
};

// NaN/Inf encountered in training or a shape mismatch in learner primitives.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ExitCode::numeric, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ExitCode::io, what) {}
};

// Malformed data file; carries the 1-based line number.
class ParseError : public IoError {
 public:
  ParseError(std::size_t line, const std::string& what)
      : IoError("parse error at line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace ressl
