#pragma once

#include <stdexcept>
#include <string>

namespace saft {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad or inconsistent input data (CSV contents, shapes, degenerate targets).
class DataError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration document or command-line usage.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed token text or an invalid feature-cross sequence.
class DslError : public Error {
 public:
  DslError(const std::string& what, std::size_t position)
      : Error(what), position_(position) {}
  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

// Non-finite values or shape mismatches inside numeric code.
class NumericError : public Error {
 public:
  using Error::Error;
};

// A pipeline stage failed or its prerequisites are missing.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

}  // namespace saft
