#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace persist {

// Base for all toolkit errors. The CLI maps uncaught Error to exit code 1.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Expression syntax error; offset is the 0-based byte position in the source.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " (at offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

// Unbound variable or a domain violation (ln of non-positive, division by
// zero, 0^negative, overflow) during expression evaluation.
class EvalError : public Error {
 public:
  using Error::Error;
};

class ModelError : public Error {
 public:
  using Error::Error;
};

class LinalgError : public Error {
 public:
  using Error::Error;
};

class IntegrationError : public Error {
 public:
  using Error::Error;
};

class SpectralError : public Error {
 public:
  using Error::Error;
};

// A certification hypothesis failed on the given pipeline step. Not an
// operational error: pipelines convert it into a refused verdict, which the
// CLI reports with exit code 2.
class Refusal : public Error {
 public:
  Refusal(std::string step, std::string reason)
      : Error("refused at step '" + step + "': " + reason),
        step_(std::move(step)),
        reason_(std::move(reason)) {}
  const std::string& step() const { return step_; }
  const std::string& reason() const { return reason_; }

 private:
  std::string step_;
  std::string reason_;
};

}  // namespace persist
