#pragma once

#include <stdexcept>
#include <string>

namespace twophase {

/// Invalid caller input (out-of-range density, bad parameters).
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Invalid or degenerate mesh data.
class MeshError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file; carries the offending line when known.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& path, long line, const std::string& what)
      : std::runtime_error(path + (line > 0 ? ":" + std::to_string(line) : std::string()) + ": " +
                           what),
        line_(line) {}

  long line() const { return line_; }

 private:
  long line_;
};

/// Eigensolver or linear solver failure (non-convergence, breakdown,
/// incompatible right-hand side).
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace twophase
