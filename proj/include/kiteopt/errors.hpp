#pragma once

#include <stdexcept>
#include <string>

namespace kiteopt {

// Invalid or mutually inconsistent configuration values.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed call arguments (bad grids, degenerate steps, wrong sizes).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite value produced while evaluating a transcribed problem.
class EvaluationError : public std::runtime_error {
 public:
  EvaluationError(const std::string& what, int node) : std::runtime_error(what), node_(node) {}
  int node() const { return node_; }

 private:
  int node_;
};

}  // namespace kiteopt
