#pragma once

#include <stdexcept>
#include <string>

namespace gfnet {

/// Invalid configuration: bad shapes, impossible sizes, unknown config keys.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller passed a value outside an operation's domain (label out of range, q outside (0,1), ...).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// API misuse: backward on a detached tensor, stepping past T, ...
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// NaN or Inf produced by a forward/backward pass.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Budget outside the feasible range of a cost model.
class InfeasibleBudget : public std::runtime_error {
 public:
  InfeasibleBudget(const std::string& what, double min_budget, double max_budget)
      : std::runtime_error(what), min_budget_(min_budget), max_budget_(max_budget) {}
  double min_budget() const { return min_budget_; }
  double max_budget() const { return max_budget_; }

 private:
  double min_budget_;
  double max_budget_;
};

}  // namespace gfnet
