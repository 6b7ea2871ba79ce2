#pragma once

#include <array>
#include <stdexcept>
#include <string>

namespace plap {

/// Bad parameters, malformed configuration, or a violated precondition.
/// The CLI maps this family to exit code 2.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A gradient-dependent operator was evaluated where it is undefined.
class SingularGradient : public InvalidArgument {
 public:
  SingularGradient() : InvalidArgument("singular gradient") {}
};

/// A rate case was queried outside its validity window.
class CaseNotApplicable : public InvalidArgument {
 public:
  explicit CaseNotApplicable(const std::string& what)
      : InvalidArgument("case not applicable: " + what) {}
};

/// Point lies inside the excluded set of an exact solution.
class SingularPoint : public InvalidArgument {
 public:
  explicit SingularPoint(const std::string& what)
      : InvalidArgument("singular point: " + what) {}
};

/// Failures of the numerics itself (blow-up, step budget). Exit code 1.
class NumericalFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class BlowUp : public NumericalFailure {
 public:
  BlowUp(std::array<int, 2> node, double time)
      : NumericalFailure("blow-up: non-finite value at node (" + std::to_string(node[0]) + "," +
                         std::to_string(node[1]) + ") at t=" + std::to_string(time)),
        node_(node) {}

  std::array<int, 2> node() const { return node_; }

 private:
  std::array<int, 2> node_;
};

class BudgetExceeded : public NumericalFailure {
 public:
  using NumericalFailure::NumericalFailure;
};

}  // namespace plap
