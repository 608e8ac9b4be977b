#pragma once

#include <stdexcept>
#include <string>

namespace gwlab {

/// Iterative method gave up; carries the last residual or defect reached.
class NumericalFailure : public std::runtime_error {
 public:
  NumericalFailure(const std::string& what, double residual)
      : std::runtime_error(what), residual_(residual) {}

  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

/// A computation would exceed a configured state or population budget.
class ResourceLimit : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Monte Carlo estimate with no accepted paths.
class DegenerateEstimate : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace gwlab
