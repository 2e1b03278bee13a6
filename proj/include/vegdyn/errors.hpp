#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace vegdyn {

// Bad argument to a numerical routine (non-finite input, out-of-range index).
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A model or configuration failed validation; carries every offending entry.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(std::vector<std::string> issues);
  const std::vector<std::string>& issues() const { return issues_; }

 private:
  std::vector<std::string> issues_;
};

// A solver hit a numerically unrecoverable state (negative probability,
// non-finite rate, step size outside the positivity range).
class NumericAbort : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Iterative method failed to reach tolerance.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, double last_residual)
      : std::runtime_error(what), last_residual_(last_residual) {}
  double last_residual() const { return last_residual_; }

 private:
  double last_residual_;
};

// Stochastic simulation stopped at the configured event cap before t_end.
class SimulationTruncated : public std::runtime_error {
 public:
  SimulationTruncated(const std::string& what, double reached_time, std::size_t events)
      : std::runtime_error(what), reached_time_(reached_time), events_(events) {}
  double reached_time() const { return reached_time_; }
  std::size_t events() const { return events_; }

 private:
  double reached_time_;
  std::size_t events_;
};

}  // namespace vegdyn
