#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace memcal {

/// Invalid sizes, shapes or parameter values supplied by the caller.
class ArgumentError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// A function was evaluated outside its effective domain.
class DomainError : public std::domain_error {
public:
  using std::domain_error::domain_error;
};

/// The operation needs information the object does not carry
/// (typically joint inclusion probabilities).
class UnsupportedError : public std::logic_error {
public:
  using std::logic_error::logic_error;
};

/// A linear system could not be solved.
class SingularityError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Combinatorial guard exceeded.
class SizeError : public std::length_error {
public:
  using std::length_error::length_error;
};

/// The calibration target is not reachable with weights inside the
/// prior supports.
class InfeasibleError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct IterationRecord {
  int iteration = 0;
  double objective = 0.0;
  double residual_norm = 0.0;
  double step = 0.0;
};

/// Iterative solver gave up; carries the per-iteration trace.
class SolverError : public std::runtime_error {
public:
  SolverError(const std::string& what, std::vector<IterationRecord> trace)
      : std::runtime_error(what), trace_(std::move(trace)) {}

  const std::vector<IterationRecord>& trace() const noexcept { return trace_; }

private:
  std::vector<IterationRecord> trace_;
};

}  // namespace memcal
