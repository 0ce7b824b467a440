#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "memcal/calibrate.hpp"
#include "memcal/design.hpp"

namespace memcal {

/// Instrument vectors z_i, one row per sampled unit.
struct InstrumentSpec {
  Matrix z;
  std::string label;
  std::vector<std::string> warnings;
};

/// z_i = q_i x_i (q defaults to 1).
InstrumentSpec instruments_from_aux(const Matrix& aux, const std::optional<Vector>& q = std::nullopt);

struct InstrumentResult {
  double estimate = 0.0;
  Vector b_hat;
  Vector lambda;
  Vector weights;
};

/// t_y^HT + (t_x - t_x^HT)' B with B = [sum d z x']^{-1} sum d z y. The
/// weights d_i (1 + z_i' lambda) reproduce the estimate.
/// Throws SingularityError when sum d z x' is not invertible.
InstrumentResult instrument_estimate(const Sample& sample, const Matrix& aux, const Vector& y,
                                     const InstrumentSpec& instruments, const Vector& target);

/// Per-unit weight adjustment functions f_i(lambda) with f_i(0) = 1.
struct GCFamily {
  std::function<double(Index, const Vector&)> f;
  /// Optional analytic gradient of f_i; forward differences otherwise.
  std::function<Vector(Index, const Vector&)> gradient;
  std::string label;
};

/// f_i(lambda) = Lambda_i'(lambda' d_i x_i) for the priors of `problem`.
GCFamily prior_gc_family(const CalibrationProblem& problem);
/// f_i(lambda) = 1 + z_i' lambda.
GCFamily linear_gc_family(const InstrumentSpec& instruments);

struct GCResult {
  double estimate = 0.0;
  Vector lambda;
  Vector weights;
  int iterations = 0;
  double residual_norm = 0.0;
};

/// Solves N^-1 sum d_i f_i(lambda) x_i = t_x by damped Newton on half the
/// squared residual norm, starting from lambda = 0, and returns the estimate
/// N^-1 sum d_i f_i(lambda) y_i. Throws SolverError on failure.
GCResult gc_estimate(const Sample& sample, const Matrix& aux, const Vector& y, const GCFamily& family,
                     const Vector& target, const SolverOptions& options = {});

/// Optimal instruments for SRSWOR: z_i = N(N-n)/(n(N-1)) (u_i - t_u) for the
/// sampled positions. `u_values` holds u(x_j) for the whole population.
InstrumentSpec optimal_instruments_uniform(const Matrix& u_values, const Vector& t_u, Index N, Index n,
                                           const std::vector<Index>& sampled);
InstrumentSpec optimal_instruments_uniform(const Vector& u_values, double t_u, Index N, Index n,
                                           const std::vector<Index>& sampled);

struct ReducedProblem {
  Vector scalar_aux;          // B' x_i
  double scalar_target = 0.0; // B' t_x
  Vector scalar_instruments;  // B' z_i
  Vector b_hat;
};

/// Collapses a k-dimensional instrument problem to one dimension along
/// B = [sum d z x']^{-1} sum d y z; the scalar instrument estimate equals
/// the original one.
ReducedProblem reduce_dimension(const Sample& sample, const Matrix& aux, const Vector& y,
                                const InstrumentSpec& instruments, const Vector& target);

/// |estimate_f - estimate_g| for two GC families on the same data.
double equivalence_gap(const Sample& sample, const Matrix& aux, const Vector& y, const GCFamily& f,
                       const GCFamily& g, const Vector& target, const SolverOptions& options = {});

}  // namespace memcal
