#pragma once

#include <optional>
#include <string>
#include <vector>

#include "memcal/design.hpp"
#include "memcal/errors.hpp"
#include "memcal/priors.hpp"

namespace memcal {

struct SolverOptions {
  /// Convergence threshold on the inf-norm of the calibration residual.
  /// Non-positive means 1e-10 * max(1, ||t_x||_inf).
  double tol = 0.0;
  int max_iter = 100;
  /// Ridge factor added as ridge * trace(H)/k * I when Cholesky fails.
  double ridge = 1e-12;
  double armijo = 1e-4;
  int max_halvings = 60;
};

/// Calibrate the sample so that N^-1 sum_i w_i aux_i = target.
struct CalibrationProblem {
  Sample sample;
  Matrix aux;     // n x k, one row per sampled unit
  Vector target;  // t_x, length k
  std::vector<PriorFamily> priors;
};

enum class PriorChoice { Gaussian, Exponential, Poisson };

/// Per-unit priors for the sample. Gaussian priors get variance pi_i q_i
/// (q defaults to 1); exponential and Poisson ignore q.
std::vector<PriorFamily> build_priors(PriorChoice choice, const Sample& sample,
                                      const std::optional<Vector>& q = std::nullopt);

CalibrationProblem make_problem(Sample sample, Matrix aux, Vector target, std::vector<PriorFamily> priors);
CalibrationProblem make_problem(Sample sample, Matrix aux, Vector target, PriorChoice choice,
                                const std::optional<Vector>& q = std::nullopt);

/// Throws ArgumentError on shape mismatches or non-finite input.
void validate(const CalibrationProblem& problem);

/// Non-fatal findings about the auxiliary matrix: rank deficiency and
/// constant columns other than an all-ones intercept.
std::vector<std::string> diagnose_aux(const Matrix& aux);

struct CalibrationSolution {
  Vector lambda;
  Vector weights;
  int iterations = 0;
  double grad_norm = 0.0;
  double dissimilarity_value = 0.0;
  std::optional<double> estimate;
  bool negative_weights = false;
  std::vector<std::string> warnings;
  std::vector<IterationRecord> trace;
};

/// Solves N^-1 sum_i d_i Lambda_i'(lambda' d_i x_i) x_i = t_x by damped
/// Newton on the convex dual N^-1 sum_i Lambda_i(lambda' d_i x_i) - lambda' t_x,
/// starting from lambda = 0 (the Horvitz-Thompson weights), then returns
/// w_i = d_i Lambda_i'(lambda' d_i x_i).
///
/// Throws InfeasibleError when the target cannot be met inside the prior
/// supports, SolverError (with trace) on non-convergence, and
/// SingularityError when the Hessian stays singular after the ridge.
CalibrationSolution solve_dual(const CalibrationProblem& problem, const SolverOptions& options = {});

/// Residual N^-1 sum_i d_i Lambda_i'(lambda' d_i x_i) x_i - t_x.
Vector calibration_residual(const CalibrationProblem& problem, const Vector& lambda);
/// Jacobian of calibration_residual: N^-1 sum_i d_i^2 Lambda_i''(.) x_i x_i'.
Matrix calibration_jacobian(const CalibrationProblem& problem, const Vector& lambda);

/// sum_i Lambda*_i(pi_i w_i).
double primal_objective(const CalibrationProblem& problem, const Vector& w);

struct GregResult {
  double estimate = 0.0;
  Vector b_hat;
};

/// t_y^HT + (t_x - t_x^HT)' B with B = [sum q d x x']^{-1} sum q d y x.
GregResult greg_closed_form(const Sample& sample, const Matrix& aux, const Vector& target, const Vector& y,
                            const std::optional<Vector>& q = std::nullopt);

struct FeasibilityReport {
  bool feasible = false;
  /// Largest uniform distance of the p_i = pi_i w_i from their support
  /// boundaries achievable under the constraint (capped at 1); 0 when
  /// infeasible. Infinite for all-unbounded supports with full rank.
  double margin = 0.0;
  std::string method;
  std::string message;
};

/// Whether t_x is attainable with pi_i w_i strictly inside every prior
/// support: a rank test when all supports are the whole line, a linear
/// program otherwise.
FeasibilityReport check_feasibility(const CalibrationProblem& problem);

}  // namespace memcal
