#include "memcal/calibrate.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "memcal/linprog.hpp"

namespace memcal {

namespace {

double inf_norm(const Vector& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

struct DualPoint {
  Vector lambda;
  Vector args;  // lambda' d_i x_i
  double objective = 0.0;
  /// Sum of the absolute values of the objective's terms; sets the
  /// round-off level of `objective`.
  double magnitude = 0.0;
  Vector residual;
  bool valid = false;
};

class DualEvaluator {
public:
  explicit DualEvaluator(const CalibrationProblem& problem)
      : problem_(problem),
        rows_(problem.sample.d.asDiagonal() * problem.aux),
        inv_n_(1.0 / static_cast<double>(problem.sample.population_size)) {}

  const Matrix& rows() const { return rows_; }

  DualPoint evaluate(const Vector& lambda) const {
    DualPoint point;
    point.lambda = lambda;
    point.args = rows_ * lambda;
    const auto n = point.args.size();
    Vector slopes(n);
    double total = 0.0;
    double magnitude = 0.0;
    for (Index i = 0; i < n; ++i) {
      const auto& prior = problem_.priors[static_cast<std::size_t>(i)];
      const double a = point.args[i];
      if (!(a < prior.domain_upper()) || !std::isfinite(a)) return point;
      const double term = prior.log_laplace(a);
      total += term;
      magnitude += std::abs(term);
      slopes[i] = prior.dlog_laplace(a);
    }
    point.objective = total * inv_n_ - lambda.dot(problem_.target);
    point.magnitude = magnitude * inv_n_ + std::abs(lambda.dot(problem_.target));
    point.residual = rows_.transpose() * slopes * inv_n_ - problem_.target;
    point.valid = std::isfinite(point.objective) && point.residual.allFinite();
    return point;
  }

  Matrix hessian(const DualPoint& point) const {
    const auto n = point.args.size();
    Vector curvature(n);
    for (Index i = 0; i < n; ++i) {
      curvature[i] = problem_.priors[static_cast<std::size_t>(i)].d2log_laplace(point.args[i]);
    }
    return rows_.transpose() * curvature.asDiagonal() * rows_ * inv_n_;
  }

  /// Largest step along `direction` that keeps every argument at most
  /// upper - 0.01 (upper - current).
  double boundary_cap(const DualPoint& point, const Vector& direction) const {
    const Vector change = rows_ * direction;
    double cap = 1.0;
    for (Index i = 0; i < change.size(); ++i) {
      const double upper = problem_.priors[static_cast<std::size_t>(i)].domain_upper();
      if (std::isfinite(upper) && change[i] > 0.0) {
        cap = std::min(cap, 0.99 * (upper - point.args[i]) / change[i]);
      }
    }
    return cap;
  }

private:
  const CalibrationProblem& problem_;
  Matrix rows_;
  double inv_n_;
};

Vector solve_newton_system(const Matrix& hessian, const Vector& rhs, double ridge) {
  Eigen::LLT<Matrix> llt(hessian);
  if (llt.info() == Eigen::Success) {
    Vector step = llt.solve(rhs);
    if (step.allFinite()) return step;
  }
  const auto k = static_cast<double>(hessian.rows());
  const double shift = ridge * std::max(hessian.trace(), std::numeric_limits<double>::min()) / k;
  Matrix regularized = hessian;
  regularized.diagonal().array() += shift;
  Eigen::LLT<Matrix> ridged(regularized);
  if (ridged.info() != Eigen::Success) {
    throw SingularityError("dual Hessian is singular even after ridge regularization");
  }
  Vector step = ridged.solve(rhs);
  if (!step.allFinite()) throw SingularityError("dual Hessian is singular even after ridge regularization");
  return step;
}

// Whether some pi_i w_i sits within a relative 1e-8 of a finite support bound.
bool near_support_boundary(const CalibrationProblem& problem, const DualPoint& point) {
  for (Index i = 0; i < point.args.size(); ++i) {
    const auto& prior = problem.priors[static_cast<std::size_t>(i)];
    const Interval s = prior.support();
    const double p = prior.dlog_laplace(point.args[i]);
    const double scale = 1e-8 * std::max(1.0, std::abs(p));
    if ((s.bounded_below() && p - s.lower <= scale) || (s.bounded_above() && s.upper - p <= scale)) return true;
  }
  return false;
}

[[noreturn]] void fail(const CalibrationProblem& problem, const std::string& reason,
                       std::vector<IterationRecord> trace) {
  const FeasibilityReport report = check_feasibility(problem);
  if (!report.feasible) throw InfeasibleError(report.message);
  throw SolverError(reason, std::move(trace));
}

}  // namespace

std::vector<PriorFamily> build_priors(PriorChoice choice, const Sample& sample, const std::optional<Vector>& q) {
  if (q && q->size() != sample.size()) throw ArgumentError("q must have one entry per sampled unit");
  std::vector<PriorFamily> priors;
  priors.reserve(static_cast<std::size_t>(sample.size()));
  for (Index i = 0; i < sample.size(); ++i) {
    switch (choice) {
      case PriorChoice::Gaussian: priors.push_back(gaussian_prior(sample.pi[i] * (q ? (*q)[i] : 1.0))); break;
      case PriorChoice::Exponential: priors.push_back(exponential_prior()); break;
      case PriorChoice::Poisson: priors.push_back(poisson_prior()); break;
    }
  }
  return priors;
}

CalibrationProblem make_problem(Sample sample, Matrix aux, Vector target, std::vector<PriorFamily> priors) {
  CalibrationProblem problem{std::move(sample), std::move(aux), std::move(target), std::move(priors)};
  validate(problem);
  return problem;
}

CalibrationProblem make_problem(Sample sample, Matrix aux, Vector target, PriorChoice choice,
                                const std::optional<Vector>& q) {
  auto priors = build_priors(choice, sample, q);
  return make_problem(std::move(sample), std::move(aux), std::move(target), std::move(priors));
}

void validate(const CalibrationProblem& problem) {
  const Index n = problem.sample.size();
  if (problem.aux.cols() < 1) throw ArgumentError("calibration needs at least one auxiliary variable");
  if (problem.aux.rows() != n) {
    throw ArgumentError("aux has " + std::to_string(problem.aux.rows()) + " rows but the sample has " +
                        std::to_string(n) + " units");
  }
  if (problem.target.size() != problem.aux.cols()) {
    throw ArgumentError("dimension mismatch: " + std::to_string(problem.aux.cols()) +
                        " auxiliary columns but target of length " + std::to_string(problem.target.size()));
  }
  if (static_cast<Index>(problem.priors.size()) != n) throw ArgumentError("need one prior per sampled unit");
  if (!problem.aux.allFinite()) throw ArgumentError("auxiliary values must be finite");
  if (!problem.target.allFinite()) throw ArgumentError("calibration target must be finite");
  if (problem.sample.population_size < n) throw ArgumentError("population size smaller than sample");
}

std::vector<std::string> diagnose_aux(const Matrix& aux) {
  std::vector<std::string> warnings;
  Eigen::ColPivHouseholderQR<Matrix> qr(aux);
  if (qr.rank() < aux.cols()) {
    warnings.push_back("auxiliary matrix is rank deficient (rank " + std::to_string(qr.rank()) + " < " +
                       std::to_string(aux.cols()) + "); ridge handling applies");
  }
  for (Index j = 0; j < aux.cols(); ++j) {
    const double lo = aux.col(j).minCoeff();
    const double hi = aux.col(j).maxCoeff();
    if (lo == hi && lo != 1.0) {
      std::ostringstream msg;
      msg << "auxiliary column " << (j + 1) << " is constant (" << lo << ") but is not an intercept";
      warnings.push_back(msg.str());
    }
  }
  return warnings;
}

Vector calibration_residual(const CalibrationProblem& problem, const Vector& lambda) {
  validate(problem);
  const DualPoint point = DualEvaluator(problem).evaluate(lambda);
  if (!point.valid) throw DomainError("lambda lies outside the dual domain");
  return point.residual;
}

Matrix calibration_jacobian(const CalibrationProblem& problem, const Vector& lambda) {
  validate(problem);
  DualEvaluator evaluator(problem);
  const DualPoint point = evaluator.evaluate(lambda);
  if (!point.valid) throw DomainError("lambda lies outside the dual domain");
  return evaluator.hessian(point);
}

CalibrationSolution solve_dual(const CalibrationProblem& problem, const SolverOptions& options) {
  validate(problem);
  const Index k = problem.aux.cols();
  const double tol = options.tol > 0.0 ? options.tol : 1e-10 * std::max(1.0, inf_norm(problem.target));
  const double round_off = 64.0 * std::numeric_limits<double>::epsilon();

  DualEvaluator evaluator(problem);
  CalibrationSolution solution;
  solution.warnings = diagnose_aux(problem.aux);

  DualPoint current = evaluator.evaluate(Vector::Zero(k));
  if (!current.valid) throw DomainError("lambda = 0 lies outside the dual domain");

  int iteration = 0;
  double last_step = 0.0;
  while (true) {
    const double residual_norm = inf_norm(current.residual);
    solution.trace.push_back({iteration, current.objective, residual_norm, last_step});
    if (residual_norm <= tol) break;
    if (iteration >= options.max_iter) {
      fail(problem, "dual Newton did not converge within " + std::to_string(options.max_iter) + " iterations",
           std::move(solution.trace));
    }

    const Matrix hessian = evaluator.hessian(current);
    Vector direction;
    try {
      direction = solve_newton_system(hessian, -current.residual, options.ridge);
    } catch (const SingularityError&) {
      const FeasibilityReport report = check_feasibility(problem);
      if (!report.feasible) throw InfeasibleError(report.message);
      throw;
    }
    const double slope = current.residual.dot(direction);
    double step = evaluator.boundary_cap(current, direction);

    bool accepted = false;
    DualPoint trial;
    for (int h = 0; h <= options.max_halvings; ++h, step *= 0.5) {
      trial = evaluator.evaluate(current.lambda + step * direction);
      if (!trial.valid) continue;
      if (trial.objective <= current.objective + options.armijo * step * slope) {
        accepted = true;
        break;
      }
      const double scale = std::max(current.magnitude, trial.magnitude);
      if (std::abs(trial.objective - current.objective) <= round_off * scale &&
          inf_norm(trial.residual) < residual_norm) {
        accepted = true;
        break;
      }
    }
    if (!accepted) fail(problem, "line search could not decrease the dual objective", std::move(solution.trace));

    current = std::move(trial);
    last_step = step;
    ++iteration;
  }

  const Index n = problem.sample.size();
  if (near_support_boundary(problem, current)) {
    const FeasibilityReport report = check_feasibility(problem);
    if (!report.feasible) throw InfeasibleError(report.message);
  }
  solution.lambda = current.lambda;
  solution.weights.resize(n);
  for (Index i = 0; i < n; ++i) {
    solution.weights[i] =
        problem.sample.d[i] * problem.priors[static_cast<std::size_t>(i)].dlog_laplace(current.args[i]);
  }
  solution.iterations = iteration;
  solution.grad_norm = inf_norm(current.residual);
  solution.dissimilarity_value = dissimilarity(problem.priors, problem.sample.pi, solution.weights);
  solution.negative_weights = (solution.weights.array() < 0.0).any();
  if (solution.negative_weights) solution.warnings.emplace_back("some calibrated weights are negative");
  if (problem.sample.y) {
    solution.estimate = solution.weights.dot(*problem.sample.y) / static_cast<double>(problem.sample.population_size);
  }
  return solution;
}

double primal_objective(const CalibrationProblem& problem, const Vector& w) {
  if (w.size() != problem.sample.size()) throw ArgumentError("weight vector length must equal sample size");
  return dissimilarity(problem.priors, problem.sample.pi, w);
}

GregResult greg_closed_form(const Sample& sample, const Matrix& aux, const Vector& target, const Vector& y,
                            const std::optional<Vector>& q) {
  const Index n = sample.size();
  if (aux.rows() != n || y.size() != n) throw ArgumentError("aux and y must have one row per sampled unit");
  if (target.size() != aux.cols()) throw ArgumentError("target length must equal the number of aux columns");
  if (q && q->size() != n) throw ArgumentError("q must have one entry per sampled unit");
  const Vector qd = q ? Vector(q->cwiseProduct(sample.d)) : sample.d;

  const Matrix gram = aux.transpose() * qd.asDiagonal() * aux;
  const Vector cross = aux.transpose() * qd.cwiseProduct(y);
  Eigen::LLT<Matrix> llt(gram);
  if (llt.info() != Eigen::Success || !(llt.rcond() > std::numeric_limits<double>::epsilon())) {
    throw SingularityError("weighted Gram matrix sum q_i d_i x_i x_i' is singular");
  }
  GregResult result;
  result.b_hat = llt.solve(cross);
  result.estimate = ht_mean(sample, y) + (target - ht_mean(sample, aux)).dot(result.b_hat);
  return result;
}

FeasibilityReport check_feasibility(const CalibrationProblem& problem) {
  validate(problem);
  const Index n = problem.sample.size();
  const Index k = problem.aux.cols();
  const Matrix rows = problem.sample.d.asDiagonal() * problem.aux;
  const Vector total = problem.target * static_cast<double>(problem.sample.population_size);

  bool all_unbounded = true;
  for (const auto& prior : problem.priors) {
    const Interval s = prior.support();
    if (s.bounded_below() || s.bounded_above()) all_unbounded = false;
  }

  FeasibilityReport report;
  if (all_unbounded) {
    report.method = "rank";
    Eigen::ColPivHouseholderQR<Matrix> qr(rows.transpose());
    if (qr.rank() == k) {
      report.feasible = true;
      report.margin = std::numeric_limits<double>::infinity();
      report.message = "feasible: auxiliary matrix has full column rank and supports are unbounded";
      return report;
    }
    const Vector delta = qr.solve(total);
    const double gap = (rows.transpose() * delta - total).cwiseAbs().maxCoeff();
    report.feasible = gap <= 1e-9 * std::max(1.0, total.cwiseAbs().maxCoeff());
    report.margin = report.feasible ? std::numeric_limits<double>::infinity() : 0.0;
    report.message = report.feasible ? "feasible: target lies in the span of the auxiliary rows"
                                     : "infeasible: target lies outside the span of the auxiliary rows";
    return report;
  }

  // Unknowns: per-unit offsets (u >= 0, or a +/- pair for free units) and
  // a shared margin eps >= 0; p_i = base_i + sign_i * (eps + u_i).
  report.method = "lp";
  std::vector<Index> first_col(static_cast<std::size_t>(n));
  Index columns = 0;
  for (Index i = 0; i < n; ++i) {
    first_col[static_cast<std::size_t>(i)] = columns;
    const Interval s = problem.priors[static_cast<std::size_t>(i)].support();
    columns += (s.bounded_below() || s.bounded_above()) ? 1 : 2;
  }
  const Index eps_col = columns++;

  lp::Program program;
  program.c = Vector::Zero(columns);
  program.c[eps_col] = 1.0;
  program.a_eq = Matrix::Zero(k, columns);
  program.b_eq = total;
  std::vector<Eigen::RowVectorXd> le_rows;
  std::vector<double> le_rhs;

  for (Index i = 0; i < n; ++i) {
    const Interval s = problem.priors[static_cast<std::size_t>(i)].support();
    const Vector r = rows.row(i).transpose();
    const Index c = first_col[static_cast<std::size_t>(i)];
    if (!s.bounded_below() && !s.bounded_above()) {
      program.a_eq.col(c) = r;
      program.a_eq.col(c + 1) = -r;
    } else if (s.bounded_below()) {
      program.a_eq.col(c) = r;
      program.a_eq.col(eps_col) += r;
      program.b_eq -= s.lower * r;
      if (s.bounded_above()) {
        Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(columns);
        row[c] = 1.0;
        row[eps_col] = 2.0;
        le_rows.push_back(row);
        le_rhs.push_back(s.upper - s.lower);
      }
    } else {
      program.a_eq.col(c) = -r;
      program.a_eq.col(eps_col) -= r;
      program.b_eq -= s.upper * r;
    }
  }
  Eigen::RowVectorXd cap = Eigen::RowVectorXd::Zero(columns);
  cap[eps_col] = 1.0;
  le_rows.push_back(cap);
  le_rhs.push_back(1.0);
  program.a_le.resize(static_cast<Index>(le_rows.size()), columns);
  program.b_le.resize(static_cast<Index>(le_rows.size()));
  for (std::size_t r = 0; r < le_rows.size(); ++r) {
    program.a_le.row(static_cast<Index>(r)) = le_rows[r];
    program.b_le[static_cast<Index>(r)] = le_rhs[r];
  }

  const lp::Solution sol = lp::solve(program);
  if (sol.status == lp::Status::Optimal && sol.value > 1e-9) {
    report.feasible = true;
    report.margin = sol.value;
    std::ostringstream msg;
    msg << "feasible: target reachable with every pi_i w_i at least " << sol.value
        << " inside its prior support";
    report.message = msg.str();
  } else {
    report.feasible = false;
    report.margin = 0.0;
    report.message = sol.status == lp::Status::Optimal
                         ? "infeasible: target is reachable only on the boundary of the prior supports"
                         : "infeasible: target lies outside the set of means attainable inside the prior supports";
  }
  return report;
}

}  // namespace memcal
