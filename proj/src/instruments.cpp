#include "memcal/instruments.hpp"

#include <cmath>
#include <limits>
#include <memory>

namespace memcal {

namespace {

double inf_norm(const Vector& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

void check_shapes(const Sample& sample, const Matrix& aux, const Vector& y, const Vector& target) {
  const Index n = sample.size();
  if (aux.rows() != n) throw ArgumentError("aux must have one row per sampled unit");
  if (y.size() != n) throw ArgumentError("y must have one entry per sampled unit");
  if (target.size() != aux.cols()) {
    throw ArgumentError("dimension mismatch: " + std::to_string(aux.cols()) + " auxiliary columns but target of length " +
                        std::to_string(target.size()));
  }
}

Eigen::PartialPivLU<Matrix> invert_checked(const Matrix& m, const char* what) {
  Eigen::PartialPivLU<Matrix> lu(m);
  if (!(lu.rcond() > 1e3 * std::numeric_limits<double>::epsilon()) || !std::isfinite(lu.rcond())) {
    throw SingularityError(std::string(what) + " is singular");
  }
  return lu;
}

// F(lambda) - t_x together with the weights d_i f_i(lambda).
struct GCPoint {
  Vector residual;
  Vector weights;
  bool valid = false;
};

GCPoint evaluate(const Sample& sample, const Matrix& aux, const GCFamily& family, const Vector& target,
                 const Vector& lambda) {
  GCPoint p;
  const Index n = sample.size();
  p.weights.resize(n);
  for (Index i = 0; i < n; ++i) {
    const double f = family.f(i, lambda);
    if (!std::isfinite(f)) return p;
    p.weights[i] = sample.d[i] * f;
  }
  p.residual = aux.transpose() * p.weights / static_cast<double>(sample.population_size) - target;
  p.valid = p.residual.allFinite();
  return p;
}

}  // namespace

InstrumentSpec instruments_from_aux(const Matrix& aux, const std::optional<Vector>& q) {
  InstrumentSpec spec;
  if (q) {
    if (q->size() != aux.rows()) throw ArgumentError("q must have one entry per sampled unit");
    spec.z = q->asDiagonal() * aux;
    spec.label = "q*x";
  } else {
    spec.z = aux;
    spec.label = "x";
  }
  return spec;
}

InstrumentResult instrument_estimate(const Sample& sample, const Matrix& aux, const Vector& y,
                                     const InstrumentSpec& instruments, const Vector& target) {
  check_shapes(sample, aux, y, target);
  const Matrix& z = instruments.z;
  if (z.rows() != aux.rows() || z.cols() != aux.cols()) throw ArgumentError("instruments must have the shape of aux");

  const double inv_n = 1.0 / static_cast<double>(sample.population_size);
  const Matrix cross = z.transpose() * sample.d.asDiagonal() * aux * inv_n;  // X_n
  const auto lu = invert_checked(cross, "instrument matrix sum d z x'");
  const Vector zy = z.transpose() * sample.d.cwiseProduct(y) * inv_n;

  InstrumentResult r;
  const Vector gap = target - ht_mean(sample, aux);
  r.b_hat = lu.solve(zy);
  r.estimate = ht_mean(sample, y) + gap.dot(r.b_hat);
  r.lambda = lu.transpose().solve(gap);
  r.weights = sample.d.cwiseProduct((Vector::Ones(sample.size()) + z * r.lambda));
  return r;
}

GCFamily prior_gc_family(const CalibrationProblem& problem) {
  validate(problem);
  auto rows = std::make_shared<const Matrix>(problem.sample.d.asDiagonal() * problem.aux);
  auto priors = std::make_shared<const std::vector<PriorFamily>>(problem.priors);
  GCFamily family;
  family.f = [rows, priors](Index i, const Vector& lambda) {
    const double s = rows->row(i).dot(lambda);
    const auto& prior = (*priors)[static_cast<std::size_t>(i)];
    if (!(s < prior.domain_upper())) return std::numeric_limits<double>::quiet_NaN();
    return prior.dlog_laplace(s);
  };
  family.gradient = [rows, priors](Index i, const Vector& lambda) -> Vector {
    const double s = rows->row(i).dot(lambda);
    return (*priors)[static_cast<std::size_t>(i)].d2log_laplace(s) * rows->row(i).transpose();
  };
  family.label = "prior";
  return family;
}

GCFamily linear_gc_family(const InstrumentSpec& instruments) {
  auto z = std::make_shared<const Matrix>(instruments.z);
  GCFamily family;
  family.f = [z](Index i, const Vector& lambda) { return 1.0 + z->row(i).dot(lambda); };
  family.gradient = [z](Index i, const Vector&) -> Vector { return z->row(i).transpose(); };
  family.label = "linear:" + instruments.label;
  return family;
}

GCResult gc_estimate(const Sample& sample, const Matrix& aux, const Vector& y, const GCFamily& family,
                     const Vector& target, const SolverOptions& options) {
  check_shapes(sample, aux, y, target);
  if (!family.f) throw ArgumentError("GC family has no weight function");
  const Index n = sample.size();
  const Index k = aux.cols();
  const Vector origin = Vector::Zero(k);
  for (Index i = 0; i < n; ++i) {
    if (std::abs(family.f(i, origin) - 1.0) > 1e-12) {
      throw ArgumentError("GC family must satisfy f_i(0) = 1 (unit " + std::to_string(i + 1) + ")");
    }
  }
  const double tol = options.tol > 0.0 ? options.tol : 1e-10 * std::max(1.0, inf_norm(target));
  const double inv_n = 1.0 / static_cast<double>(sample.population_size);

  auto jacobian = [&](const Vector& lambda, const GCPoint& at) {
    Matrix jac = Matrix::Zero(k, k);
    if (family.gradient) {
      for (Index i = 0; i < n; ++i) {
        jac += sample.d[i] * aux.row(i).transpose() * family.gradient(i, lambda).transpose();
      }
      return Matrix(jac * inv_n);
    }
    for (Index j = 0; j < k; ++j) {
      const double h = 1e-6 * std::max(1.0, std::abs(lambda[j]));
      Vector shifted = lambda;
      shifted[j] += h;
      const GCPoint p = evaluate(sample, aux, family, target, shifted);
      if (!p.valid) throw SolverError("weight function undefined near the current iterate", {});
      jac.col(j) = (p.residual - at.residual) / h;
    }
    return jac;
  };

  Vector lambda = origin;
  GCPoint current = evaluate(sample, aux, family, target, lambda);
  if (!current.valid) throw DomainError("GC weight function is not finite at lambda = 0");
  std::vector<IterationRecord> trace;
  int iteration = 0;
  double last_step = 0.0;
  while (true) {
    const double norm = inf_norm(current.residual);
    const double merit = 0.5 * current.residual.squaredNorm();
    trace.push_back({iteration, merit, norm, last_step});
    if (norm <= tol) break;
    if (iteration >= options.max_iter) {
      throw SolverError("GC Newton did not converge within " + std::to_string(options.max_iter) + " iterations",
                        std::move(trace));
    }
    const Matrix jac = jacobian(lambda, current);
    const Vector direction = jac.colPivHouseholderQr().solve(-current.residual);
    if (!direction.allFinite()) throw SolverError("GC Jacobian is singular", std::move(trace));

    double step = 1.0;
    bool accepted = false;
    GCPoint trial;
    for (int h = 0; h <= options.max_halvings; ++h, step *= 0.5) {
      trial = evaluate(sample, aux, family, target, lambda + step * direction);
      if (!trial.valid) continue;
      if (0.5 * trial.residual.squaredNorm() <= (1.0 - 2.0 * options.armijo * step) * merit) {
        accepted = true;
        break;
      }
    }
    if (!accepted) throw SolverError("GC line search could not reduce the residual", std::move(trace));
    lambda += step * direction;
    current = std::move(trial);
    last_step = step;
    ++iteration;
  }

  GCResult r;
  r.lambda = lambda;
  r.weights = current.weights;
  r.iterations = iteration;
  r.residual_norm = inf_norm(current.residual);
  r.estimate = r.weights.dot(y) * inv_n;
  return r;
}

InstrumentSpec optimal_instruments_uniform(const Matrix& u_values, const Vector& t_u, Index N, Index n,
                                           const std::vector<Index>& sampled) {
  if (n < 1 || n > N) throw ArgumentError("need 1 <= n <= N");
  if (u_values.rows() != N) throw ArgumentError("u_values must have one row per population unit");
  if (t_u.size() != u_values.cols()) throw ArgumentError("t_u length must equal the number of u columns");
  const double Nd = static_cast<double>(N);
  const double nd = static_cast<double>(n);
  const double coef = N == 1 ? 0.0 : Nd * (Nd - nd) / (nd * (Nd - 1.0));

  InstrumentSpec spec;
  spec.label = "optimal-uniform";
  spec.z.resize(static_cast<Index>(sampled.size()), u_values.cols());
  for (std::size_t r = 0; r < sampled.size(); ++r) {
    const Index i = sampled[r];
    if (i < 0 || i >= N) throw ArgumentError("sampled index out of range");
    spec.z.row(static_cast<Index>(r)) = coef * (u_values.row(i) - t_u.transpose());
  }
  if (n == N) spec.warnings.emplace_back("census design: optimal instruments vanish");
  return spec;
}

InstrumentSpec optimal_instruments_uniform(const Vector& u_values, double t_u, Index N, Index n,
                                           const std::vector<Index>& sampled) {
  return optimal_instruments_uniform(Matrix(u_values), Vector::Constant(1, t_u), N, n, sampled);
}

ReducedProblem reduce_dimension(const Sample& sample, const Matrix& aux, const Vector& y,
                                const InstrumentSpec& instruments, const Vector& target) {
  check_shapes(sample, aux, y, target);
  const Matrix& z = instruments.z;
  if (z.rows() != aux.rows() || z.cols() != aux.cols()) throw ArgumentError("instruments must have the shape of aux");
  const Matrix cross = z.transpose() * sample.d.asDiagonal() * aux;
  const auto lu = invert_checked(cross, "instrument matrix sum d z x'");

  ReducedProblem r;
  r.b_hat = lu.solve(z.transpose() * sample.d.cwiseProduct(y));
  r.scalar_aux = aux * r.b_hat;
  r.scalar_target = target.dot(r.b_hat);
  r.scalar_instruments = z * r.b_hat;
  return r;
}

double equivalence_gap(const Sample& sample, const Matrix& aux, const Vector& y, const GCFamily& f,
                       const GCFamily& g, const Vector& target, const SolverOptions& options) {
  const double a = gc_estimate(sample, aux, y, f, target, options).estimate;
  const double b = gc_estimate(sample, aux, y, g, target, options).estimate;
  return std::abs(a - b);
}

}  // namespace memcal
