#include "memcal/efficiency.hpp"

#include <cmath>
#include <limits>

#include "memcal/errors.hpp"

namespace memcal {

SuperPopModel exp_uniform_model(double sigma2) {
  if (!(sigma2 >= 0.0)) throw ArgumentError("noise variance must be nonnegative");
  SuperPopModel model;
  const double sd = std::sqrt(sigma2);
  model.draw = [sd](Rng& rng) {
    const double x = rng.uniform(1.0, 2.0);
    const double noise = sd > 0.0 ? rng.normal(0.0, sd) : 0.0;
    return std::pair<double, double>{x, std::exp(x) + noise};
  };
  model.phi = [](double x) { return std::exp(x); };
  model.sigma2 = sigma2;
  return model;
}

Draws draw_pairs(const SuperPopModel& model, Index count, std::uint64_t seed) {
  if (count < 1) throw ArgumentError("need at least one draw");
  Rng rng(seed);
  Draws d{Vector(count), Vector(count)};
  for (Index m = 0; m < count; ++m) {
    const auto [x, y] = model.draw(rng);
    d.x[m] = x;
    d.y[m] = y;
  }
  return d;
}

LowerBound variance_lower_bound(const Matrix& u_draws, const Vector& y) {
  const Index m = u_draws.rows();
  if (y.size() != m) throw ArgumentError("u draws and y must have the same length");
  if (m < 2) throw ArgumentError("need at least two draws");
  const Matrix uc = u_draws.rowwise() - u_draws.colwise().mean();
  const Vector yc = y.array() - y.mean();
  const double denom = static_cast<double>(m - 1);
  const Matrix var_u = uc.transpose() * uc / denom;
  Eigen::LLT<Matrix> llt(var_u);
  if (llt.info() != Eigen::Success || !(llt.rcond() > 1e3 * std::numeric_limits<double>::epsilon())) {
    throw SingularityError("empirical variance of u(X) is singular");
  }
  LowerBound lb;
  lb.b_u = llt.solve(uc.transpose() * yc / denom);
  const Vector residual = yc - uc * lb.b_u;
  lb.v_star = std::max(0.0, residual.squaredNorm() / denom);
  return lb;
}

double design_quadratic_form(const Vector& f, const Vector& g, const SamplingDesign& design) {
  const Index N = design.population_size();
  if (f.size() != N || g.size() != N) throw ArgumentError("f and g must have one entry per population unit");
  const double Nd = static_cast<double>(N);
  const double scale = static_cast<double>(design.sample_size()) / (Nd * Nd);
  if (design.kind() == DesignKind::UniformSRSWOR) {
    const double diag = delta(design, 0, 0);
    const double off = N > 1 ? delta(design, 0, 1) : 0.0;
    const double fg = f.dot(g);
    return scale * (diag * fg + off * (f.sum() * g.sum() - fg));
  }
  if (!design.has_joint()) throw UnsupportedError("this design has no joint inclusion probabilities");
  double total = 0.0;
  for (Index i = 0; i < N; ++i) {
    double row = 0.0;
    for (Index j = 0; j < N; ++j) row += delta(design, i, j) * g[j];
    total += f[i] * row;
  }
  return scale * total;
}

double quadratic_risk_linearized(const Population& pop, const SamplingDesign& design, const Matrix& u_values,
                                 const Vector& b) {
  if (u_values.rows() != pop.size()) throw ArgumentError("u values must have one row per population unit");
  if (b.size() != u_values.cols()) throw ArgumentError("coefficient length must equal the number of u columns");
  const Vector residual = pop.y() - u_values * b;
  return design_quadratic_form(residual, residual, design) / static_cast<double>(design.sample_size());
}

EfficiencyCheck efficiency_check(const Vector& b_hat, const Matrix& u_draws, const Vector& y, double threshold) {
  const LowerBound lb = variance_lower_bound(u_draws, y);
  if (b_hat.size() != lb.b_u.size()) throw ArgumentError("b_hat length must equal the number of u columns");
  EfficiencyCheck check;
  check.target_b = lb.b_u;
  check.gap = (b_hat - lb.b_u).norm();
  check.efficient = check.gap < threshold;
  return check;
}

EfficiencyReport efficiency_report(const Population& pop, const SamplingDesign& design, const Matrix& u_values) {
  if (design.population_size() != pop.size()) throw ArgumentError("design and population sizes differ");
  const LowerBound lb = variance_lower_bound(u_values, pop.y());
  const double N = static_cast<double>(pop.size());
  EfficiencyReport report;
  report.v_star = lb.v_star * (N - 1.0) / N;
  report.b_u = lb.b_u;
  report.risk_linearized = quadratic_risk_linearized(pop, design, u_values, lb.b_u);
  report.n_scaled = static_cast<double>(design.sample_size()) * report.risk_linearized;
  return report;
}

}  // namespace memcal
