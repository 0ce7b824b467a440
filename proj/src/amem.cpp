#include "memcal/amem.hpp"

#include <cmath>
#include <limits>

namespace memcal {

namespace {

void fill_features(const BasisSpec& basis, double center, double half_width, double x, double* out) {
  if (basis.monomial) {
    const double t = (x - center) / half_width;
    double power = 1.0;
    for (Index j = 0; j < basis.m(); ++j) {
      power *= t;
      out[j] = power;
    }
  } else {
    for (Index j = 0; j < basis.m(); ++j) out[j] = basis.functions[static_cast<std::size_t>(j)](x);
  }
}

double binomial(Index n, Index k) {
  double r = 1.0;
  for (Index i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
  return r;
}

}  // namespace

BasisSpec BasisSpec::monomials(Index m) {
  if (m < 1) throw ArgumentError("basis needs at least one function");
  BasisSpec spec;
  for (Index j = 1; j <= m; ++j) {
    spec.functions.emplace_back([j](double x) { return std::pow(x, static_cast<double>(j)); });
  }
  spec.label = "monomial:" + std::to_string(m);
  spec.monomial = true;
  return spec;
}

BasisSpec BasisSpec::custom(std::vector<std::function<double(double)>> functions, std::string label) {
  if (functions.empty()) throw ArgumentError("basis needs at least one function");
  BasisSpec spec;
  spec.functions = std::move(functions);
  spec.label = std::move(label);
  return spec;
}

ProjectionEstimator::ProjectionEstimator(BasisSpec basis, double intercept, Vector b_phi, Vector t_phi_pi,
                                         double center, double half_width)
    : basis_(std::move(basis)),
      intercept_(intercept),
      b_phi_(std::move(b_phi)),
      t_phi_pi_(std::move(t_phi_pi)),
      center_(center),
      half_width_(half_width) {
  if (b_phi_.size() != basis_.m() || t_phi_pi_.size() != basis_.m()) {
    throw ArgumentError("projection coefficients must match the basis size");
  }
}

Vector ProjectionEstimator::features(double x) const {
  Vector out(basis_.m());
  fill_features(basis_, center_, half_width_, x, out.data());
  return out;
}

Matrix ProjectionEstimator::features(const Vector& x) const {
  Matrix out(basis_.m(), x.size());
  for (Index i = 0; i < x.size(); ++i) fill_features(basis_, center_, half_width_, x[i], out.col(i).data());
  return out.transpose();
}

double ProjectionEstimator::evaluate(double x) const {
  return intercept_ + b_phi_.dot(features(x) - t_phi_pi_);
}

Vector ProjectionEstimator::evaluate(const Vector& x) const {
  const double offset = intercept_ - b_phi_.dot(t_phi_pi_);
  return (features(x) * b_phi_).array() + offset;
}

Vector ProjectionEstimator::raw_coefficients() const {
  if (!basis_.monomial) throw UnsupportedError("raw coefficients exist only for monomial bases");
  const Index m = basis_.m();
  Vector c = Vector::Zero(m + 1);
  c[0] = intercept_ - b_phi_.dot(t_phi_pi_);
  // ((x - center) / h)^j = h^-j sum_k C(j,k) x^k (-center)^(j-k)
  for (Index j = 1; j <= m; ++j) {
    const double scale = b_phi_[j - 1] / std::pow(half_width_, static_cast<double>(j));
    for (Index k = 0; k <= j; ++k) {
      c[k] += scale * binomial(j, k) * std::pow(-center_, static_cast<double>(j - k));
    }
  }
  return c;
}

ProjectionEstimator fit_projection(const Sample& sample, const BasisSpec& basis, Index column) {
  if (basis.m() < 1) throw ArgumentError("basis needs at least one function");
  if (column < 0 || column >= sample.x.cols()) throw ArgumentError("auxiliary column out of range");
  const Vector y = sample.y_values();
  const Vector x = sample.x.col(column);

  double center = 0.0;
  double half_width = 1.0;
  if (basis.monomial) {
    const double lo = x.minCoeff();
    const double hi = x.maxCoeff();
    center = 0.5 * (hi + lo);
    half_width = hi > lo ? 0.5 * (hi - lo) : 1.0;
  }
  const Index n = sample.size();
  const Index m = basis.m();
  Matrix phi(n, m);
  for (Index i = 0; i < n; ++i) {
    Vector row(m);
    fill_features(basis, center, half_width, x[i], row.data());
    phi.row(i) = row.transpose();
  }
  if (!phi.allFinite()) throw DomainError("basis functions are not finite on the sample");

  const Vector t_phi = (phi.transpose() * sample.d) / sample.d.sum();
  const Matrix centred = phi.rowwise() - t_phi.transpose();
  const Matrix gram = phi.transpose() * sample.d.asDiagonal() * centred;
  const Vector cross = centred.transpose() * sample.d.cwiseProduct(y);
  Eigen::LDLT<Matrix> ldlt(0.5 * (gram + gram.transpose()));
  const double scale = gram.diagonal().cwiseAbs().maxCoeff();
  const double pivot = ldlt.vectorD().cwiseAbs().minCoeff();
  if (ldlt.info() != Eigen::Success || !(pivot > 1e-12 * scale)) {
    throw SingularityError("centred basis Gram matrix is singular; try a smaller m (m = " + std::to_string(m) + ")");
  }
  return ProjectionEstimator(basis, ht_mean(sample, y), ldlt.solve(cross), t_phi, center, half_width);
}

AmemResult amem_estimate(const ProjectionEstimator& proj, const Vector& pop_x, const Sample& sample, Index column) {
  const Index N = pop_x.size();
  if (N != sample.population_size) throw ArgumentError("population auxiliary values must cover all N units");
  if (column < 0 || column >= sample.x.cols()) throw ArgumentError("auxiliary column out of range");
  const Index m = proj.basis().m();
  const double Nd = static_cast<double>(N);

  Vector t_phi = Vector::Zero(m);
  Vector buffer(m);
  double phi_total = 0.0;
  const double offset = proj.intercept() - proj.b_phi().dot(proj.t_phi_pi());
  for (Index i = 0; i < N; ++i) {
    fill_features(proj.basis(), proj.center(), proj.half_width(), pop_x[i], buffer.data());
    t_phi += buffer;
    phi_total += offset + proj.b_phi().dot(buffer);
  }
  t_phi /= Nd;

  AmemResult r;
  const double t_y_ht = proj.intercept();
  r.ht_form = t_y_ht + proj.b_phi().dot(t_phi - proj.t_phi_pi());
  r.population_form = phi_total / Nd;

  const Vector fitted = proj.evaluate(Vector(sample.x.col(column)));
  const Vector y = sample.y_values();
  const double fitted_mean = sample.d.dot(fitted) / sample.d.sum();
  const Vector centred = fitted.array() - fitted_mean;
  const double denom = sample.d.dot(fitted.cwiseProduct(centred));
  r.b_Phi = denom != 0.0 ? sample.d.dot(y.cwiseProduct(centred)) / denom : std::numeric_limits<double>::quiet_NaN();
  r.self_form = t_y_ht + r.b_Phi * (r.population_form - fitted_mean);
  r.estimate = r.ht_form;
  r.identity_gap = std::max({std::abs(r.ht_form - r.population_form), std::abs(r.ht_form - r.self_form),
                             std::abs(r.population_form - r.self_form)});
  return r;
}

double oracle_estimate(const Sample& sample, const std::function<double(double)>& phi, const Vector& pop_x,
                       Index column, const SolverOptions& options) {
  if (pop_x.size() != sample.population_size) throw ArgumentError("population auxiliary values must cover all N units");
  if (column < 0 || column >= sample.x.cols()) throw ArgumentError("auxiliary column out of range");
  Matrix aux(sample.size(), 2);
  for (Index i = 0; i < sample.size(); ++i) {
    aux(i, 0) = 1.0;
    aux(i, 1) = phi(sample.x(i, column));
  }
  double total = 0.0;
  for (Index i = 0; i < pop_x.size(); ++i) total += phi(pop_x[i]);
  const Vector target = (Vector(2) << 1.0, total / static_cast<double>(pop_x.size())).finished();
  if (!sample.y) throw ArgumentError("sample has no response column");
  const auto problem = make_problem(sample, aux, target, PriorChoice::Gaussian);
  return *solve_dual(problem, options).estimate;
}

}  // namespace memcal
