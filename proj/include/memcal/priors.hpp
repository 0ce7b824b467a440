#pragma once

#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <string>

#include <Eigen/Dense>

namespace memcal {

/// Open interval (lower, upper); infinite ends allowed.
struct Interval {
  double lower = -std::numeric_limits<double>::infinity();
  double upper = std::numeric_limits<double>::infinity();

  bool contains(double t) const noexcept { return t > lower && t < upper; }
  bool bounded_below() const noexcept { return lower > -std::numeric_limits<double>::infinity(); }
  bool bounded_above() const noexcept { return upper < std::numeric_limits<double>::infinity(); }
};

enum class PriorKind { Gaussian, Exponential, Poisson, Custom };

/// User-supplied prior: only the log-Laplace transform and its first two
/// derivatives are required. The caller is responsible for the usual
/// regularity: Lambda essentially smooth and strictly convex on
/// (-inf, domain_upper), Lambda(0) = 0, Lambda'(0) = 1, and Lambda' mapping
/// the domain onto `support`.
struct CustomPrior {
  std::function<double(double)> log_laplace;
  std::function<double(double)> dlog_laplace;
  std::function<double(double)> d2log_laplace;
  double domain_upper = std::numeric_limits<double>::infinity();
  Interval support;
  std::string label = "custom";
};

/// A mean-one prior measure described by its log-Laplace transform Lambda
/// and Cramer transform Lambda* (the convex conjugate of Lambda).
///
/// Built-ins carry closed forms. Custom families evaluate Lambda* and its
/// derivative by solving Lambda'(s) = t with a bracketed Newton iteration.
class PriorFamily {
public:
  /// Normal(1, variance). Lambda(s) = v s^2/2 + s, Lambda*(t) = (t-1)^2/(2v).
  static PriorFamily gaussian(double variance);
  /// Exponential(1). Lambda(s) = -log(1-s) on s < 1, Lambda*(t) = t - 1 - log t.
  static PriorFamily exponential();
  /// Poisson(1). Lambda(s) = e^s - 1, Lambda*(t) = t log t - t + 1, Lambda*(0) = 1.
  static PriorFamily poisson();
  /// Validates the normalization Lambda(0) = 0, Lambda'(0) = 1, Lambda''(0) > 0.
  static PriorFamily custom(CustomPrior spec);

  PriorKind kind() const noexcept { return kind_; }
  const std::string& label() const noexcept { return label_; }
  /// Lambda is finite on (-inf, domain_upper).
  double domain_upper() const noexcept { return domain_upper_; }
  /// Interior of the convex hull of the prior's support.
  Interval support() const noexcept { return support_; }
  /// Lambda''(0), the prior variance.
  double variance() const;

  double log_laplace(double s) const;
  double dlog_laplace(double s) const;
  double d2log_laplace(double s) const;

  /// Lambda*(t); throws DomainError outside the effective domain.
  double cramer(double t) const;
  /// (Lambda*)'(t) = (Lambda')^{-1}(t); defined on the support interior.
  double dcramer(double t) const;

private:
  PriorFamily() = default;
  void check_log_laplace_arg(double s) const;
  double invert_derivative(double t) const;

  PriorKind kind_ = PriorKind::Gaussian;
  double variance_ = 1.0;
  double domain_upper_ = std::numeric_limits<double>::infinity();
  Interval support_;
  std::string label_;
  std::shared_ptr<const CustomPrior> custom_;
};

PriorFamily gaussian_prior(double variance);
PriorFamily exponential_prior();
PriorFamily poisson_prior();

/// sum_i [Lambda*(w_i) - Lambda*(d_i) - (Lambda*)'(d_i)(w_i - d_i)].
double bregman_divergence(const PriorFamily& prior, const Eigen::VectorXd& w, const Eigen::VectorXd& d);

/// sum_i Lambda*_i(pi_i w_i): the calibration dissimilarity induced by the
/// per-unit priors.
double dissimilarity(std::span<const PriorFamily> priors, const Eigen::VectorXd& pi, const Eigen::VectorXd& w);

}  // namespace memcal
