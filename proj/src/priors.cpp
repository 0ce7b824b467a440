#include "memcal/priors.hpp"

#include <cmath>
#include <sstream>

#include "memcal/errors.hpp"

namespace memcal {

namespace {

std::string format_value(const char* what, double value) {
  std::ostringstream msg;
  msg.precision(17);
  msg << what << " " << value;
  return msg.str();
}

}  // namespace

PriorFamily PriorFamily::gaussian(double variance) {
  if (!(variance > 0.0) || !std::isfinite(variance)) {
    throw ArgumentError(format_value("gaussian prior needs a positive finite variance, got", variance));
  }
  PriorFamily p;
  p.kind_ = PriorKind::Gaussian;
  p.variance_ = variance;
  p.label_ = "gaussian";
  return p;
}

PriorFamily PriorFamily::exponential() {
  PriorFamily p;
  p.kind_ = PriorKind::Exponential;
  p.variance_ = 1.0;
  p.domain_upper_ = 1.0;
  p.support_ = Interval{0.0, std::numeric_limits<double>::infinity()};
  p.label_ = "exponential";
  return p;
}

PriorFamily PriorFamily::poisson() {
  PriorFamily p;
  p.kind_ = PriorKind::Poisson;
  p.variance_ = 1.0;
  p.support_ = Interval{0.0, std::numeric_limits<double>::infinity()};
  p.label_ = "poisson";
  return p;
}

PriorFamily PriorFamily::custom(CustomPrior spec) {
  if (!spec.log_laplace || !spec.dlog_laplace || !spec.d2log_laplace) {
    throw ArgumentError("custom prior needs Lambda, Lambda' and Lambda''");
  }
  if (!(spec.domain_upper > 0.0)) throw ArgumentError("custom prior domain must contain 0");
  if (!spec.support.contains(1.0)) throw ArgumentError("custom prior support must contain the mean 1");
  if (std::abs(spec.log_laplace(0.0)) > 1e-9) throw ArgumentError("custom prior must satisfy Lambda(0) = 0");
  if (std::abs(spec.dlog_laplace(0.0) - 1.0) > 1e-9) {
    throw ArgumentError("custom prior must have mean one (Lambda'(0) = 1)");
  }
  const double v = spec.d2log_laplace(0.0);
  if (!(v > 0.0)) throw ArgumentError("custom prior must be strictly convex at 0");
  PriorFamily p;
  p.kind_ = PriorKind::Custom;
  p.variance_ = v;
  p.domain_upper_ = spec.domain_upper;
  p.support_ = spec.support;
  p.label_ = spec.label;
  p.custom_ = std::make_shared<const CustomPrior>(std::move(spec));
  return p;
}

double PriorFamily::variance() const { return variance_; }

void PriorFamily::check_log_laplace_arg(double s) const {
  if (!(s < domain_upper_) || std::isnan(s)) {
    throw DomainError(format_value(("log-Laplace transform of the " + label_ + " prior is infinite at s =").c_str(), s));
  }
}

double PriorFamily::log_laplace(double s) const {
  check_log_laplace_arg(s);
  switch (kind_) {
    case PriorKind::Gaussian: return 0.5 * variance_ * s * s + s;
    case PriorKind::Exponential: return -std::log1p(-s);
    case PriorKind::Poisson: return std::expm1(s);
    case PriorKind::Custom: return custom_->log_laplace(s);
  }
  return 0.0;
}

double PriorFamily::dlog_laplace(double s) const {
  check_log_laplace_arg(s);
  switch (kind_) {
    case PriorKind::Gaussian: return variance_ * s + 1.0;
    case PriorKind::Exponential: return 1.0 / (1.0 - s);
    case PriorKind::Poisson: return std::exp(s);
    case PriorKind::Custom: return custom_->dlog_laplace(s);
  }
  return 0.0;
}

double PriorFamily::d2log_laplace(double s) const {
  check_log_laplace_arg(s);
  switch (kind_) {
    case PriorKind::Gaussian: return variance_;
    case PriorKind::Exponential: {
      const double r = 1.0 / (1.0 - s);
      return r * r;
    }
    case PriorKind::Poisson: return std::exp(s);
    case PriorKind::Custom: return custom_->d2log_laplace(s);
  }
  return 0.0;
}

double PriorFamily::cramer(double t) const {
  switch (kind_) {
    case PriorKind::Gaussian: return (t - 1.0) * (t - 1.0) / (2.0 * variance_);
    case PriorKind::Exponential:
      if (!(t > 0.0)) throw DomainError(format_value("Cramer transform of the exponential prior is infinite at t =", t));
      return t - 1.0 - std::log(t);
    case PriorKind::Poisson:
      if (!(t >= 0.0)) throw DomainError(format_value("Cramer transform of the poisson prior is infinite at t =", t));
      if (t == 0.0) return 1.0;
      return t * std::log(t) - t + 1.0;
    case PriorKind::Custom: {
      const double s = invert_derivative(t);
      return s * t - custom_->log_laplace(s);
    }
  }
  return 0.0;
}

double PriorFamily::dcramer(double t) const {
  if (kind_ == PriorKind::Gaussian) return (t - 1.0) / variance_;
  if (!support_.contains(t)) {
    throw DomainError(format_value(("derivative of the " + label_ + " Cramer transform is undefined at t =").c_str(), t));
  }
  switch (kind_) {
    case PriorKind::Exponential: return 1.0 - 1.0 / t;
    case PriorKind::Poisson: return std::log(t);
    default: return invert_derivative(t);
  }
}

// Solves Lambda'(s) = t for custom families: bracket, then Newton steps
// that fall back to bisection whenever they leave the bracket.
double PriorFamily::invert_derivative(double t) const {
  if (!support_.contains(t)) {
    throw DomainError(format_value(("Cramer transform of the " + label_ + " prior is not finite at t =").c_str(), t));
  }
  const auto& f = *custom_;
  double lo = 0.0;
  double hi = 0.0;
  double step = 1.0;
  if (f.dlog_laplace(0.0) < t) {
    // Walk right, never reaching the domain boundary.
    hi = 0.0;
    for (int k = 0; k < 200; ++k) {
      lo = hi;
      hi = std::isfinite(domain_upper_) ? std::min(hi + step, 0.5 * (hi + domain_upper_)) : hi + step;
      step *= 2.0;
      if (f.dlog_laplace(hi) >= t) break;
    }
  } else {
    lo = 0.0;
    for (int k = 0; k < 200; ++k) {
      hi = lo;
      lo -= step;
      step *= 2.0;
      if (f.dlog_laplace(lo) <= t) break;
    }
  }
  if (!(f.dlog_laplace(lo) <= t && f.dlog_laplace(hi) >= t)) {
    throw DomainError(format_value("could not bracket the conjugate point for t =", t));
  }
  double s = 0.5 * (lo + hi);
  for (int k = 0; k < 200; ++k) {
    const double g = f.dlog_laplace(s) - t;
    if (g == 0.0) return s;
    if (g > 0.0) hi = s; else lo = s;
    const double h = f.d2log_laplace(s);
    double next = s - g / h;
    if (!(next > lo && next < hi) || !std::isfinite(next)) next = 0.5 * (lo + hi);
    if (std::abs(next - s) <= 1e-15 * std::max(1.0, std::abs(s)) || hi - lo <= 1e-15 * std::max(1.0, std::abs(s))) {
      return next;
    }
    s = next;
  }
  return s;
}

PriorFamily gaussian_prior(double variance) { return PriorFamily::gaussian(variance); }
PriorFamily exponential_prior() { return PriorFamily::exponential(); }
PriorFamily poisson_prior() { return PriorFamily::poisson(); }

double bregman_divergence(const PriorFamily& prior, const Eigen::VectorXd& w, const Eigen::VectorXd& d) {
  if (w.size() != d.size()) throw ArgumentError("bregman divergence needs vectors of equal length");
  double total = 0.0;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    const double term = prior.cramer(w[i]) - prior.cramer(d[i]) - prior.dcramer(d[i]) * (w[i] - d[i]);
    total += std::max(term, 0.0);
  }
  return total;
}

double dissimilarity(std::span<const PriorFamily> priors, const Eigen::VectorXd& pi, const Eigen::VectorXd& w) {
  if (static_cast<Eigen::Index>(priors.size()) != w.size() || pi.size() != w.size()) {
    throw ArgumentError("dissimilarity needs one prior and one inclusion probability per weight");
  }
  double total = 0.0;
  for (Eigen::Index i = 0; i < w.size(); ++i) total += priors[static_cast<std::size_t>(i)].cramer(pi[i] * w[i]);
  return total;
}

}  // namespace memcal
