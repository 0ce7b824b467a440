#pragma once

#include <functional>
#include <string>
#include <vector>

#include "memcal/calibrate.hpp"
#include "memcal/design.hpp"

namespace memcal {

/// Scalar basis functions phi^1..phi^m. Monomial bases x, x^2, .., x^m are
/// evaluated on x mapped affinely onto [-1, 1] using the sample range.
struct BasisSpec {
  std::vector<std::function<double(double)>> functions;
  std::string label;
  bool monomial = false;

  Index m() const { return static_cast<Index>(functions.size()); }

  static BasisSpec monomials(Index m);
  static BasisSpec custom(std::vector<std::function<double(double)>> functions, std::string label);
};

/// Phi(x) = intercept + b_phi' (phi(x) - t_phi_pi).
class ProjectionEstimator {
public:
  ProjectionEstimator(BasisSpec basis, double intercept, Vector b_phi, Vector t_phi_pi, double center,
                      double half_width);

  const BasisSpec& basis() const noexcept { return basis_; }
  double intercept() const noexcept { return intercept_; }
  const Vector& b_phi() const noexcept { return b_phi_; }
  const Vector& t_phi_pi() const noexcept { return t_phi_pi_; }
  double center() const noexcept { return center_; }
  double half_width() const noexcept { return half_width_; }

  /// phi(x) as used internally (scaled for monomial bases).
  Vector features(double x) const;
  Matrix features(const Vector& x) const;

  double evaluate(double x) const;
  Vector evaluate(const Vector& x) const;

  /// For monomial bases, the coefficients c_0..c_m of Phi as a polynomial in
  /// the unscaled x. Throws UnsupportedError for custom bases.
  Vector raw_coefficients() const;

private:
  BasisSpec basis_;
  double intercept_;
  Vector b_phi_;
  Vector t_phi_pi_;
  double center_;
  double half_width_;
};

/// Least-squares projection of y on span{1, phi} with design weights:
/// b = [sum d phi (phi - t)']^{-1} sum d y (phi - t), t the d-weighted mean
/// of phi, intercept the HT mean of y. Uses column `column` of sample.x.
/// Throws SingularityError when the centred Gram matrix is singular.
ProjectionEstimator fit_projection(const Sample& sample, const BasisSpec& basis, Index column = 0);

struct AmemResult {
  double estimate = 0.0;
  /// t_y^HT + b' (t_phi - t_phi_pi)
  double ht_form = 0.0;
  /// N^-1 sum over U of Phi(x_i)
  double population_form = 0.0;
  /// t_y^HT + B_Phi (t_Phi - t_Phi_pi)
  double self_form = 0.0;
  /// Coefficient of y regressed on Phi itself; 1 up to round-off.
  double b_Phi = 0.0;
  double identity_gap = 0.0;
};

AmemResult amem_estimate(const ProjectionEstimator& proj, const Vector& pop_x, const Sample& sample,
                         Index column = 0);

/// Calibration estimate with auxiliary (1, Phi(x)) and a Gaussian prior,
/// for a known conditional expectation Phi.
double oracle_estimate(const Sample& sample, const std::function<double(double)>& phi, const Vector& pop_x,
                       Index column = 0, const SolverOptions& options = {});

}  // namespace memcal
