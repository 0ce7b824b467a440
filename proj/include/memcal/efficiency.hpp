#pragma once

#include <functional>
#include <utility>

#include "memcal/design.hpp"
#include "memcal/rng.hpp"

namespace memcal {

/// A superpopulation from which (X, Y) pairs are drawn independently.
struct SuperPopModel {
  std::function<std::pair<double, double>(Rng&)> draw;
  /// E(Y | X = x) when known.
  std::function<double(double)> phi;
  double sigma2 = 0.0;
};

/// X ~ U[1, 2], Y = exp(X) + N(0, sigma2).
SuperPopModel exp_uniform_model(double sigma2);

struct Draws {
  Vector x;
  Vector y;
};

Draws draw_pairs(const SuperPopModel& model, Index count, std::uint64_t seed);

struct LowerBound {
  double v_star = 0.0;
  Vector b_u;
};

/// Plug-in var(Y - B' u(X)) with B = var(u)^{-1} cov(u, Y), using
/// (M - 1)-denominator moments over M draws; clamped at 0.
/// `u_draws` holds one row u(X_m) per draw.
LowerBound variance_lower_bound(const Matrix& u_draws, const Vector& y);

/// n N^-2 sum_{i,j in U} Delta_ij f_i g_j. O(N) for the uniform design,
/// O(N^2) for designs with a joint-probability table; throws
/// UnsupportedError otherwise.
double design_quadratic_form(const Vector& f, const Vector& g, const SamplingDesign& design);

/// N^-2 sum Delta_ij r_i r_j with r_i = y_i - B' u_i: the design variance of
/// the linearized estimator.
double quadratic_risk_linearized(const Population& pop, const SamplingDesign& design, const Matrix& u_values,
                                 const Vector& b);

struct EfficiencyCheck {
  bool efficient = false;
  double gap = 0.0;
  Vector target_b;
};

/// gap = ||b_hat - var(u)^{-1} cov(u, Y)|| against the plug-in coefficient
/// from the draws; efficient when gap < threshold.
EfficiencyCheck efficiency_check(const Vector& b_hat, const Matrix& u_draws, const Vector& y, double threshold);

struct EfficiencyReport {
  double v_star = 0.0;
  Vector b_u;
  double risk_linearized = 0.0;
  double n_scaled = 0.0;
};

/// Lower bound and linearized risk for the population's own (u, y) values,
/// with population (N-denominator) moments.
EfficiencyReport efficiency_report(const Population& pop, const SamplingDesign& design, const Matrix& u_values);

}  // namespace memcal
