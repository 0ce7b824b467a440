#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "memcal/instruments.hpp"
#include "memcal/rng.hpp"

using namespace memcal;

namespace {

Sample tiny_sample() {
  return Sample::from_rows({1, 2}, Vector::Constant(2, 0.5), (Matrix(2, 1) << 1.0, 2.0).finished(),
                           (Vector(2) << 1.0, 3.0).finished(), 4);
}

struct Instance {
  Sample sample;
  Matrix aux;
  Vector y;
  Vector target;
  Matrix z;
};

Instance random_instance(Rng& rng, Index n, Index k) {
  const Index N = 10 * n;
  std::vector<std::int64_t> ids;
  Matrix x(n, k), z(n, k);
  Vector y(n), pi(n);
  for (Index i = 0; i < n; ++i) {
    ids.push_back(i + 1);
    pi[i] = rng.uniform(0.05, 0.15);
    for (Index j = 0; j < k; ++j) {
      x(i, j) = j == 0 ? 1.0 : rng.uniform(0.0, 2.0);
      z(i, j) = x(i, j) * rng.uniform(0.5, 1.5);
    }
    y[i] = 2.0 * x.row(i).sum() + rng.normal(0.0, 0.5);
  }
  Sample s = Sample::from_rows(ids, pi, x, y, N);
  Vector target = ht_mean(s, x);
  for (Index j = 0; j < k; ++j) target[j] *= 1.0 + rng.uniform(-0.05, 0.05);
  return {s, x, y, target, z};
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

}  // namespace

TEST_CASE("instrument estimator on the tiny instance") {
  const Sample s = tiny_sample();
  const auto r = instrument_estimate(s, s.x, *s.y, instruments_from_aux(s.x), Vector::Constant(1, 1.25));
  CHECK(r.estimate == doctest::Approx(1.65).epsilon(1e-12));
  CHECK(r.b_hat[0] == doctest::Approx(1.4).epsilon(1e-12));
  CHECK(r.weights[0] == doctest::Approx(1.8).epsilon(1e-12));
  CHECK(r.weights[1] == doctest::Approx(1.6).epsilon(1e-12));

  const auto ht = instrument_estimate(s, s.x, *s.y, instruments_from_aux(s.x), Vector::Constant(1, 1.5));
  CHECK(ht.estimate == doctest::Approx(ht_mean(s, *s.y)).epsilon(1e-15));

  InstrumentSpec zero{Matrix::Zero(2, 1), "zero", {}};
  CHECK_THROWS_AS(instrument_estimate(s, s.x, *s.y, zero, Vector::Constant(1, 1.25)), SingularityError);
}

TEST_CASE("q x instruments reproduce GREG and the weights reproduce the estimate") {
  Rng rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    auto inst = random_instance(rng, 8 + static_cast<Index>(rng.below(30)), 1 + static_cast<Index>(rng.below(3)));
    Vector q(inst.sample.size());
    for (Index i = 0; i < q.size(); ++i) q[i] = rng.uniform(0.5, 2.0);
    const auto greg = greg_closed_form(inst.sample, inst.aux, inst.target, inst.y, q);
    const auto r = instrument_estimate(inst.sample, inst.aux, inst.y, instruments_from_aux(inst.aux, q), inst.target);
    CHECK(std::abs(r.estimate - greg.estimate) <= 1e-10 * std::max(1.0, std::abs(greg.estimate)));

    InstrumentSpec general{inst.z, "random", {}};
    const auto g = instrument_estimate(inst.sample, inst.aux, inst.y, general, inst.target);
    const double n_inv = 1.0 / static_cast<double>(inst.sample.population_size);
    CHECK(std::abs(g.weights.dot(inst.y) * n_inv - g.estimate) <= 1e-10 * std::max(1.0, std::abs(g.estimate)));
    const Vector achieved = inst.aux.transpose() * g.weights * n_inv;
    CHECK((achieved - inst.target).cwiseAbs().maxCoeff() <= 1e-10 * std::max(1.0, inst.target.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("generalized calibration embeds calibration and the instrument estimator") {
  Rng rng(22);
  for (auto choice : {PriorChoice::Gaussian, PriorChoice::Exponential, PriorChoice::Poisson}) {
    for (int trial = 0; trial < 40; ++trial) {
      auto inst = random_instance(rng, 10 + static_cast<Index>(rng.below(20)), 1 + static_cast<Index>(rng.below(3)));
      const auto problem = make_problem(inst.sample, inst.aux, inst.target, choice);
      const auto dual = solve_dual(problem);
      const auto gc = gc_estimate(inst.sample, inst.aux, inst.y, prior_gc_family(problem), inst.target);
      CHECK((gc.lambda - dual.lambda).cwiseAbs().maxCoeff() <= 1e-9 * std::max(1.0, dual.lambda.cwiseAbs().maxCoeff()));
      CHECK(std::abs(gc.estimate - *dual.estimate) <= 1e-9 * std::max(1.0, std::abs(*dual.estimate)));
    }
  }

  for (int trial = 0; trial < 40; ++trial) {
    auto inst = random_instance(rng, 12, 2);
    const InstrumentSpec z{inst.z, "random", {}};
    const auto closed = instrument_estimate(inst.sample, inst.aux, inst.y, z, inst.target);
    const auto gc = gc_estimate(inst.sample, inst.aux, inst.y, linear_gc_family(z), inst.target);
    CHECK(gc.iterations == 1);
    CHECK(std::abs(gc.estimate - closed.estimate) <= 1e-10 * std::max(1.0, std::abs(closed.estimate)));
    CHECK(equivalence_gap(inst.sample, inst.aux, inst.y, linear_gc_family(z), linear_gc_family(z), inst.target) == 0.0);
  }
}

TEST_CASE("generalized calibration with finite-difference Jacobian") {
  Rng rng(23);
  auto inst = random_instance(rng, 25, 2);
  auto rows = std::make_shared<Matrix>(inst.sample.d.asDiagonal() * inst.aux);
  GCFamily raking;
  raking.f = [rows](Index i, const Vector& l) { return std::exp(rows->row(i).dot(l)); };
  raking.label = "raking";
  const auto problem = make_problem(inst.sample, inst.aux, inst.target, PriorChoice::Poisson);
  const auto fd = gc_estimate(inst.sample, inst.aux, inst.y, raking, inst.target);
  const auto exact = solve_dual(problem);
  CHECK(fd.residual_norm <= 1e-10 * std::max(1.0, inst.target.cwiseAbs().maxCoeff()));
  CHECK(fd.estimate == doctest::Approx(*exact.estimate).epsilon(1e-9));

  const Vector ht_target = ht_mean(inst.sample, inst.aux);
  const auto at_ht = gc_estimate(inst.sample, inst.aux, inst.y, raking, ht_target);
  CHECK(at_ht.lambda.norm() == 0.0);

  GCFamily bad;
  bad.f = [](Index, const Vector& l) { return 2.0 + l.sum(); };
  CHECK_THROWS_AS(gc_estimate(inst.sample, inst.aux, inst.y, bad, inst.target), ArgumentError);
}

TEST_CASE("optimal instruments for the uniform design") {
  const Vector u = (Vector(5) << 2.0, 1.0, 1.0, 1.0, 0.0).finished();
  const auto z = optimal_instruments_uniform(u, 1.0, 5, 2, {0, 3});
  CHECK(z.z(0, 0) == doctest::Approx(1.875).epsilon(1e-15));
  CHECK(z.z(1, 0) == 0.0);
  CHECK(z.warnings.empty());
  const auto census = optimal_instruments_uniform(u, 1.0, 5, 5, {0, 1, 2, 3, 4});
  CHECK(census.z.isZero(0.0));
  CHECK_FALSE(census.warnings.empty());
}

TEST_CASE("optimal and centred instruments both approach the population slope") {
  const Index N = 100000;
  Rng pop_rng(derive_seed(5, 0));
  Matrix x(N, 1);
  Vector y(N);
  for (Index i = 0; i < N; ++i) {
    x(i, 0) = pop_rng.uniform(1.0, 2.0);
    y[i] = std::exp(x(i, 0)) + pop_rng.normal(0.0, std::sqrt(0.1));
  }
  const Population pop(x, y);
  const double mx = pop.aux_mean()[0];
  const double my = pop.y_mean();
  const double slope = ((x.col(0).array() - mx) * (y.array() - my)).sum() / (x.col(0).array() - mx).square().sum();

  std::vector<double> medians_opt, medians_centred;
  for (Index n : {121, 1089}) {
    const auto design = make_uniform_design(N, n);
    std::vector<double> err_opt, err_centred;
    for (std::uint64_t r = 0; r < 60; ++r) {
      const Sample s = draw_sample(design, pop, derive_seed(5, r + 1));
      const auto opt = optimal_instruments_uniform(Vector(x.col(0)), mx, N, n, s.indices);
      const Vector target = pop.aux_mean();
      err_opt.push_back(std::abs(instrument_estimate(s, s.x, *s.y, opt, target).b_hat[0] - slope));
      InstrumentSpec centred{(s.x.array() - ht_mean(s, Vector(s.x.col(0)))).matrix(), "centred", {}};
      err_centred.push_back(std::abs(instrument_estimate(s, s.x, *s.y, centred, target).b_hat[0] - slope));
    }
    medians_opt.push_back(median(err_opt));
    medians_centred.push_back(median(err_centred));
  }
  CHECK(medians_opt[1] < medians_opt[0]);
  CHECK(medians_centred[1] < medians_centred[0]);
  CHECK(medians_opt[1] < 0.05 * slope);
  CHECK(medians_centred[1] < 0.05 * slope);
}

TEST_CASE("dimension reduction preserves the instrument estimate") {
  const Sample s = tiny_sample();
  const Vector t = Vector::Constant(1, 1.25);
  const auto one = reduce_dimension(s, s.x, *s.y, instruments_from_aux(s.x), t);
  const auto full = instrument_estimate(s, s.x, *s.y, instruments_from_aux(s.x), t);
  InstrumentSpec scalar_z{Matrix(one.scalar_instruments), "reduced", {}};
  const auto reduced = instrument_estimate(s, Matrix(one.scalar_aux), *s.y, scalar_z, Vector::Constant(1, one.scalar_target));
  CHECK(reduced.estimate == doctest::Approx(full.estimate).epsilon(1e-14));

  Rng rng(24);
  for (int trial = 0; trial < 200; ++trial) {
    auto inst = random_instance(rng, 10, 3);
    const InstrumentSpec z{inst.z, "random", {}};
    const auto k_dim = instrument_estimate(inst.sample, inst.aux, inst.y, z, inst.target);
    const auto red = reduce_dimension(inst.sample, inst.aux, inst.y, z, inst.target);
    const InstrumentSpec rz{Matrix(red.scalar_instruments), "reduced", {}};
    const auto one_dim = instrument_estimate(inst.sample, Matrix(red.scalar_aux), inst.y, rz,
                                             Vector::Constant(1, red.scalar_target));
    CHECK(std::abs(one_dim.estimate - k_dim.estimate) <= 1e-10 * std::max(1.0, std::abs(k_dim.estimate)));

    // t_y - B' t_x = N^-1 sum d (y - B' x), also with the reduced weights.
    const double n_inv = 1.0 / static_cast<double>(inst.sample.population_size);
    const Vector residual = inst.y - red.scalar_aux;
    const double lhs = k_dim.estimate - red.scalar_target;
    const double rhs = one_dim.weights.dot(residual) * n_inv;
    CHECK(std::abs(lhs - rhs) <= 1e-10 * std::max(1.0, std::abs(lhs)));
    CHECK(std::abs(lhs - inst.sample.d.dot(residual) * n_inv) <= 1e-10 * std::max(1.0, std::abs(lhs)));
  }
}
