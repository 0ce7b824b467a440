#include <cmath>

#include "doctest.h"
#include "memcal/amem.hpp"
#include "memcal/efficiency.hpp"

using namespace memcal;

namespace {

Population model_population(Index N, double sigma2, std::uint64_t seed) {
  const Draws d = draw_pairs(exp_uniform_model(sigma2), N, seed);
  return Population(Matrix(d.x), d.y);
}

double poly(const Vector& c, double x) {
  double v = 0.0;
  for (Index k = c.size() - 1; k >= 0; --k) v = v * x + c[k];
  return v;
}

}  // namespace

TEST_CASE("projection reproduces an exact polynomial") {
  const Population pop = model_population(2000, 0.0, 41);
  Vector y = pop.x().col(0).unaryExpr([](double x) { return 0.5 - 2.0 * x + 0.75 * x * x * x; });
  const Population cubic(pop.x(), y);
  const Sample s = draw_sample(make_uniform_design(2000, 60), cubic, 42);
  const auto proj = fit_projection(s, BasisSpec::monomials(3));
  CHECK((proj.evaluate(Vector(s.x.col(0))) - s.y_values()).cwiseAbs().maxCoeff() < 1e-9);
  const Vector raw = proj.raw_coefficients();
  CHECK(raw[0] == doctest::Approx(0.5).epsilon(1e-8));
  CHECK(raw[1] == doctest::Approx(-2.0).epsilon(1e-8));
  CHECK(std::abs(raw[2]) < 1e-7);
  CHECK(raw[3] == doctest::Approx(0.75).epsilon(1e-8));
}

TEST_CASE("m = 1 projection is the least-squares line through the means") {
  const Population pop = model_population(5000, 1.0, 43);
  const Sample s = draw_sample(make_uniform_design(5000, 80), pop, 44);
  const Vector x = s.x.col(0);
  const Vector y = s.y_values();
  const double xm = x.mean();
  const double ym = y.mean();
  const double slope = ((x.array() - xm) * (y.array() - ym)).sum() / (x.array() - xm).square().sum();

  BasisSpec identity = BasisSpec::custom({[](double v) { return v; }}, "identity");
  const auto proj = fit_projection(s, identity);
  CHECK(proj.b_phi()[0] == doctest::Approx(slope).epsilon(1e-12));
  for (double probe : {1.0, 1.37, 2.0}) {
    CHECK(proj.evaluate(probe) == doctest::Approx(ym + slope * (probe - xm)).epsilon(1e-12));
  }
}

TEST_CASE("degree-6 projection tracks exp on the simulation model") {
  // The fitted values carry noise of mean square sigma^2 (m + 1) / n; the
  // approximation error of exp by a sextic on [1, 2] is negligible.
  const Population pop = model_population(100000, 0.1, 45);
  const auto design = make_uniform_design(100000, 121);
  double mean_square = 0.0;
  const int reps = 200;
  for (std::uint64_t r = 0; r < reps; ++r) {
    const Sample s = draw_sample(design, pop, derive_seed(45, r + 1));
    const auto proj = fit_projection(s, BasisSpec::monomials(6));
    const Vector x = s.x.col(0);
    mean_square += (proj.evaluate(x) - Vector(x.array().exp())).squaredNorm() / 121.0;
  }
  mean_square /= reps;
  CHECK(mean_square == doctest::Approx(0.1 * 7.0 / 121.0).epsilon(0.15));

  const Population noiseless = model_population(100000, 0.0, 54);
  const Sample s = draw_sample(design, noiseless, 55);
  const auto proj = fit_projection(s, BasisSpec::monomials(6));
  const Vector x = s.x.col(0);
  CHECK((proj.evaluate(x) - Vector(x.array().exp())).cwiseAbs().maxCoeff() <= 0.05);
}

TEST_CASE("AMEM identities on random replications") {
  const Population pop = model_population(100000, 1.0, 46);
  const Vector pop_x = pop.x().col(0);
  for (Index m : {1, 3, 6}) {
    const auto design = make_uniform_design(100000, 121);
    for (std::uint64_t r = 0; r < 20; ++r) {
      const Sample s = draw_sample(design, pop, derive_seed(46, r + 1));
      const auto proj = fit_projection(s, BasisSpec::monomials(m));
      const auto a = amem_estimate(proj, pop_x, s);
      CHECK(a.identity_gap <= 1e-9);
      CHECK(a.b_Phi == doctest::Approx(1.0).epsilon(1e-9));
      double direct = 0.0;
      for (Index i = 0; i < pop_x.size(); ++i) direct += proj.evaluate(pop_x[i]);
      CHECK(std::abs(a.estimate - direct / 1e5) <= 1e-9);
    }
  }
}

TEST_CASE("AMEM is invariant to affine re-basing and raw coefficients agree") {
  const Population pop = model_population(20000, 0.5, 47);
  const Vector pop_x = pop.x().col(0);
  const Sample s = draw_sample(make_uniform_design(20000, 200), pop, 48);
  const auto scaled = fit_projection(s, BasisSpec::monomials(3));
  const auto raw = fit_projection(s, BasisSpec::custom({[](double v) { return v; }, [](double v) { return v * v; },
                                                        [](double v) { return v * v * v; }},
                                                       "raw cubic"));
  CHECK(amem_estimate(scaled, pop_x, s).estimate == doctest::Approx(amem_estimate(raw, pop_x, s).estimate).epsilon(1e-9));
  const Vector c = scaled.raw_coefficients();
  for (double probe : {1.0, 1.25, 1.8, 2.0}) {
    CHECK(poly(c, probe) == doctest::Approx(scaled.evaluate(probe)).epsilon(1e-10));
    CHECK(raw.evaluate(probe) == doctest::Approx(scaled.evaluate(probe)).epsilon(1e-8));
  }
  CHECK_THROWS_AS(raw.raw_coefficients(), UnsupportedError);
}

TEST_CASE("AMEM edge cases") {
  // Sample features match the population means exactly.
  const Matrix x = (Matrix(4, 1) << 1.0, 2.0, 1.0, 2.0).finished();
  const Vector y = (Vector(4) << 1.0, 3.0, 5.0, 7.0).finished();
  const Population pop(x, y);
  const auto design = make_uniform_design(4, 2);
  const Sample s = make_sample(design, pop, {0, 1});
  const auto proj = fit_projection(s, BasisSpec::monomials(1));
  CHECK(amem_estimate(proj, Vector(x.col(0)), s).estimate == doctest::Approx(ht_mean(s, s.y_values())));

  const Sample flat = make_sample(design, pop, {0, 2});
  CHECK_THROWS_AS(fit_projection(flat, BasisSpec::monomials(1)), SingularityError);
  CHECK_THROWS_AS(fit_projection(s, BasisSpec::monomials(3)), SingularityError);
  CHECK_THROWS_AS(BasisSpec::monomials(0), ArgumentError);
}

TEST_CASE("projection error decreases along nested monomial bases") {
  const Population pop = model_population(5000, 0.0, 49);
  const Sample census = draw_sample(make_uniform_design(5000, 5000), pop, 1);
  const Vector x = pop.x().col(0);
  const Vector truth = x.array().exp();
  double previous = std::numeric_limits<double>::infinity();
  for (Index m = 1; m <= 6; ++m) {
    const auto proj = fit_projection(census, BasisSpec::monomials(m));
    const Vector err = truth - proj.evaluate(x);
    const double v = (err.array() - err.mean()).square().mean();
    CHECK(v <= previous * (1.0 + 1e-9) + 1e-24);
    previous = v;
  }
  CHECK(previous < 1e-10);
}

TEST_CASE("oracle estimator") {
  const Population pop = model_population(10000, 1.0, 50);
  const Vector pop_x = pop.x().col(0);
  const Sample s = draw_sample(make_uniform_design(10000, 150), pop, 51);
  const double affine = oracle_estimate(s, [](double v) { return 3.0 - 2.0 * v; }, pop_x);
  Matrix aux(s.size(), 2);
  aux << Vector::Ones(s.size()), s.x;
  const auto greg = greg_closed_form(s, aux, (Vector(2) << 1.0, pop_x.mean()).finished(), s.y_values());
  CHECK(affine == doctest::Approx(greg.estimate).epsilon(1e-10));

  const Population noiseless = model_population(10000, 0.0, 52);
  const Sample t = draw_sample(make_uniform_design(10000, 150), noiseless, 53);
  const double exact = oracle_estimate(t, [](double v) { return std::exp(v); }, Vector(noiseless.x().col(0)));
  CHECK(exact == doctest::Approx(noiseless.y_mean()).epsilon(1e-10));
}
