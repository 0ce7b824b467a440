#include <cmath>
#include <limits>
#include <map>

#include "doctest.h"
#include "memcal/design.hpp"
#include "memcal/errors.hpp"
#include "memcal/rng.hpp"

using namespace memcal;

namespace {

Population line_population(Index N) {
  Matrix x(N, 1);
  Vector y(N);
  for (Index i = 0; i < N; ++i) {
    x(i, 0) = static_cast<double>(i + 1);
    y[i] = std::sin(static_cast<double>(i)) + 0.3 * static_cast<double>(i);
  }
  return Population(x, y);
}

double delta_total(const SamplingDesign& design) {
  double total = 0.0;
  for (Index i = 0; i < design.population_size(); ++i)
    for (Index j = 0; j < design.population_size(); ++j) total += delta(design, i, j);
  return total;
}

}  // namespace

TEST_CASE("uniform design inclusion probabilities") {
  CHECK(make_uniform_design(100000, 121).pi(0) == doctest::Approx(0.00121).epsilon(1e-15));
  const auto census = make_uniform_design(5, 5);
  for (Index i = 0; i < 5; ++i) CHECK(census.pi(i) == 1.0);
  const auto small = make_uniform_design(5, 2);
  CHECK(small.joint(0, 3) == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(small.joint(2, 2) == doctest::Approx(0.4));
  CHECK_THROWS_AS(make_uniform_design(5, 6), ArgumentError);
  CHECK_THROWS_AS(make_uniform_design(5, 0), ArgumentError);
}

TEST_CASE("delta kernel for the uniform design") {
  const auto design = make_uniform_design(5, 2);
  CHECK(delta(design, 1, 1) == doctest::Approx(1.5).epsilon(1e-14));
  CHECK(delta(design, 0, 4) == doctest::Approx(-0.375).epsilon(1e-14));
  const auto census = make_uniform_design(5, 5);
  for (Index i = 0; i < 5; ++i)
    for (Index j = 0; j < 5; ++j) CHECK(std::abs(delta(census, i, j)) < 1e-15);
}

TEST_CASE("draw_sample edge cases and determinism") {
  const auto pop = line_population(5);
  const Sample census = draw_sample(make_uniform_design(5, 5), pop, 123);
  CHECK(census.indices == std::vector<Index>{0, 1, 2, 3, 4});
  CHECK(census.d.isApproxToConstant(1.0));

  const auto design = make_uniform_design(5, 2);
  const Sample a = draw_sample(design, pop, 7);
  const Sample b = draw_sample(design, pop, 7);
  CHECK(a.indices == b.indices);
  CHECK(a.size() == 2);
  CHECK(a.indices[0] != a.indices[1]);
  CHECK(a.d.isApproxToConstant(2.5));
  CHECK(a.x(0, 0) == static_cast<double>(a.indices[0] + 1));

  CHECK_THROWS_AS(draw_sample(design, line_population(6), 1), ArgumentError);
}

TEST_CASE("SRSWOR draws are uniform over all pairs") {
  const auto design = make_uniform_design(4, 2);
  std::map<std::vector<Index>, int> counts;
  const int draws = 200000;
  for (int s = 0; s < draws; ++s) counts[draw_indices(design, derive_seed(2024, static_cast<std::uint64_t>(s)))]++;
  CHECK(counts.size() == 6);
  for (const auto& [pair, count] : counts) {
    CHECK(std::abs(static_cast<double>(count) / draws - 1.0 / 6.0) < 0.005);
  }
}

TEST_CASE("enumeration of small uniform designs") {
  const auto design = make_uniform_design(4, 2);
  const auto samples = enumerate_design(design);
  REQUIRE(samples.size() == 6);
  double containing_first = 0.0;
  for (const auto& s : samples) {
    CHECK(s.probability == doctest::Approx(1.0 / 6.0));
    if (s.indices.front() == 0) containing_first += s.probability;
  }
  CHECK(containing_first == doctest::Approx(0.5).epsilon(1e-12));

  const auto five_two = make_uniform_design(5, 2);
  double diag = 0.0;
  double off = 0.0;
  for (Index i = 0; i < 5; ++i)
    for (Index j = 0; j < 5; ++j) (i == j ? diag : off) += delta(five_two, i, j);
  CHECK(diag == doctest::Approx(7.5));
  CHECK(off == doctest::Approx(-7.5));
  CHECK(std::abs(diag + off) < 1e-12);

  CHECK_THROWS_AS(enumerate_design(make_uniform_design(40, 20)), SizeError);
}

TEST_CASE("enumerable designs: HT unbiasedness, pi recovery and Delta sums") {
  const Vector user_pi = (Vector(6) << 0.2, 0.5, 0.9, 0.4, 0.7, 0.3).finished();
  std::vector<SamplingDesign> designs;
  for (Index N = 1; N <= 8; ++N)
    for (Index n = 1; n <= N; ++n) designs.push_back(make_uniform_design(N, n));
  designs.push_back(make_user_design(user_pi));

  for (const auto& design : designs) {
    const Index N = design.population_size();
    const auto pop = line_population(N);
    const auto samples = enumerate_design(design);
    double total_p = 0.0;
    double expected_ht = 0.0;
    Vector recovered = Vector::Zero(N);
    for (const auto& s : samples) {
      total_p += s.probability;
      const Sample sample = make_sample(design, pop, s.indices);
      expected_ht += s.probability * ht_mean(sample, sample.y_values());
      for (Index i : s.indices) recovered[i] += s.probability;
    }
    CHECK(std::abs(total_p - 1.0) < 1e-12);
    CHECK(std::abs(expected_ht - pop.y_mean()) < 1e-12);
    CHECK((recovered - design.pi_vector()).cwiseAbs().maxCoeff() < 1e-12);

    const auto with_joint = design.kind() == DesignKind::UniformSRSWOR
                                ? design
                                : make_user_design(design.pi_vector(), joint_from_enumeration(N, samples));
    CHECK(delta_total(with_joint) >= -1e-12);
  }
}

TEST_CASE("uniform design satisfies n N^-2 sum Delta_ii = 1 - n/N") {
  for (auto [N, n] : {std::pair<Index, Index>{5, 2}, {8, 3}, {1000, 37}, {100000, 121}}) {
    const auto design = make_uniform_design(N, n);
    const double scaled = static_cast<double>(n) / (static_cast<double>(N) * static_cast<double>(N)) *
                          static_cast<double>(N) * delta(design, 0, 0);
    CHECK(scaled == doctest::Approx(1.0 - static_cast<double>(n) / static_cast<double>(N)).epsilon(1e-14));
  }
}

TEST_CASE("user-specified designs") {
  CHECK_THROWS_AS(make_user_design((Vector(3) << 0.5, 0.0, 0.5).finished()), ArgumentError);
  CHECK_THROWS_AS(make_user_design((Vector(3) << 0.5, 1.2, 0.3).finished()), ArgumentError);
  CHECK_THROWS_AS(make_user_design((Vector(3) << 0.5, 0.4, 0.3).finished()), ArgumentError);

  const auto design = make_user_design((Vector(4) << 0.5, 0.5, 0.25, 0.75).finished());
  CHECK(design.sample_size() == 2);
  CHECK_FALSE(design.has_joint());
  CHECK_THROWS_AS(delta(design, 0, 1), UnsupportedError);
  CHECK(delta(design, 2, 2) == doctest::Approx(3.0));

  const auto pop = line_population(4);
  for (std::uint64_t seed = 0; seed < 50; ++seed) CHECK(draw_sample(design, pop, seed).size() == 2);

  const Matrix joint = joint_from_enumeration(4, enumerate_design(design));
  const auto tabulated = make_user_design(design.pi_vector(), joint);
  CHECK(tabulated.has_joint());
  CHECK(tabulated.joint(0, 1) == doctest::Approx(joint(0, 1)));
}

TEST_CASE("population and sample validation") {
  Matrix bad(2, 1);
  bad << 1.0, std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(Population{bad}, ArgumentError);
  CHECK_THROWS_AS(Population(Matrix::Ones(3, 1), Vector::Ones(2)), ArgumentError);
  CHECK_THROWS_AS(Sample::from_rows({1, 1}, Vector::Constant(2, 0.5), Matrix::Ones(2, 1), std::nullopt, 4),
                  ArgumentError);
  CHECK_THROWS_AS(Sample::from_rows({1, 2}, (Vector(2) << 0.5, 0.0).finished(), Matrix::Ones(2, 1), std::nullopt, 4),
                  ArgumentError);
}
