#include <cmath>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "memcal/harness.hpp"

using namespace memcal;

namespace {

SimConfig small_config() {
  SimConfig c;
  c.N = 1000;
  c.n = 121;
  c.reps = 10;
  c.seed = 42;
  return c;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("population generator") {
  SimConfig c;
  c.N = 2000;
  c.sigma2 = 0.0;
  const Population exact = generate_population(c);
  for (Index i = 0; i < exact.size(); ++i) {
    CHECK(exact.x()(i, 0) >= 1.0);
    CHECK(exact.x()(i, 0) <= 2.0);
    CHECK(exact.y()[i] == std::exp(exact.x()(i, 0)));
  }

  c.N = 1000000;
  c.sigma2 = 1.0;
  const Population pop = generate_population(c);
  const Vector y = pop.y();
  const double mean = y.mean();
  const double var = (y.array() - mean).square().sum() / (y.size() - 1.0);
  const double true_mean = 4.67077427;
  const double true_var = 1.78841468 + 1.0;
  CHECK(std::abs(mean - true_mean) < 3.0 * std::sqrt(true_var / 1e6));
  CHECK(std::abs(var - true_var) < 3.0 * std::sqrt(2.0 * true_var * true_var / 1e6));

  c.seed = 43;
  CHECK(generate_population(c).y()[0] != pop.y()[0]);
}

TEST_CASE("estimator resolution") {
  const auto specs = standard_estimators();
  REQUIRE(specs.size() == 6);
  CHECK(specs[0].kind == EstimatorKind::HorvitzThompson);
  CHECK(specs[2].aux == "(1,x)");
  CHECK(specs[4].aux == "(1,exp(x))");
  CHECK(specs[5].aux == "(1,x,...,x^6)");
  const auto mem = resolve_estimator("mem:poisson:1+x");
  CHECK(mem.kind == EstimatorKind::Calibration);
  CHECK(mem.prior == PriorChoice::Poisson);
  CHECK(mem.terms == std::vector<std::string>{"1", "x"});
  CHECK_THROWS_AS(resolve_estimator("t7"), ArgumentError);
  CHECK_THROWS_AS(resolve_estimator("mem:cauchy:x"), ArgumentError);
  CHECK_THROWS_AS(resolve_estimator("mem:gaussian:log(x)"), ArgumentError);
}

TEST_CASE("config validation") {
  SimConfig c = small_config();
  CHECK_NOTHROW(validate(c));
  c.reps = 1;
  CHECK_THROWS_AS(validate(c), ArgumentError);
  c = small_config();
  c.sigma2 = -0.5;
  CHECK_THROWS_AS(validate(c), ArgumentError);
  c = small_config();
  c.n = 2000;
  CHECK_THROWS_AS(validate(c), ArgumentError);
  c = small_config();
  c.estimators = {"t1", "bogus"};
  CHECK_THROWS_AS(validate(c), ArgumentError);
  CHECK_THROWS_AS(config_from_json(R"({"reps": 5, "colour": 1})"), ArgumentError);
  CHECK_THROWS_AS(config_from_json(R"({"reps": "many"})"), ArgumentError);
  const SimConfig parsed = config_from_json(R"({"N": 500, "n": 50, "sigma2": 0.1, "seed": 7})");
  CHECK(parsed.N == 500);
  CHECK(parsed.n == 50);
  CHECK(parsed.sigma2 == 0.1);
  CHECK(parsed.seed == 7);
  CHECK(parsed.reps == SimConfig{}.reps);
}

TEST_CASE("replications do not depend on the thread count") {
  SimConfig c = small_config();
  c.reps = 24;
  c.threads = 1;
  const SimReport serial = run_replications(c);
  for (unsigned t : {2u, 3u, 8u}) {
    c.threads = t;
    const SimReport parallel = run_replications(c);
    CHECK(parallel.estimates == serial.estimates);
    CHECK(report_table(parallel, TableFormat::Json) == report_table(serial, TableFormat::Json));
    CHECK(report_table(parallel, TableFormat::Text) == report_table(serial, TableFormat::Text));
  }
}

TEST_CASE("replication summaries") {
  SimConfig c = small_config();
  c.estimators = {"t1", "t3", "t6", "mem:gaussian:1+x", "mem:poisson:1+x"};
  const SimReport r = run_replications(c);
  REQUIRE(r.rows.size() == 5);
  for (std::size_t e = 0; e < r.rows.size(); ++e) {
    const auto& est = r.estimates[e];
    double mean = 0.0;
    for (double v : est) mean += v;
    mean /= est.size();
    double ss = 0.0;
    for (double v : est) ss += (v - mean) * (v - mean);
    CHECK(r.rows[e].failures == 0);
    CHECK(r.rows[e].mean == doctest::Approx(mean).epsilon(1e-12));
    CHECK(r.rows[e].bias == doctest::Approx(mean - r.t_y).epsilon(1e-9));
    CHECK(r.rows[e].variance == doctest::Approx(ss / (est.size() - 1)).epsilon(1e-9));
  }
  // GREG with (1, x) and Gaussian calibration on (1, x) coincide.
  for (std::size_t k = 0; k < r.estimates[1].size(); ++k) {
    CHECK(r.estimates[1][k] == doctest::Approx(r.estimates[3][k]).epsilon(1e-10));
  }
  CHECK(r.amem_max_identity_gap <= 1e-9);
  CHECK(r.amem_max_bphi_deviation <= 1e-9);
}

TEST_CASE("failures are counted, not fatal") {
  SimConfig c = small_config();
  c.N = 200;
  c.n = 4;
  c.m = 6;
  c.estimators = {"t1", "t6"};
  const SimReport r = run_replications(c);
  CHECK(r.rows[0].failures == 0);
  CHECK(r.rows[1].failures == c.reps);
  CHECK(r.rows[1].first_failure.find("smaller m") != std::string::npos);
  CHECK(std::isnan(r.rows[1].variance));
  const SimReport back = report_from_json(report_table(r, TableFormat::Json));
  CHECK(std::isnan(back.rows[1].variance));
  CHECK(back.rows[1].failures == c.reps);
}

TEST_CASE("fresh populations") {
  SimConfig c = small_config();
  c.fresh_population = true;
  c.estimators = {"t1", "t5"};
  const SimReport r = run_replications(c);
  CHECK(r.t_y_per_rep.front() != r.t_y_per_rep.back());
  c.threads = 4;
  CHECK(run_replications(c).estimates == r.estimates);
}

TEST_CASE("report round trips") {
  const SimReport r = run_replications(small_config());
  const SimReport back = report_from_json(report_table(r, TableFormat::Json));
  CHECK(back.t_y == r.t_y);
  CHECK(back.config.seed == r.config.seed);
  CHECK(back.config.estimators == r.config.estimators);
  REQUIRE(back.rows.size() == r.rows.size());
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    CHECK(back.rows[i].variance == r.rows[i].variance);
    CHECK(back.rows[i].bias == r.rows[i].bias);
    CHECK(back.rows[i].aux == r.rows[i].aux);
  }
  CHECK(report_table(back, TableFormat::Json) == report_table(r, TableFormat::Json));

  const std::string csv = report_table(r, TableFormat::Csv);
  CHECK(csv.rfind("estimator,aux,instrument,variance,bias,failures\n", 0) == 0);
  CHECK(csv.find("\"(1,x)\"") != std::string::npos);
}

TEST_CASE("golden report") {
  const std::string text = report_table(run_replications(small_config()), TableFormat::Text);
  CHECK(text == slurp(MEMCAL_GOLDEN_DIR "/sim_seed42_N1000_reps10.txt"));
}
