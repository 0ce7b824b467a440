#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "memcal/calibrate.hpp"
#include "memcal/design.hpp"

namespace memcal {

enum class EstimatorKind { HorvitzThompson, Instrument, Calibration, Amem };

/// One estimator of the simulation table. Auxiliary terms are functions of
/// the scalar x: "1", "x" or "exp(x)"; instrument estimators use the
/// auxiliaries themselves as instruments.
struct EstimatorSpec {
  std::string name;
  std::string aux;
  std::string instrument;
  EstimatorKind kind = EstimatorKind::HorvitzThompson;
  std::vector<std::string> terms;
  PriorChoice prior = PriorChoice::Gaussian;  // Calibration only
  Index m = 6;                                // Amem only
};

/// t1 (HT), t2 (x), t3 (1,x), t4 exp(x), t5 (1,exp(x)), t6 (AMEM, monomials).
std::vector<EstimatorSpec> standard_estimators(Index m = 6);

/// Resolves "t1".."t6" or "mem:<gaussian|exponential|poisson>:<term>[+<term>...]".
EstimatorSpec resolve_estimator(const std::string& name, Index m = 6);

struct SimConfig {
  Index N = 100000;
  Index n = 121;
  double sigma2 = 1.0;
  int reps = 50;
  std::uint64_t seed = 42;
  std::vector<std::string> estimators = {"t1", "t2", "t3", "t4", "t5", "t6"};
  Index m = 6;
  bool fresh_population = false;
  /// 0 means one worker per hardware thread.
  unsigned threads = 0;
};

/// Throws ArgumentError for invalid fields.
void validate(const SimConfig& config);

/// N draws of X ~ U[1, 2], Y = exp(X) + N(0, sigma2) seeded by
/// derive_seed(seed, 0).
Population generate_population(const SimConfig& config);

struct EstimatorSummary {
  std::string estimator;
  std::string aux;
  std::string instrument;
  double mean = 0.0;
  /// Unbiased variance over replications of the error t_hat - t_y.
  double variance = 0.0;
  double bias = 0.0;
  int failures = 0;
  std::string first_failure;
};

struct SimReport {
  SimConfig config;
  double t_y = 0.0;
  std::vector<EstimatorSummary> rows;
  /// Largest AMEM identity gap and |B_Phi - 1| over all replications.
  double amem_max_identity_gap = 0.0;
  double amem_max_bphi_deviation = 0.0;
  /// Per-replication estimates, estimator-major; NaN marks a failure.
  std::vector<std::vector<double>> estimates;
  std::vector<double> t_y_per_rep;
};

/// Fixed population (unless fresh_population), one sample per replication
/// seeded by derive_seed(seed, r + 1), every estimator evaluated on the same
/// sample. Results do not depend on the number of threads.
SimReport run_replications(const SimConfig& config);

enum class TableFormat { Text, Json, Csv };

std::string report_table(const SimReport& report, TableFormat format);

/// Inverse of the JSON form of report_table (per-replication data excluded).
SimReport report_from_json(const std::string& text);
SimConfig config_from_json(const std::string& text);

}  // namespace memcal
