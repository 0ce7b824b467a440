#include "memcal/harness.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "memcal/amem.hpp"
#include "memcal/csv.hpp"
#include "memcal/efficiency.hpp"
#include "memcal/instruments.hpp"
#include "memcal/rng.hpp"

namespace memcal {

namespace {

using nlohmann::json;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double term_value(const std::string& term, double x) {
  if (term == "1") return 1.0;
  if (term == "x") return x;
  if (term == "exp(x)") return std::exp(x);
  throw ArgumentError("unknown auxiliary term '" + term + "' (expected 1, x or exp(x))");
}

std::string term_label(const std::vector<std::string>& terms) {
  if (terms.size() == 1) return terms.front();
  std::string out = "(";
  for (std::size_t i = 0; i < terms.size(); ++i) out += (i ? "," : "") + terms[i];
  return out + ")";
}

std::string prior_name(PriorChoice p) {
  switch (p) {
    case PriorChoice::Gaussian: return "gaussian";
    case PriorChoice::Exponential: return "exponential";
    case PriorChoice::Poisson: return "poisson";
  }
  return "gaussian";
}

struct RepResult {
  std::vector<double> estimates;
  std::vector<std::string> errors;
  double t_y = 0.0;
  double amem_gap = 0.0;
  double bphi_dev = 0.0;
};

class Evaluator {
public:
  Evaluator(std::vector<EstimatorSpec> specs, const SimConfig& config)
      : specs_(std::move(specs)), design_(make_uniform_design(config.N, config.n)) {}

  RepResult run(const Population& pop, std::uint64_t sample_seed) const {
    RepResult out;
    out.t_y = pop.y_mean();
    const Sample s = draw_sample(design_, pop, sample_seed);
    const Vector pop_x = pop.x().col(0);
    std::map<std::string, double> term_means;
    for (const auto& spec : specs_) {
      for (const auto& t : spec.terms) {
        if (!term_means.count(t)) {
          double total = 0.0;
          for (Index i = 0; i < pop_x.size(); ++i) total += term_value(t, pop_x[i]);
          term_means[t] = total / static_cast<double>(pop_x.size());
        }
      }
    }
    const Vector& y = s.y_values();
    for (const auto& spec : specs_) {
      try {
        out.estimates.push_back(evaluate(spec, s, y, pop_x, term_means, out));
        out.errors.emplace_back();
      } catch (const std::exception& e) {
        out.estimates.push_back(kNaN);
        out.errors.emplace_back(e.what());
      }
    }
    return out;
  }

private:
  double evaluate(const EstimatorSpec& spec, const Sample& s, const Vector& y, const Vector& pop_x,
                  const std::map<std::string, double>& term_means, RepResult& out) const {
    if (spec.kind == EstimatorKind::HorvitzThompson) return ht_mean(s, y);
    if (spec.kind == EstimatorKind::Amem) {
      const auto proj = fit_projection(s, BasisSpec::monomials(spec.m));
      const auto a = amem_estimate(proj, pop_x, s);
      out.amem_gap = std::max(out.amem_gap, a.identity_gap);
      out.bphi_dev = std::max(out.bphi_dev, std::abs(a.b_Phi - 1.0));
      return a.estimate;
    }
    const auto k = static_cast<Index>(spec.terms.size());
    Matrix aux(s.size(), k);
    Vector target(k);
    for (Index j = 0; j < k; ++j) {
      const auto& t = spec.terms[static_cast<std::size_t>(j)];
      target[j] = term_means.at(t);
      for (Index i = 0; i < s.size(); ++i) aux(i, j) = term_value(t, s.x(i, 0));
    }
    if (spec.kind == EstimatorKind::Instrument) {
      return instrument_estimate(s, aux, y, instruments_from_aux(aux), target).estimate;
    }
    return *solve_dual(make_problem(s, aux, target, spec.prior)).estimate;
  }

  std::vector<EstimatorSpec> specs_;
  SamplingDesign design_;
};

json config_to_json(const SimConfig& c) {
  return json{{"N", c.N},         {"n", c.n},         {"sigma2", c.sigma2},
              {"reps", c.reps},   {"seed", c.seed},   {"estimators", c.estimators},
              {"m", c.m},         {"fresh_population", c.fresh_population}};
}

SimConfig config_from(const json& j) {
  static const std::vector<std::string> known = {"N", "n", "sigma2", "reps", "seed", "estimators",
                                                 "m", "fresh_population", "threads"};
  if (!j.is_object()) throw ArgumentError("simulation config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ArgumentError("unknown simulation config field '" + key + "'");
    }
  }
  SimConfig c;
  try {
    if (j.contains("N")) c.N = j.at("N").get<Index>();
    if (j.contains("n")) c.n = j.at("n").get<Index>();
    if (j.contains("sigma2")) c.sigma2 = j.at("sigma2").get<double>();
    if (j.contains("reps")) c.reps = j.at("reps").get<int>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("estimators")) c.estimators = j.at("estimators").get<std::vector<std::string>>();
    if (j.contains("m")) c.m = j.at("m").get<Index>();
    if (j.contains("fresh_population")) c.fresh_population = j.at("fresh_population").get<bool>();
    if (j.contains("threads")) c.threads = j.at("threads").get<unsigned>();
  } catch (const json::exception& e) {
    throw ArgumentError(std::string("invalid simulation config: ") + e.what());
  }
  return c;
}

double number_or_nan(const json& j) { return j.is_null() ? kNaN : j.get<double>(); }

std::string sci(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6e", v);
  return buf;
}

}  // namespace

std::vector<EstimatorSpec> standard_estimators(Index m) {
  std::vector<EstimatorSpec> out;
  for (const char* name : {"t1", "t2", "t3", "t4", "t5", "t6"}) out.push_back(resolve_estimator(name, m));
  return out;
}

EstimatorSpec resolve_estimator(const std::string& name, Index m) {
  EstimatorSpec spec;
  spec.name = name;
  auto instrument = [&spec](std::vector<std::string> terms) {
    spec.kind = EstimatorKind::Instrument;
    spec.terms = std::move(terms);
    spec.aux = term_label(spec.terms);
    spec.instrument = spec.aux;
  };
  if (name == "t1") {
    spec.aux = "none";
    spec.instrument = "none";
  } else if (name == "t2") {
    instrument({"x"});
  } else if (name == "t3") {
    instrument({"1", "x"});
  } else if (name == "t4") {
    instrument({"exp(x)"});
  } else if (name == "t5") {
    instrument({"1", "exp(x)"});
  } else if (name == "t6") {
    if (m < 1) throw ArgumentError("AMEM basis size m must be at least 1");
    spec.kind = EstimatorKind::Amem;
    spec.m = m;
    spec.aux = m == 1 ? "(1,x)" : "(1,x,...,x^" + std::to_string(m) + ")";
    spec.instrument = spec.aux;
  } else if (name.rfind("mem:", 0) == 0) {
    const auto second = name.find(':', 4);
    if (second == std::string::npos) throw ArgumentError("estimator '" + name + "' must look like mem:<prior>:<terms>");
    const std::string prior = name.substr(4, second - 4);
    if (prior == "gaussian") spec.prior = PriorChoice::Gaussian;
    else if (prior == "exponential") spec.prior = PriorChoice::Exponential;
    else if (prior == "poisson") spec.prior = PriorChoice::Poisson;
    else throw ArgumentError("unknown prior '" + prior + "' in estimator '" + name + "'");
    std::stringstream terms(name.substr(second + 1));
    std::string term;
    while (std::getline(terms, term, '+')) {
      term_value(term, 1.0);
      spec.terms.push_back(term);
    }
    if (spec.terms.empty()) throw ArgumentError("estimator '" + name + "' has no auxiliary terms");
    spec.kind = EstimatorKind::Calibration;
    spec.aux = term_label(spec.terms);
    spec.instrument = "mem:" + prior_name(spec.prior);
  } else {
    throw ArgumentError("unknown estimator '" + name + "'");
  }
  return spec;
}

void validate(const SimConfig& c) {
  if (c.N < 1) throw ArgumentError("N must be positive");
  if (c.n < 1 || c.n > c.N) throw ArgumentError("need 1 <= n <= N");
  if (c.reps < 2) throw ArgumentError("reps must be at least 2");
  if (!(c.sigma2 >= 0.0) || !std::isfinite(c.sigma2)) throw ArgumentError("sigma2 must be a nonnegative number");
  if (c.m < 1) throw ArgumentError("m must be at least 1");
  if (c.estimators.empty()) throw ArgumentError("no estimators requested");
  for (const auto& e : c.estimators) resolve_estimator(e, c.m);
}

Population generate_population(const SimConfig& config) {
  if (!(config.sigma2 >= 0.0)) throw ArgumentError("sigma2 must be nonnegative");
  if (config.N < 1) throw ArgumentError("N must be positive");
  const Draws d = draw_pairs(exp_uniform_model(config.sigma2), config.N, derive_seed(config.seed, 0));
  return Population(Matrix(d.x), d.y);
}

SimReport run_replications(const SimConfig& config) {
  validate(config);
  std::vector<EstimatorSpec> specs;
  for (const auto& e : config.estimators) specs.push_back(resolve_estimator(e, config.m));
  const Evaluator evaluator(specs, config);
  std::optional<Population> fixed;
  if (!config.fresh_population) fixed = generate_population(config);

  const auto reps = static_cast<std::size_t>(config.reps);
  std::vector<RepResult> results(reps);
  std::atomic<std::size_t> next{0};
  std::exception_ptr fatal;
  std::mutex fatal_mutex;
  auto worker = [&]() {
    try {
      for (std::size_t r = next++; r < reps; r = next++) {
        const std::uint64_t rep_seed = derive_seed(config.seed, r + 1);
        if (fixed) {
          results[r] = evaluator.run(*fixed, rep_seed);
        } else {
          SimConfig per_rep = config;
          per_rep.seed = rep_seed;
          results[r] = evaluator.run(generate_population(per_rep), derive_seed(rep_seed, 1));
        }
      }
    } catch (...) {
      std::lock_guard<std::mutex> lock(fatal_mutex);
      if (!fatal) fatal = std::current_exception();
      next = reps;
    }
  };
  unsigned threads = config.threads ? config.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, reps));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (fatal) std::rethrow_exception(fatal);

  SimReport report;
  report.config = config;
  double t_y_total = 0.0;
  for (const auto& r : results) {
    report.t_y_per_rep.push_back(r.t_y);
    t_y_total += r.t_y;
    report.amem_max_identity_gap = std::max(report.amem_max_identity_gap, r.amem_gap);
    report.amem_max_bphi_deviation = std::max(report.amem_max_bphi_deviation, r.bphi_dev);
  }
  report.t_y = fixed ? fixed->y_mean() : t_y_total / static_cast<double>(reps);

  for (std::size_t e = 0; e < specs.size(); ++e) {
    EstimatorSummary row;
    row.estimator = specs[e].name;
    row.aux = specs[e].aux;
    row.instrument = specs[e].instrument;
    std::vector<double> estimates(reps);
    double sum_est = 0.0;
    double sum_err = 0.0;
    int ok = 0;
    for (std::size_t r = 0; r < reps; ++r) {
      estimates[r] = results[r].estimates[e];
      if (std::isnan(estimates[r])) {
        if (row.failures++ == 0) row.first_failure = results[r].errors[e];
        continue;
      }
      sum_est += estimates[r];
      sum_err += estimates[r] - results[r].t_y;
      ++ok;
    }
    row.mean = ok ? sum_est / ok : kNaN;
    row.bias = ok ? sum_err / ok : kNaN;
    double ss = 0.0;
    for (std::size_t r = 0; r < reps; ++r) {
      if (std::isnan(estimates[r])) continue;
      const double dev = estimates[r] - results[r].t_y - row.bias;
      ss += dev * dev;
    }
    row.variance = ok >= 2 ? ss / (ok - 1) : kNaN;
    report.rows.push_back(row);
    report.estimates.push_back(std::move(estimates));
  }
  return report;
}

std::string report_table(const SimReport& report, TableFormat format) {
  const SimConfig& c = report.config;
  if (format == TableFormat::Json) {
    json rows = json::array();
    for (const auto& r : report.rows) {
      rows.push_back(json{{"estimator", r.estimator},
                          {"aux", r.aux},
                          {"instrument", r.instrument},
                          {"variance", r.variance},
                          {"bias", r.bias},
                          {"failures", r.failures},
                          {"mean", r.mean},
                          {"first_failure", r.first_failure}});
    }
    json j{{"config", config_to_json(c)},
           {"t_y", report.t_y},
           {"rows", rows},
           {"amem_max_identity_gap", report.amem_max_identity_gap},
           {"amem_max_bphi_deviation", report.amem_max_bphi_deviation}};
    return j.dump(2) + "\n";
  }
  if (format == TableFormat::Csv) {
    std::string out = "estimator,aux,instrument,variance,bias,failures\n";
    for (const auto& r : report.rows) {
      out += csv::join({r.estimator, r.aux, r.instrument, csv::format(r.variance), csv::format(r.bias),
                        std::to_string(r.failures)}) +
             "\n";
    }
    return out;
  }
  std::ostringstream out;
  out << "# N=" << c.N << " n=" << c.n << " sigma2=" << csv::format(c.sigma2) << " reps=" << c.reps
      << " seed=" << c.seed << " m=" << c.m << " population=" << (c.fresh_population ? "fresh" : "fixed") << "\n";
  out << "# t_y=" << sci(report.t_y) << "\n";
  char line[256];
  std::snprintf(line, sizeof(line), "%-10s %-18s %-18s %14s %14s %8s\n", "estimator", "aux", "instrument", "variance",
                "bias", "failures");
  out << line;
  for (const auto& r : report.rows) {
    std::snprintf(line, sizeof(line), "%-10s %-18s %-18s %14s %14s %8d\n", r.estimator.c_str(), r.aux.c_str(),
                  r.instrument.c_str(), sci(r.variance).c_str(), sci(r.bias).c_str(), r.failures);
    out << line;
  }
  return out.str();
}

SimReport report_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ArgumentError(std::string("invalid report JSON: ") + e.what());
  }
  SimReport report;
  report.config = config_from(j.at("config"));
  report.t_y = j.at("t_y").get<double>();
  report.amem_max_identity_gap = j.at("amem_max_identity_gap").get<double>();
  report.amem_max_bphi_deviation = j.at("amem_max_bphi_deviation").get<double>();
  for (const auto& r : j.at("rows")) {
    EstimatorSummary row;
    row.estimator = r.at("estimator").get<std::string>();
    row.aux = r.at("aux").get<std::string>();
    row.instrument = r.at("instrument").get<std::string>();
    row.variance = number_or_nan(r.at("variance"));
    row.bias = number_or_nan(r.at("bias"));
    row.mean = number_or_nan(r.at("mean"));
    row.failures = r.at("failures").get<int>();
    row.first_failure = r.at("first_failure").get<std::string>();
    report.rows.push_back(row);
  }
  return report;
}

SimConfig config_from_json(const std::string& text) {
  try {
    return config_from(json::parse(text));
  } catch (const json::parse_error& e) {
    throw ArgumentError(std::string("invalid simulation config JSON: ") + e.what());
  }
}

}  // namespace memcal
