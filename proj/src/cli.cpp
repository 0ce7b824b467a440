#include "memcal/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "memcal/amem.hpp"
#include "memcal/calibrate.hpp"
#include "memcal/csv.hpp"
#include "memcal/efficiency.hpp"
#include "memcal/harness.hpp"
#include "memcal/instruments.hpp"

namespace memcal {

namespace {

using nlohmann::json;

json to_json(const Vector& v) {
  json out = json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

std::string join_names(const std::vector<std::string>& names) {
  std::string out;
  for (std::size_t i = 0; i < names.size(); ++i) out += (i ? "," : "") + names[i];
  return out;
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, sep)) parts.push_back(trim(part));
  if (!text.empty() && text.back() == sep) parts.emplace_back();
  return parts;
}

double parse_double(const std::string& text, const std::string& what) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size() || !std::isfinite(v)) {
    throw ArgumentError(what + " expects a finite number, got '" + text + "'");
  }
  return v;
}

Index parse_index(const std::string& text, const std::string& what) {
  const double v = parse_double(text, what);
  if (v != std::floor(v) || v < 0 || v > 9e15) throw ArgumentError(what + " expects a nonnegative integer, got '" + text + "'");
  return static_cast<Index>(v);
}

void write_output(const std::string& path, const std::string& data, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << data;
    return;
  }
  const std::filesystem::path target(path);
  std::filesystem::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream file(tmp, std::ios::binary | std::ios::trunc);
    if (!file) throw ArgumentError("cannot open '" + tmp.string() + "' for writing");
    file << data;
    file.flush();
    if (!file) {
      std::filesystem::remove(tmp);
      throw ArgumentError("failed writing '" + tmp.string() + "'");
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, target, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw ArgumentError("cannot move output into '" + path + "': " + ec.message());
  }
}

struct SampleData {
  Sample sample;
  std::vector<std::string> aux_names;
  std::optional<Vector> q;
};

/// Sample CSV: id,pi,<aux columns...>[,y]; an optional weight column for
/// the Gaussian prior is set aside by name.
SampleData load_sample(const std::string& path, Index population_size, const std::string& q_column = "") {
  const csv::Table t = csv::read_file(path);
  if (t.header.size() < 2 || t.header[0] != "id" || t.header[1] != "pi") {
    throw ArgumentError(path + ": expected header id,pi,x1,...,xk[,y] but found " + join_names(t.header));
  }
  if (t.rows.empty()) throw ArgumentError(path + ": sample has no rows");
  std::optional<std::size_t> y_col;
  std::optional<std::size_t> q_col;
  std::vector<std::size_t> aux_cols;
  SampleData data;
  for (std::size_t c = 2; c < t.header.size(); ++c) {
    if (t.header[c] == "y") {
      y_col = c;
    } else if (!q_column.empty() && t.header[c] == q_column) {
      q_col = c;
    } else {
      aux_cols.push_back(c);
      data.aux_names.push_back(t.header[c]);
    }
  }
  if (!q_column.empty() && !q_col) throw ArgumentError(path + ": no column named '" + q_column + "' for the prior weights");
  const auto n = static_cast<Index>(t.rows.size());
  std::vector<std::int64_t> ids;
  Vector pi(n);
  Matrix x(n, static_cast<Index>(aux_cols.size()));
  std::optional<Vector> y;
  if (y_col) y = Vector(n);
  if (q_col) data.q = Vector(n);
  for (Index i = 0; i < n; ++i) {
    const auto& row = t.rows[static_cast<std::size_t>(i)];
    ids.push_back(csv::to_integer(t, row, 0));
    pi[i] = csv::to_double(t, row, 1);
    if (!(pi[i] > 0.0 && pi[i] <= 1.0)) {
      throw ArgumentError(path + ":" + std::to_string(row.line) + ": column 'pi' is " + row.fields[1] +
                          "; inclusion probabilities must satisfy 0 < pi_i <= 1 (pi_i strictly positive)");
    }
    for (std::size_t j = 0; j < aux_cols.size(); ++j) x(i, static_cast<Index>(j)) = csv::to_double(t, row, aux_cols[j]);
    if (y_col) (*y)[i] = csv::to_double(t, row, *y_col);
    if (q_col) (*data.q)[i] = csv::to_double(t, row, *q_col);
  }
  if (population_size < n) {
    throw ArgumentError("population size " + std::to_string(population_size) + " is smaller than the sample size " +
                        std::to_string(n));
  }
  data.sample = Sample::from_rows(std::move(ids), std::move(pi), std::move(x), std::move(y), population_size);
  return data;
}

/// Population CSV: id,<aux columns...>[,y].
Population load_population(const std::string& path) {
  const csv::Table t = csv::read_file(path);
  if (t.header.empty() || t.header[0] != "id") {
    throw ArgumentError(path + ": expected header id,x1,...,xk[,y] but found " + join_names(t.header));
  }
  if (t.rows.empty()) throw ArgumentError(path + ": population has no rows");
  std::optional<std::size_t> y_col;
  std::vector<std::size_t> aux_cols;
  std::vector<std::string> names;
  for (std::size_t c = 1; c < t.header.size(); ++c) {
    if (t.header[c] == "y") {
      y_col = c;
    } else {
      aux_cols.push_back(c);
      names.push_back(t.header[c]);
    }
  }
  if (aux_cols.empty()) throw ArgumentError(path + ": population needs at least one auxiliary column");
  const auto N = static_cast<Index>(t.rows.size());
  Matrix x(N, static_cast<Index>(aux_cols.size()));
  std::optional<Vector> y;
  if (y_col) y = Vector(N);
  std::vector<std::int64_t> ids;
  for (Index i = 0; i < N; ++i) {
    const auto& row = t.rows[static_cast<std::size_t>(i)];
    ids.push_back(csv::to_integer(t, row, 0));
    for (std::size_t j = 0; j < aux_cols.size(); ++j) x(i, static_cast<Index>(j)) = csv::to_double(t, row, aux_cols[j]);
    if (y_col) (*y)[i] = csv::to_double(t, row, *y_col);
  }
  return Population(std::move(x), std::move(y), std::move(ids), std::move(names));
}

/// Design CSV: id,pi.
SamplingDesign load_design(const std::string& path) {
  const csv::Table t = csv::read_file(path);
  if (t.header != std::vector<std::string>{"id", "pi"}) {
    throw ArgumentError(path + ": expected header id,pi but found " + join_names(t.header));
  }
  Vector pi(static_cast<Index>(t.rows.size()));
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    pi[static_cast<Index>(i)] = csv::to_double(t, t.rows[i], 1);
    if (!(pi[static_cast<Index>(i)] > 0.0)) {
      throw ArgumentError(path + ":" + std::to_string(t.rows[i].line) + ": pi_i strictly positive is required, got " +
                          t.rows[i].fields[1]);
    }
  }
  return make_user_design(std::move(pi));
}

struct DesignSpec {
  Index N = 0;
  Index n = 0;
};

DesignSpec parse_uniform_design(const std::string& text) {
  const std::string prefix = "uniform:";
  if (text.rfind(prefix, 0) != 0) throw ArgumentError("--design expects uniform:N,n, got '" + text + "'");
  const auto parts = split(text.substr(prefix.size()), ',');
  if (parts.size() != 2) throw ArgumentError("--design expects uniform:N,n, got '" + text + "'");
  DesignSpec d{parse_index(parts[0], "--design N"), parse_index(parts[1], "--design n")};
  if (d.n < 1 || d.n > d.N) throw ArgumentError("--design needs 1 <= n <= N");
  return d;
}

struct PriorSpec {
  PriorChoice choice = PriorChoice::Gaussian;
  std::string q_column;
  std::string name = "gaussian";
};

PriorSpec parse_prior(const std::string& text) {
  PriorSpec p;
  const auto colon = text.find(':');
  p.name = text.substr(0, colon);
  if (p.name == "gaussian") {
    p.choice = PriorChoice::Gaussian;
    if (colon != std::string::npos) {
      p.q_column = text.substr(colon + 1);
      if (p.q_column.empty()) throw ArgumentError("--prior gaussian: needs a column name after the colon");
    }
    return p;
  }
  if (colon != std::string::npos) throw ArgumentError("--prior " + p.name + " takes no column");
  if (p.name == "exponential") p.choice = PriorChoice::Exponential;
  else if (p.name == "poisson") p.choice = PriorChoice::Poisson;
  else throw ArgumentError("unknown prior '" + text + "' (expected gaussian[:q_column], exponential or poisson)");
  return p;
}

/// Common inputs of the sample-based subcommands.
struct SampleInputs {
  std::string sample_path;
  std::string population_path;
  Index population_size = 0;
  std::string target;
  std::string target_file;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--sample", sample_path, "Sample CSV: id,pi,x1,...,xk[,y]")->required();
    cmd->add_option("--population", population_path,
                    "Population CSV id,x1,...,xk[,y]; gives N and, by default, the target means");
    cmd->add_option("--population-size", population_size, "Population size N when no population file is given");
    cmd->add_option("--target", target, "Population means t_x, comma separated (e.g. 1.25,0.5)");
    cmd->add_option("--target-file", target_file, "One-row CSV of population means with the aux column names");
  }

  std::optional<Population> population() const {
    if (population_path.empty()) return std::nullopt;
    return load_population(population_path);
  }

  Index resolve_size(const std::optional<Population>& pop) const {
    if (pop && population_size != 0 && population_size != pop->size()) {
      throw ArgumentError("--population-size " + std::to_string(population_size) + " conflicts with the " +
                          std::to_string(pop->size()) + " rows of " + population_path);
    }
    if (pop) return pop->size();
    if (population_size < 1) throw ArgumentError("give --population or --population-size");
    return population_size;
  }

  Vector resolve_target(const std::vector<std::string>& names, const std::optional<Population>& pop) const {
    const auto k = names.size();
    if (!target.empty() && !target_file.empty()) {
      throw ArgumentError("give the target inline (--target) or as a file (--target-file), not both");
    }
    std::vector<double> values;
    if (!target.empty()) {
      for (const auto& part : split(target, ',')) values.push_back(parse_double(part, "--target"));
    } else if (!target_file.empty()) {
      const csv::Table t = csv::read_file(target_file);
      if (t.rows.size() != 1) throw ArgumentError(target_file + ": target file must contain exactly one data row");
      if (t.header != names) {
        throw ArgumentError(target_file + ": target columns " + join_names(t.header) +
                            " do not match the sample auxiliary columns " + join_names(names));
      }
      for (std::size_t j = 0; j < t.header.size(); ++j) values.push_back(csv::to_double(t, t.rows[0], j));
    } else if (pop) {
      if (pop->aux_names() != names) {
        throw ArgumentError("population columns " + join_names(pop->aux_names()) +
                            " do not match the sample auxiliary columns " + join_names(names));
      }
      const Vector m = pop->aux_mean();
      values.assign(m.data(), m.data() + m.size());
    } else {
      throw ArgumentError("no calibration target: give --target, --target-file or --population");
    }
    if (values.size() != k) {
      throw ArgumentError("dimension mismatch: target has " + std::to_string(values.size()) + " values but the sample has " +
                          std::to_string(k) + " auxiliary columns (" + join_names(names) + ")");
    }
    return Eigen::Map<const Vector>(values.data(), static_cast<Index>(k));
  }
};

struct SolverFlags {
  double tol = 0.0;
  int max_iter = 100;
  double ridge = 1e-12;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--tol", tol, "Convergence tolerance on the calibration residual (0: automatic)");
    cmd->add_option("--max-iter", max_iter, "Maximum Newton iterations")->check(CLI::PositiveNumber);
    cmd->add_option("--ridge", ridge, "Ridge factor used when the Hessian is not positive definite")
        ->check(CLI::NonNegativeNumber);
  }

  SolverOptions options() const {
    SolverOptions o;
    o.tol = tol;
    o.max_iter = max_iter;
    o.ridge = ridge;
    return o;
  }
};

std::string solution_csv(const Sample& s, const Vector& w) {
  std::string out = "id,d,w,pi_w\n";
  for (Index i = 0; i < s.size(); ++i) {
    out += std::to_string(s.ids[static_cast<std::size_t>(i)]) + "," + csv::format(s.d[i]) + "," + csv::format(w[i]) +
           "," + csv::format(s.pi[i] * w[i]) + "\n";
  }
  return out;
}

/// Shared state for one invocation: diagnostics collected for --diag.
struct Context {
  std::ostream& out;
  std::ostream& err;
  bool diag = false;
  json diagnostics = json::object();
};

CalibrationProblem build_problem(const SampleData& data, const Vector& target, const PriorSpec& prior) {
  if (data.aux_names.empty()) throw ArgumentError("sample has no auxiliary columns");
  return make_problem(data.sample, data.sample.x, target, prior.choice, data.q);
}

CalibrationSolution solve_with_report(const CalibrationProblem& problem, const SolverOptions& options, Context& ctx) {
  try {
    return solve_dual(problem, options);
  } catch (const InfeasibleError&) {
    const FeasibilityReport f = check_feasibility(problem);
    ctx.diagnostics["feasibility"] = {{"feasible", f.feasible}, {"method", f.method}, {"message", f.message}};
    throw;
  } catch (const SolverError& e) {
    json trace = json::array();
    for (const auto& r : e.trace()) {
      trace.push_back({{"iteration", r.iteration}, {"objective", r.objective}, {"residual_norm", r.residual_norm},
                       {"step", r.step}});
    }
    ctx.diagnostics["trace"] = trace;
    throw;
  }
}

void record_solution(const CalibrationSolution& sol, Context& ctx) {
  ctx.diagnostics["lambda"] = to_json(sol.lambda);
  ctx.diagnostics["iterations"] = sol.iterations;
  ctx.diagnostics["grad_norm"] = sol.grad_norm;
  ctx.diagnostics["dissimilarity"] = sol.dissimilarity_value;
  ctx.diagnostics["warnings"] = sol.warnings;
}

// calibrate --------------------------------------------------------------

struct CalibrateCmd {
  SampleInputs inputs;
  SolverFlags solver;
  std::string prior = "gaussian";
  std::string out_path;

  void add_to(CLI::App* cmd) {
    inputs.add_to(cmd);
    solver.add_to(cmd);
    cmd->add_option("--prior", prior, "gaussian[:q_column] | exponential | poisson")->capture_default_str();
    cmd->add_option("--out", out_path, "Solution CSV id,d,w,pi_w (default: stdout)");
  }

  int run(Context& ctx) const {
    const PriorSpec p = parse_prior(prior);
    const auto pop = inputs.population();
    const SampleData data = load_sample(inputs.sample_path, inputs.resolve_size(pop), p.q_column);
    const auto problem = build_problem(data, inputs.resolve_target(data.aux_names, pop), p);
    const auto sol = solve_with_report(problem, solver.options(), ctx);
    record_solution(sol, ctx);
    if (sol.estimate) ctx.diagnostics["estimate"] = *sol.estimate;
    write_output(out_path, solution_csv(data.sample, sol.weights), ctx.out);
    return kExitOk;
  }
};

// estimate ---------------------------------------------------------------

struct EstimateCmd {
  SampleInputs inputs;
  SolverFlags solver;
  std::string prior = "gaussian";
  std::string method = "mem";
  std::string out_path;

  void add_to(CLI::App* cmd) {
    inputs.add_to(cmd);
    solver.add_to(cmd);
    cmd->add_option("--prior", prior, "gaussian[:q_column] | exponential | poisson (method mem)")->capture_default_str();
    cmd->add_option("--method", method, "mem (calibration), greg (closed form) or ht")
        ->check(CLI::IsMember({"mem", "greg", "ht"}))
        ->capture_default_str();
    cmd->add_option("--out", out_path, "JSON result (default: stdout)");
  }

  int run(Context& ctx) const {
    const PriorSpec p = parse_prior(prior);
    const auto pop = inputs.population();
    const SampleData data = load_sample(inputs.sample_path, inputs.resolve_size(pop), p.q_column);
    if (!data.sample.y) throw ArgumentError(inputs.sample_path + ": estimation needs a y column");
    const Vector& y = *data.sample.y;
    json result{{"method", method}, {"ht_estimate", ht_mean(data.sample, y)}, {"n", data.sample.size()},
                {"N", data.sample.population_size}};
    if (method == "ht") {
      result["estimate"] = result["ht_estimate"];
    } else {
      const Vector target = inputs.resolve_target(data.aux_names, pop);
      if (method == "greg") {
        const auto g = greg_closed_form(data.sample, data.sample.x, target, y, data.q);
        result["estimate"] = g.estimate;
        result["b_hat"] = to_json(g.b_hat);
      } else {
        const auto sol = solve_with_report(build_problem(data, target, p), solver.options(), ctx);
        record_solution(sol, ctx);
        result["prior"] = p.name;
        result["estimate"] = *sol.estimate;
        result["lambda"] = to_json(sol.lambda);
        result["iterations"] = sol.iterations;
      }
    }
    write_output(out_path, result.dump(2) + "\n", ctx.out);
    return kExitOk;
  }
};

// instruments ------------------------------------------------------------

struct InstrumentsCmd {
  SampleInputs inputs;
  std::string instruments = "x";
  std::string q_column;
  std::string out_path;
  std::string weights_path;

  void add_to(CLI::App* cmd) {
    inputs.add_to(cmd);
    cmd->add_option("--instruments", instruments, "x | qx | optimal-uniform | csv:<path> (CSV id,z1,...,zk)")
        ->capture_default_str();
    cmd->add_option("--q", q_column, "Sample column holding q_i for --instruments qx");
    cmd->add_option("--out", out_path, "JSON result (default: stdout)");
    cmd->add_option("--weights-out", weights_path, "Also write the weights as CSV id,d,w,pi_w");
  }

  InstrumentSpec build(const SampleData& data, const std::optional<Population>& pop) const {
    const Sample& s = data.sample;
    if (instruments == "x") return instruments_from_aux(s.x);
    if (instruments == "qx") {
      if (!data.q) throw ArgumentError("--instruments qx needs --q <column>");
      return instruments_from_aux(s.x, data.q);
    }
    if (instruments == "optimal-uniform") {
      if (!pop) throw ArgumentError("--instruments optimal-uniform needs --population");
      if (pop->aux_names() != data.aux_names) {
        throw ArgumentError("population columns " + join_names(pop->aux_names()) +
                            " do not match the sample auxiliary columns " + join_names(data.aux_names));
      }
      std::map<std::int64_t, Index> position;
      for (Index i = 0; i < pop->size(); ++i) position[pop->ids()[static_cast<std::size_t>(i)]] = i;
      std::vector<Index> sampled;
      for (auto id : s.ids) {
        const auto it = position.find(id);
        if (it == position.end()) throw ArgumentError("sample unit " + std::to_string(id) + " is not in the population");
        sampled.push_back(it->second);
      }
      return optimal_instruments_uniform(pop->x(), pop->aux_mean(), pop->size(), s.size(), sampled);
    }
    if (instruments.rfind("csv:", 0) == 0) {
      const std::string path = instruments.substr(4);
      const csv::Table t = csv::read_file(path);
      if (t.header.empty() || t.header[0] != "id") {
        throw ArgumentError(path + ": expected header id,z1,...,zk but found " + join_names(t.header));
      }
      const auto k = static_cast<Index>(t.header.size()) - 1;
      if (k != s.x.cols()) {
        throw ArgumentError("dimension mismatch: " + path + " has " + std::to_string(k) + " instrument columns but the sample has " +
                            std::to_string(s.x.cols()) + " auxiliary columns");
      }
      std::map<std::int64_t, const csv::Row*> rows;
      for (const auto& row : t.rows) {
        if (!rows.emplace(csv::to_integer(t, row, 0), &row).second) {
          throw ArgumentError(path + ":" + std::to_string(row.line) + ": duplicate id");
        }
      }
      InstrumentSpec spec;
      spec.label = "csv";
      spec.z.resize(s.size(), k);
      for (Index i = 0; i < s.size(); ++i) {
        const auto it = rows.find(s.ids[static_cast<std::size_t>(i)]);
        if (it == rows.end()) {
          throw ArgumentError(path + ": no instruments for sample unit " + std::to_string(s.ids[static_cast<std::size_t>(i)]));
        }
        for (Index j = 0; j < k; ++j) spec.z(i, j) = csv::to_double(t, *it->second, static_cast<std::size_t>(j) + 1);
      }
      return spec;
    }
    throw ArgumentError("unknown --instruments '" + instruments + "' (expected x, qx, optimal-uniform or csv:<path>)");
  }

  int run(Context& ctx) const {
    const auto pop = inputs.population();
    const SampleData data = load_sample(inputs.sample_path, inputs.resolve_size(pop), q_column);
    if (!data.sample.y) throw ArgumentError(inputs.sample_path + ": estimation needs a y column");
    const InstrumentSpec spec = build(data, pop);
    const auto r = instrument_estimate(data.sample, data.sample.x, *data.sample.y, spec,
                                       inputs.resolve_target(data.aux_names, pop));
    json result{{"instruments", spec.label}, {"estimate", r.estimate}, {"b_hat", to_json(r.b_hat)},
                {"lambda", to_json(r.lambda)}, {"warnings", spec.warnings}};
    ctx.diagnostics["warnings"] = spec.warnings;
    if (!weights_path.empty()) write_output(weights_path, solution_csv(data.sample, r.weights), ctx.out);
    write_output(out_path, result.dump(2) + "\n", ctx.out);
    return kExitOk;
  }
};

// efficiency -------------------------------------------------------------

double apply_term(const std::string& term, const Population& pop, Index i) {
  auto column = [&](const std::string& name) {
    const auto& names = pop.aux_names();
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw ArgumentError("--u: no population column named '" + name + "'");
    return pop.x()(i, it - names.begin());
  };
  const auto open = term.find('(');
  if (open != std::string::npos && term.back() == ')') {
    const std::string fn = term.substr(0, open);
    const double v = column(term.substr(open + 1, term.size() - open - 2));
    if (fn == "exp") return std::exp(v);
    if (fn == "log") return std::log(v);
    if (fn == "sqrt") return std::sqrt(v);
    throw ArgumentError("--u: unknown function '" + fn + "' (expected exp, log or sqrt)");
  }
  const auto caret = term.find('^');
  if (caret != std::string::npos) {
    return std::pow(column(term.substr(0, caret)), parse_double(term.substr(caret + 1), "--u exponent"));
  }
  return column(term);
}

struct EfficiencyCmd {
  std::string population_path;
  std::string u = "x1";
  std::string design;
  std::string out_path;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--population", population_path, "Population CSV id,x1,...,xk,y")->required();
    cmd->add_option("--u", u, "Comma separated columns or expressions: name, exp(name), log(name), sqrt(name), name^p")
        ->capture_default_str();
    cmd->add_option("--design", design, "uniform:N,n (N must match the population)")->required();
    cmd->add_option("--out", out_path, "JSON report (default: stdout)");
  }

  int run(Context& ctx) const {
    const Population pop = load_population(population_path);
    if (!pop.has_y()) throw ArgumentError(population_path + ": efficiency needs a y column");
    const DesignSpec d = parse_uniform_design(design);
    if (d.N != pop.size()) {
      throw ArgumentError("--design N = " + std::to_string(d.N) + " but the population has " + std::to_string(pop.size()) +
                          " rows");
    }
    const auto terms = split(u, ',');
    Matrix u_values(pop.size(), static_cast<Index>(terms.size()));
    for (Index i = 0; i < pop.size(); ++i) {
      for (std::size_t j = 0; j < terms.size(); ++j) u_values(i, static_cast<Index>(j)) = apply_term(terms[j], pop, i);
    }
    if (!u_values.allFinite()) throw DomainError("--u produced non-finite values on the population");
    const auto r = efficiency_report(pop, make_uniform_design(d.N, d.n), u_values);
    const json result{{"u", terms},
                      {"design", {{"N", d.N}, {"n", d.n}}},
                      {"v_star", r.v_star},
                      {"b_u", to_json(r.b_u)},
                      {"risk_linearized", r.risk_linearized},
                      {"n_scaled", r.n_scaled}};
    write_output(out_path, result.dump(2) + "\n", ctx.out);
    return kExitOk;
  }
};

// amem -------------------------------------------------------------------

struct AmemCmd {
  std::string basis = "monomial:6";
  std::string population_path;
  std::string sample_path;
  std::string column;
  std::string out_path;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--basis", basis, "monomial:<m>")->capture_default_str();
    cmd->add_option("--population", population_path, "Population CSV id,x1,...,xk[,y]")->required();
    cmd->add_option("--sample", sample_path, "Sample CSV id,pi,x1,...,xk,y")->required();
    cmd->add_option("--column", column, "Auxiliary column fed to the basis (default: the first)");
    cmd->add_option("--out", out_path, "JSON result (default: stdout)");
  }

  int run(Context& ctx) const {
    if (basis.rfind("monomial:", 0) != 0) throw ArgumentError("--basis expects monomial:<m>, got '" + basis + "'");
    const Index m = parse_index(basis.substr(9), "--basis");
    const Population pop = load_population(population_path);
    const SampleData data = load_sample(sample_path, pop.size());
    if (!data.sample.y) throw ArgumentError(sample_path + ": amem needs a y column");
    const std::string name = column.empty() ? pop.aux_names().front() : column;
    const auto& pop_names = pop.aux_names();
    const auto pit = std::find(pop_names.begin(), pop_names.end(), name);
    const auto sit = std::find(data.aux_names.begin(), data.aux_names.end(), name);
    if (pit == pop_names.end()) throw ArgumentError(population_path + ": no column named '" + name + "'");
    if (sit == data.aux_names.end()) throw ArgumentError(sample_path + ": no column named '" + name + "'");
    const Index pc = pit - pop_names.begin();
    const Index sc = sit - data.aux_names.begin();

    const auto proj = fit_projection(data.sample, BasisSpec::monomials(m), sc);
    const auto a = amem_estimate(proj, Vector(pop.x().col(pc)), data.sample, sc);
    const json result{{"estimate", a.estimate},
                      {"b_phi", to_json(proj.b_phi())},
                      {"raw_coefficients", to_json(proj.raw_coefficients())},
                      {"identity_gap", a.identity_gap},
                      {"b_Phi", a.b_Phi},
                      {"ht_form", a.ht_form},
                      {"population_form", a.population_form},
                      {"self_form", a.self_form}};
    write_output(out_path, result.dump(2) + "\n", ctx.out);
    return kExitOk;
  }
};

// simulate ---------------------------------------------------------------

struct SimulateCmd {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> reps;
  std::optional<double> sigma2;
  std::optional<Index> N;
  std::optional<Index> n;
  std::optional<Index> m;
  std::vector<std::string> estimators;
  std::optional<unsigned> threads;
  bool fresh = false;
  std::string format;
  std::string out_path;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON file with any of N, n, sigma2, reps, seed, estimators, m, "
                                             "fresh_population, threads");
    cmd->add_option("--seed", seed, "Master seed (default: config, then MEMCAL_SEED, then 42)");
    cmd->add_option("--reps", reps, "Number of replications (>= 2)");
    cmd->add_option("--sigma2", sigma2, "Noise variance of Y = exp(X) + e");
    cmd->add_option("--N", N, "Population size");
    cmd->add_option("--n", n, "Sample size");
    cmd->add_option("--m", m, "AMEM basis size");
    cmd->add_option("--estimators", estimators, "t1..t6 or mem:<prior>:<term>[+<term>]; terms 1, x, exp(x)")
        ->delimiter(',');
    cmd->add_option("--threads", threads, "Worker threads (0: all cores); results do not depend on it");
    cmd->add_flag("--fresh-population", fresh, "Draw a new population for every replication");
    cmd->add_option("--format", format, "text | json | csv (default: from --out extension, else text)")
        ->check(CLI::IsMember({"text", "json", "csv"}));
    cmd->add_option("--out", out_path, "Report file (default: stdout)");
  }

  int run(Context& ctx) const {
    SimConfig c;
    bool seed_set = false;
    if (!config_path.empty()) {
      std::ifstream in(config_path, std::ios::binary);
      if (!in) throw ArgumentError("cannot open config '" + config_path + "'");
      std::stringstream ss;
      ss << in.rdbuf();
      c = config_from_json(ss.str());
      seed_set = nlohmann::json::parse(ss.str()).contains("seed");
    }
    if (seed) {
      c.seed = *seed;
    } else if (!seed_set) {
      if (const char* env = std::getenv("MEMCAL_SEED"); env && *env) {
        try {
          std::size_t used = 0;
          c.seed = std::stoull(env, &used);
          if (used != std::string(env).size()) throw std::invalid_argument("trailing text");
        } catch (const std::exception&) {
          throw ArgumentError(std::string("MEMCAL_SEED must be an unsigned integer, got '") + env + "'");
        }
      }
    }
    if (reps) c.reps = *reps;
    if (sigma2) c.sigma2 = *sigma2;
    if (N) c.N = *N;
    if (n) c.n = *n;
    if (m) c.m = *m;
    if (!estimators.empty()) c.estimators = estimators;
    if (threads) c.threads = *threads;
    if (fresh) c.fresh_population = true;
    validate(c);

    std::string fmt = format;
    if (fmt.empty()) {
      const auto ext = std::filesystem::path(out_path).extension().string();
      fmt = ext == ".json" ? "json" : ext == ".csv" ? "csv" : "text";
    }
    const TableFormat tf = fmt == "json" ? TableFormat::Json : fmt == "csv" ? TableFormat::Csv : TableFormat::Text;
    const SimReport report = run_replications(c);
    ctx.diagnostics["seed"] = c.seed;
    ctx.diagnostics["amem_max_identity_gap"] = report.amem_max_identity_gap;
    json failures = json::object();
    for (const auto& r : report.rows) {
      if (r.failures) failures[r.estimator] = {{"count", r.failures}, {"first", r.first_failure}};
    }
    ctx.diagnostics["failures"] = failures;
    write_output(out_path, report_table(report, tf), ctx.out);
    return kExitOk;
  }
};

// oracle-design ----------------------------------------------------------

struct OracleDesignCmd {
  std::string design;
  std::string design_file;
  std::string population_path;
  bool list = false;
  std::string out_path;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--design", design, "uniform:N,n");
    cmd->add_option("--design-file", design_file, "Design CSV id,pi (systematic selection)");
    cmd->add_option("--population", population_path, "Population CSV with y, to check HT unbiasedness");
    cmd->add_flag("--list", list, "Include every sample and its probability");
    cmd->add_option("--out", out_path, "JSON result (default: stdout)");
  }

  int run(Context& ctx) const {
    if (design.empty() == design_file.empty()) throw ArgumentError("give exactly one of --design or --design-file");
    std::optional<SamplingDesign> des;
    if (!design.empty()) {
      const DesignSpec d = parse_uniform_design(design);
      des = make_uniform_design(d.N, d.n);
    } else {
      des = load_design(design_file);
    }
    const Index N = des->population_size();
    const Index n = des->sample_size();
    const auto samples = enumerate_design(*des);
    const Matrix joint = joint_from_enumeration(N, samples);

    double prob_total = 0.0;
    for (const auto& s : samples) prob_total += s.probability;
    const Vector pi = des->pi_vector();
    const double pi_error = (joint.diagonal() - pi).cwiseAbs().maxCoeff();
    double delta_total = 0.0;
    double delta_diag = 0.0;
    for (Index i = 0; i < N; ++i) {
      for (Index j = 0; j < N; ++j) {
        const double dij = joint(i, j) / (pi[i] * pi[j]) - 1.0;
        delta_total += dij;
        if (i == j) delta_diag += dij;
      }
    }
    const double Nd = static_cast<double>(N);
    json result{{"N", N},
                {"n", n},
                {"sample_count", samples.size()},
                {"probability_sum", prob_total},
                {"pi", to_json(pi)},
                {"pi_recovered", to_json(Vector(joint.diagonal()))},
                {"max_pi_error", pi_error},
                {"delta_total", delta_total},
                {"scaled_delta_trace", static_cast<double>(n) * delta_diag / (Nd * Nd)},
                {"one_minus_sampling_fraction", 1.0 - static_cast<double>(n) / Nd}};
    if (!population_path.empty()) {
      const Population pop = load_population(population_path);
      if (pop.size() != N) throw ArgumentError(population_path + ": population size does not match the design");
      double expected = 0.0;
      for (const auto& s : samples) {
        double total = 0.0;
        for (Index i : s.indices) total += pop.y()[i] / pi[i];
        expected += s.probability * total / Nd;
      }
      result["ht_expectation"] = expected;
      result["t_y"] = pop.y_mean();
      result["ht_bias"] = expected - pop.y_mean();
    }
    if (list) {
      json rows = json::array();
      for (const auto& s : samples) rows.push_back({{"indices", s.indices}, {"probability", s.probability}});
      result["samples"] = rows;
    }
    write_output(out_path, result.dump(2) + "\n", ctx.out);
    return kExitOk;
  }
};

int exit_for(const std::exception& e) {
  if (dynamic_cast<const InfeasibleError*>(&e)) return kExitInfeasible;
  if (dynamic_cast<const SolverError*>(&e) || dynamic_cast<const SingularityError*>(&e)) return kExitSolver;
  return kExitInput;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Maximum entropy calibration, instrument and AMEM estimators for survey samples", "memcal"};
  app.require_subcommand(1);
  bool diag = false;
  app.add_flag("--diag", diag, "Emit JSON diagnostics on stderr");

  CalibrateCmd calibrate;
  EstimateCmd estimate;
  InstrumentsCmd instruments;
  EfficiencyCmd efficiency;
  AmemCmd amem;
  SimulateCmd simulate;
  OracleDesignCmd oracle;
  std::vector<std::pair<CLI::App*, std::function<int(Context&)>>> commands;
  auto add = [&](const char* name, const char* help, auto& cmd) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_flag("--diag", diag, "Emit JSON diagnostics on stderr");
    cmd.add_to(sub);
    commands.emplace_back(sub, [&cmd](Context& ctx) { return cmd.run(ctx); });
  };
  add("calibrate", "Calibrate sample weights to population means", calibrate);
  add("estimate", "Estimate the population mean of y", estimate);
  add("instruments", "Instrument-vector estimator of the mean of y", instruments);
  add("efficiency", "Variance lower bound and linearized risk for a population", efficiency);
  add("amem", "Approximate maximum entropy estimator with a fitted basis", amem);
  add("simulate", "Monte Carlo replications of the exp-uniform model", simulate);
  add("oracle-design", "Enumerate a small sampling design and check its moments", oracle);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInput;
  }

  Context ctx{out, err, diag};
  int code = kExitOk;
  std::string message;
  try {
    for (auto& [sub, run] : commands) {
      if (sub->parsed()) code = run(ctx);
    }
  } catch (const std::exception& e) {
    code = exit_for(e);
    message = e.what();
  }
  if (ctx.diag) {
    ctx.diagnostics["status"] = code == kExitOk ? "ok" : code == kExitInfeasible ? "infeasible"
                                : code == kExitSolver ? "solver_failure" : "input_error";
    ctx.diagnostics["exit_code"] = code;
    if (!message.empty()) ctx.diagnostics["error"] = message;
    err << ctx.diagnostics.dump() << "\n";
  } else if (!message.empty()) {
    err << "memcal: error: " << message << "\n";
    if (ctx.diagnostics.contains("feasibility")) {
      const auto detail = ctx.diagnostics["feasibility"]["message"].get<std::string>();
      if (message.find(detail) == std::string::npos) err << "memcal: feasibility: " << detail << "\n";
    }
  }
  return code;
}

}  // namespace memcal
