#include "memcal/design.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

#include "memcal/errors.hpp"
#include "memcal/rng.hpp"

namespace memcal {

namespace {

void require(bool condition, const std::string& message) {
  if (!condition) throw ArgumentError(message);
}

double binomial(Index n, Index k) {
  if (k < 0 || k > n) return 0.0;
  k = std::min(k, n - k);
  double result = 1.0;
  for (Index i = 1; i <= k; ++i) {
    result = result * static_cast<double>(n - k + i) / static_cast<double>(i);
  }
  return std::round(result);
}

}  // namespace

Population::Population(Matrix x, std::optional<Vector> y, std::vector<std::int64_t> ids,
                       std::vector<std::string> aux_names)
    : x_(std::move(x)), y_(std::move(y)), ids_(std::move(ids)), aux_names_(std::move(aux_names)) {
  require(x_.rows() >= 1, "population must contain at least one unit");
  require(x_.cols() >= 1, "population needs at least one auxiliary column");
  require(x_.allFinite(), "population auxiliary values must be finite");
  if (y_) {
    require(y_->size() == x_.rows(), "response length must equal population size");
    require(y_->allFinite(), "population responses must be finite");
  }
  if (ids_.empty()) {
    ids_.resize(static_cast<std::size_t>(x_.rows()));
    std::iota(ids_.begin(), ids_.end(), std::int64_t{1});
  }
  require(static_cast<Index>(ids_.size()) == x_.rows(), "id count must equal population size");
  if (aux_names_.empty()) {
    for (Index j = 0; j < x_.cols(); ++j) aux_names_.push_back("x" + std::to_string(j + 1));
  }
  require(static_cast<Index>(aux_names_.size()) == x_.cols(), "aux name count must equal column count");
}

const Vector& Population::y() const {
  if (!y_) throw ArgumentError("population has no response column");
  return *y_;
}

Vector Population::aux_mean() const { return x_.colwise().mean().transpose(); }

double Population::y_mean() const { return y().mean(); }

SamplingDesign SamplingDesign::uniform(Index population_size, Index sample_size) {
  if (population_size < 1 || sample_size < 1 || sample_size > population_size) {
    std::ostringstream msg;
    msg << "uniform design needs 1 <= n <= N (got N=" << population_size << ", n=" << sample_size << ")";
    throw ArgumentError(msg.str());
  }
  SamplingDesign design;
  design.kind_ = DesignKind::UniformSRSWOR;
  design.N_ = population_size;
  design.n_ = sample_size;
  return design;
}

SamplingDesign SamplingDesign::user(Vector pi, std::optional<Matrix> joint) {
  require(pi.size() >= 1, "design needs at least one unit");
  for (Index i = 0; i < pi.size(); ++i) {
    if (!(pi[i] > 0.0 && pi[i] <= 1.0)) {
      std::ostringstream msg;
      msg << "inclusion probability pi_" << (i + 1) << " = " << pi[i]
          << " violates 0 < pi_i <= 1 (pi_i strictly positive)";
      throw ArgumentError(msg.str());
    }
  }
  const double total = pi.sum();
  const double rounded = std::round(total);
  if (rounded < 1.0 || std::abs(total - rounded) > 1e-9 * std::max(1.0, total)) {
    std::ostringstream msg;
    msg << "inclusion probabilities must sum to an integer sample size (sum = " << total << ")";
    throw ArgumentError(msg.str());
  }
  const Index N = pi.size();
  if (joint) {
    require(joint->rows() == N && joint->cols() == N, "joint table must be N x N");
    for (Index i = 0; i < N; ++i) {
      require(std::abs((*joint)(i, i) - pi[i]) <= 1e-12, "joint table diagonal must equal pi");
      for (Index j = 0; j < N; ++j) {
        const double pij = (*joint)(i, j);
        require(std::abs(pij - (*joint)(j, i)) <= 1e-12, "joint table must be symmetric");
        require(pij >= -1e-15 && pij <= std::min(pi[i], pi[j]) + 1e-12,
                "joint probabilities must lie in [0, min(pi_i, pi_j)]");
      }
    }
  }
  SamplingDesign design;
  design.kind_ = DesignKind::UserSpecified;
  design.N_ = N;
  design.n_ = static_cast<Index>(rounded);
  design.pi_ = std::move(pi);
  design.joint_ = std::move(joint);
  return design;
}

double SamplingDesign::pi(Index i) const {
  if (kind_ == DesignKind::UniformSRSWOR) {
    return static_cast<double>(n_) / static_cast<double>(N_);
  }
  return pi_[i];
}

Vector SamplingDesign::pi_vector() const {
  if (kind_ == DesignKind::UniformSRSWOR) return Vector::Constant(N_, pi(0));
  return pi_;
}

double SamplingDesign::joint(Index i, Index j) const {
  if (i == j) return pi(i);
  if (kind_ == DesignKind::UniformSRSWOR) {
    const auto N = static_cast<double>(N_);
    const auto n = static_cast<double>(n_);
    return n * (n - 1.0) / (N * (N - 1.0));
  }
  if (!joint_) {
    throw UnsupportedError("joint inclusion probabilities are not available for this user-specified design");
  }
  return (*joint_)(i, j);
}

SamplingDesign make_uniform_design(Index population_size, Index sample_size) {
  return SamplingDesign::uniform(population_size, sample_size);
}

SamplingDesign make_user_design(Vector pi, std::optional<Matrix> joint) {
  return SamplingDesign::user(std::move(pi), std::move(joint));
}

const Vector& Sample::y_values() const {
  if (!y) throw ArgumentError("sample has no response values");
  return *y;
}

Sample Sample::from_rows(std::vector<std::int64_t> ids, Vector pi, Matrix x, std::optional<Vector> y,
                         Index population_size, std::vector<Index> indices) {
  const auto n = static_cast<Index>(ids.size());
  require(n >= 1, "sample must contain at least one unit");
  require(pi.size() == n && x.rows() == n, "sample columns have inconsistent lengths");
  require(x.allFinite(), "sample auxiliary values must be finite");
  require(population_size >= n, "population size must be at least the sample size");
  if (y) require(y->size() == n && y->allFinite(), "sample responses must be finite with one per unit");
  std::set<std::int64_t> seen;
  for (Index i = 0; i < n; ++i) {
    if (!seen.insert(ids[static_cast<std::size_t>(i)]).second) {
      throw ArgumentError("duplicate unit id " + std::to_string(ids[static_cast<std::size_t>(i)]) + " in sample");
    }
    if (!(pi[i] > 0.0 && pi[i] <= 1.0)) {
      std::ostringstream msg;
      msg << "unit " << ids[static_cast<std::size_t>(i)] << " has pi = " << pi[i]
          << "; pi_i must be strictly positive and at most 1";
      throw ArgumentError(msg.str());
    }
  }
  if (indices.empty()) {
    indices.resize(static_cast<std::size_t>(n));
    std::iota(indices.begin(), indices.end(), Index{0});
  }
  require(static_cast<Index>(indices.size()) == n, "index count must equal sample size");

  Sample sample;
  sample.indices = std::move(indices);
  sample.ids = std::move(ids);
  sample.d = pi.cwiseInverse();
  sample.pi = std::move(pi);
  sample.x = std::move(x);
  sample.y = std::move(y);
  sample.population_size = population_size;
  return sample;
}

Sample make_sample(const SamplingDesign& design, const Population& pop, std::vector<Index> indices) {
  if (design.population_size() != pop.size()) {
    throw ArgumentError("design size " + std::to_string(design.population_size()) +
                        " does not match population size " + std::to_string(pop.size()));
  }
  std::sort(indices.begin(), indices.end());
  const auto n = static_cast<Index>(indices.size());
  Sample sample;
  sample.population_size = pop.size();
  sample.pi.resize(n);
  sample.d.resize(n);
  sample.x.resize(n, pop.dims());
  if (pop.has_y()) sample.y = Vector(n);
  sample.ids.reserve(indices.size());
  for (Index r = 0; r < n; ++r) {
    const Index i = indices[static_cast<std::size_t>(r)];
    if (i < 0 || i >= pop.size()) throw ArgumentError("sample index out of range");
    if (r > 0 && indices[static_cast<std::size_t>(r - 1)] == i) throw ArgumentError("sample indices must be distinct");
    sample.pi[r] = design.pi(i);
    sample.d[r] = 1.0 / sample.pi[r];
    sample.x.row(r) = pop.x().row(i);
    if (sample.y) (*sample.y)[r] = pop.y()[i];
    sample.ids.push_back(pop.ids()[static_cast<std::size_t>(i)]);
  }
  sample.indices = std::move(indices);
  return sample;
}

std::vector<Index> systematic_select(const Vector& pi, double u) {
  std::vector<Index> chosen;
  double cumulative = 0.0;
  double next_point = u;
  for (Index i = 0; i < pi.size(); ++i) {
    cumulative += pi[i];
    if (next_point < cumulative) {
      chosen.push_back(i);
      next_point += 1.0;
    }
  }
  return chosen;
}

std::vector<Index> draw_indices(const SamplingDesign& design, std::uint64_t seed) {
  Rng rng(seed);
  const Index N = design.population_size();
  const Index n = design.sample_size();
  if (design.kind() == DesignKind::UserSpecified) {
    return systematic_select(design.pi_vector(), rng.uniform01());
  }
  // Position p holds swaps[p] if present, else p itself.
  std::unordered_map<Index, Index> swaps;
  swaps.reserve(static_cast<std::size_t>(2 * n));
  std::vector<Index> chosen;
  chosen.reserve(static_cast<std::size_t>(n));
  auto value_at = [&](Index p) {
    const auto it = swaps.find(p);
    return it == swaps.end() ? p : it->second;
  };
  for (Index k = 0; k < n; ++k) {
    const Index j = k + static_cast<Index>(rng.below(static_cast<std::uint64_t>(N - k)));
    const Index picked = value_at(j);
    swaps[j] = value_at(k);
    chosen.push_back(picked);
  }
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

Sample draw_sample(const SamplingDesign& design, const Population& pop, std::uint64_t seed) {
  if (design.population_size() != pop.size()) {
    throw ArgumentError("design size " + std::to_string(design.population_size()) +
                        " does not match population size " + std::to_string(pop.size()));
  }
  return make_sample(design, pop, draw_indices(design, seed));
}

double delta(const SamplingDesign& design, Index i, Index j) {
  return design.joint(i, j) * design.d(i) * design.d(j) - 1.0;
}

double ht_mean(const Sample& sample, const Vector& values) {
  if (values.size() != sample.size()) throw ArgumentError("value count must equal sample size");
  return sample.d.dot(values) / static_cast<double>(sample.population_size);
}

Vector ht_mean(const Sample& sample, const Matrix& values) {
  if (values.rows() != sample.size()) throw ArgumentError("row count must equal sample size");
  return values.transpose() * sample.d / static_cast<double>(sample.population_size);
}

std::vector<EnumeratedSample> enumerate_design(const SamplingDesign& design) {
  const Index N = design.population_size();
  const Index n = design.sample_size();

  if (design.kind() == DesignKind::UniformSRSWOR) {
    const double count = binomial(N, n);
    if (count > kMaxEnumeratedSamples) {
      std::ostringstream msg;
      msg << "C(" << N << ", " << n << ") = " << count << " samples exceeds the enumeration limit";
      throw SizeError(msg.str());
    }
    const double p = 1.0 / count;
    std::vector<EnumeratedSample> out;
    out.reserve(static_cast<std::size_t>(count));
    std::vector<Index> combo(static_cast<std::size_t>(n));
    std::iota(combo.begin(), combo.end(), Index{0});
    while (true) {
      out.push_back({combo, p});
      Index pos = n - 1;
      while (pos >= 0 && combo[static_cast<std::size_t>(pos)] == N - n + pos) --pos;
      if (pos < 0) break;
      ++combo[static_cast<std::size_t>(pos)];
      for (Index q = pos + 1; q < n; ++q) {
        combo[static_cast<std::size_t>(q)] = combo[static_cast<std::size_t>(q - 1)] + 1;
      }
    }
    return out;
  }

  // Systematic rule: the outcome only changes when the start crosses the
  // fractional part of a cumulative inclusion sum.
  const Vector pi = design.pi_vector();
  std::vector<double> breaks{0.0, 1.0};
  double cumulative = 0.0;
  for (Index i = 0; i < N; ++i) {
    cumulative += pi[i];
    const double frac = cumulative - std::floor(cumulative);
    if (frac > 0.0 && frac < 1.0) breaks.push_back(frac);
  }
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());
  if (static_cast<double>(breaks.size()) > kMaxEnumeratedSamples) {
    throw SizeError("systematic design has too many distinct outcomes to enumerate");
  }

  std::map<std::vector<Index>, double> outcomes;
  for (std::size_t b = 0; b + 1 < breaks.size(); ++b) {
    const double width = breaks[b + 1] - breaks[b];
    if (width <= 0.0) continue;
    outcomes[systematic_select(pi, 0.5 * (breaks[b] + breaks[b + 1]))] += width;
  }
  std::vector<EnumeratedSample> out;
  out.reserve(outcomes.size());
  for (auto& [indices, probability] : outcomes) out.push_back({indices, probability});
  return out;
}

Matrix joint_from_enumeration(Index population_size, std::span<const EnumeratedSample> samples) {
  Matrix joint = Matrix::Zero(population_size, population_size);
  for (const auto& s : samples) {
    for (Index a : s.indices) {
      for (Index b : s.indices) joint(a, b) += s.probability;
    }
  }
  return joint;
}

}  // namespace memcal
