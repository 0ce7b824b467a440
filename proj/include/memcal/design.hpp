#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace memcal {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Finite universe U = {1..N} with auxiliary rows x_i and optional responses.
class Population {
public:
  Population() = default;

  /// Ids default to 1..N. Throws ArgumentError on empty x, non-finite
  /// entries, or size mismatches.
  Population(Matrix x, std::optional<Vector> y = std::nullopt,
             std::vector<std::int64_t> ids = {},
             std::vector<std::string> aux_names = {});

  Index size() const noexcept { return x_.rows(); }
  Index dims() const noexcept { return x_.cols(); }
  const Matrix& x() const noexcept { return x_; }
  bool has_y() const noexcept { return y_.has_value(); }
  /// Throws ArgumentError when no response column is present.
  const Vector& y() const;
  const std::optional<Vector>& y_opt() const noexcept { return y_; }
  const std::vector<std::int64_t>& ids() const noexcept { return ids_; }
  const std::vector<std::string>& aux_names() const noexcept { return aux_names_; }

  /// Population mean of each auxiliary column (t_x).
  Vector aux_mean() const;
  /// Population mean of y (t_y).
  double y_mean() const;

private:
  Matrix x_;
  std::optional<Vector> y_;
  std::vector<std::int64_t> ids_;
  std::vector<std::string> aux_names_;
};

enum class DesignKind { UniformSRSWOR, UserSpecified };

/// First-order (and optionally second-order) inclusion probabilities plus
/// the rule used to draw samples. Immutable once built.
class SamplingDesign {
public:
  static SamplingDesign uniform(Index population_size, Index sample_size);

  /// pi must satisfy 0 < pi_i <= 1 and sum to an integer n >= 1 (fixed-size
  /// design). The optional joint table is N x N, symmetric, with diagonal
  /// equal to pi and 0 <= pi_ij <= min(pi_i, pi_j).
  static SamplingDesign user(Vector pi, std::optional<Matrix> joint = std::nullopt);

  DesignKind kind() const noexcept { return kind_; }
  Index population_size() const noexcept { return N_; }
  Index sample_size() const noexcept { return n_; }

  double pi(Index i) const;
  double d(Index i) const { return 1.0 / pi(i); }
  Vector pi_vector() const;

  bool has_joint() const noexcept { return kind_ == DesignKind::UniformSRSWOR || joint_.has_value(); }
  /// pi_ij with pi_ii := pi_i. Throws UnsupportedError for user designs
  /// without a joint table.
  double joint(Index i, Index j) const;

private:
  SamplingDesign() = default;

  DesignKind kind_ = DesignKind::UniformSRSWOR;
  Index N_ = 0;
  Index n_ = 0;
  Vector pi_;
  std::optional<Matrix> joint_;
};

SamplingDesign make_uniform_design(Index population_size, Index sample_size);
SamplingDesign make_user_design(Vector pi, std::optional<Matrix> joint = std::nullopt);

/// Observed units with their design weights d_i = 1/pi_i.
struct Sample {
  std::vector<Index> indices;  // 0-based positions in U, ascending
  std::vector<std::int64_t> ids;
  Vector pi;
  Vector d;
  Matrix x;
  std::optional<Vector> y;
  Index population_size = 0;

  Index size() const noexcept { return static_cast<Index>(indices.size()); }
  /// Throws ArgumentError when the sample carries no responses.
  const Vector& y_values() const;

  /// Builds a sample from raw rows and validates the invariants
  /// (distinct ids, 0 < pi_i <= 1, finite x). Indices are positions
  /// 0..n-1 unless given.
  static Sample from_rows(std::vector<std::int64_t> ids, Vector pi, Matrix x,
                          std::optional<Vector> y, Index population_size,
                          std::vector<Index> indices = {});
};

/// Restricts the population to `indices` (any order; stored ascending).
Sample make_sample(const SamplingDesign& design, const Population& pop,
                   std::vector<Index> indices);

/// Uniform: partial Fisher-Yates over a sparse swap table (O(n) memory).
/// User designs: systematic PPS with a single uniform start.
/// Deterministic given (design, pop, seed).
Sample draw_sample(const SamplingDesign& design, const Population& pop, std::uint64_t seed);

/// Index-only variant of draw_sample (no population needed).
std::vector<Index> draw_indices(const SamplingDesign& design, std::uint64_t seed);

/// Delta_ij = pi_ij d_i d_j - 1.
double delta(const SamplingDesign& design, Index i, Index j);

/// Horvitz-Thompson mean N^-1 sum d_i v_i.
double ht_mean(const Sample& sample, const Vector& values);
/// Column-wise Horvitz-Thompson means of an n x k matrix.
Vector ht_mean(const Sample& sample, const Matrix& values);

struct EnumeratedSample {
  std::vector<Index> indices;
  double probability = 0.0;
};

inline constexpr double kMaxEnumeratedSamples = 1e6;

/// Every possible sample with its probability p(s). Uniform designs list all
/// C(N, n) subsets in lexicographic order; user designs enumerate the
/// distinct outcomes of the systematic rule. Throws SizeError when
/// C(N, n) > 1e6.
std::vector<EnumeratedSample> enumerate_design(const SamplingDesign& design);

/// Joint inclusion table recovered from an enumeration.
Matrix joint_from_enumeration(Index population_size, std::span<const EnumeratedSample> samples);

/// Selection made by the systematic rule for start u in [0, 1).
std::vector<Index> systematic_select(const Vector& pi, double u);

}  // namespace memcal
