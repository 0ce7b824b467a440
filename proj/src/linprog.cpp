#include "memcal/linprog.hpp"

#include <cmath>
#include <vector>

#include "memcal/errors.hpp"

namespace memcal::lp {

namespace {

using Eigen::Index;

struct Tableau {
  Eigen::MatrixXd t;           // constraint rows, last column is the rhs
  Eigen::VectorXd objective;   // reduced costs z_j - c_j, last entry is the value
  std::vector<Index> basis;

  Index rows() const { return t.rows(); }
  Index rhs() const { return t.cols() - 1; }

  void pivot(Index r, Index col) {
    t.row(r) /= t(r, col);
    for (Index i = 0; i < t.rows(); ++i) {
      if (i != r && t(i, col) != 0.0) t.row(i) -= t(i, col) * t.row(r);
    }
    if (objective[col] != 0.0) objective -= objective[col] * t.row(r).transpose();
    basis[static_cast<std::size_t>(r)] = col;
  }
};

enum class RunResult { Optimal, Unbounded };

RunResult run(Tableau& tab, Index usable_columns, double tol) {
  for (int guard = 0; guard < 100000; ++guard) {
    Index entering = -1;
    for (Index j = 0; j < usable_columns; ++j) {
      if (tab.objective[j] < -tol) {
        entering = j;
        break;
      }
    }
    if (entering < 0) return RunResult::Optimal;
    Index leaving = -1;
    double best = 0.0;
    for (Index r = 0; r < tab.rows(); ++r) {
      const double a = tab.t(r, entering);
      if (a > tol) {
        const double ratio = tab.t(r, tab.rhs()) / a;
        if (leaving < 0 || ratio < best - tol ||
            (std::abs(ratio - best) <= tol && tab.basis[static_cast<std::size_t>(r)] < tab.basis[static_cast<std::size_t>(leaving)])) {
          leaving = r;
          best = ratio;
        }
      }
    }
    if (leaving < 0) return RunResult::Unbounded;
    tab.pivot(leaving, entering);
  }
  throw SolverError("simplex iteration guard exceeded", {});
}

}  // namespace

Solution solve(const Program& program, double tolerance) {
  const Index nv = program.c.size();
  const Index m_eq = program.a_eq.rows();
  const Index m_le = program.a_le.rows();
  if ((m_eq > 0 && program.a_eq.cols() != nv) || (m_le > 0 && program.a_le.cols() != nv) ||
      program.b_eq.size() != m_eq || program.b_le.size() != m_le) {
    throw ArgumentError("linear program has inconsistent dimensions");
  }
  const Index m = m_eq + m_le;
  const Index slack0 = nv;
  const Index art0 = nv + m_le;
  const Index ncols = art0 + m;

  Tableau tab;
  tab.t = Eigen::MatrixXd::Zero(m, ncols + 1);
  tab.basis.resize(static_cast<std::size_t>(m));
  for (Index r = 0; r < m; ++r) {
    const bool is_eq = r < m_eq;
    Eigen::RowVectorXd coeffs = is_eq ? program.a_eq.row(r) : program.a_le.row(r - m_eq);
    double rhs = is_eq ? program.b_eq[r] : program.b_le[r - m_eq];
    double slack = is_eq ? 0.0 : 1.0;
    double scale = std::max(coeffs.cwiseAbs().maxCoeff(), std::abs(rhs));
    if (scale == 0.0) scale = 1.0;
    coeffs /= scale;
    rhs /= scale;
    slack /= scale;
    if (rhs < 0.0) {
      coeffs = -coeffs;
      rhs = -rhs;
      slack = -slack;
    }
    tab.t.block(r, 0, 1, nv) = coeffs;
    if (!is_eq) tab.t(r, slack0 + (r - m_eq)) = slack;
    tab.t(r, art0 + r) = 1.0;
    tab.t(r, ncols) = rhs;
    tab.basis[static_cast<std::size_t>(r)] = art0 + r;
  }

  // Phase 1: maximize -sum(artificials).
  tab.objective = Eigen::VectorXd::Zero(ncols + 1);
  for (Index r = 0; r < m; ++r) tab.objective -= tab.t.row(r).transpose();
  tab.objective.segment(art0, m).setZero();
  run(tab, art0, tolerance);
  if (tab.objective[ncols] < -tolerance * std::max<double>(1.0, static_cast<double>(m))) {
    return Solution{Status::Infeasible, {}, 0.0};
  }

  // Drive zero-level artificials out of the basis; drop redundant rows.
  for (Index r = 0; r < tab.rows();) {
    if (tab.basis[static_cast<std::size_t>(r)] < art0) {
      ++r;
      continue;
    }
    Index col = -1;
    for (Index j = 0; j < art0; ++j) {
      if (std::abs(tab.t(r, j)) > tolerance) {
        col = j;
        break;
      }
    }
    if (col >= 0) {
      tab.pivot(r, col);
      ++r;
    } else {
      const Index last = tab.rows() - 1;
      if (r != last) {
        tab.t.row(r) = tab.t.row(last);
        tab.basis[static_cast<std::size_t>(r)] = tab.basis[static_cast<std::size_t>(last)];
      }
      tab.t.conservativeResize(last, Eigen::NoChange);
      tab.basis.pop_back();
    }
  }

  // Phase 2 over structural and slack columns.
  Eigen::VectorXd cost = Eigen::VectorXd::Zero(ncols + 1);
  cost.head(nv) = program.c;
  tab.objective = -cost;
  tab.objective[ncols] = 0.0;
  for (Index r = 0; r < tab.rows(); ++r) {
    const double cb = cost[tab.basis[static_cast<std::size_t>(r)]];
    if (cb != 0.0) tab.objective += cb * tab.t.row(r).transpose();
  }
  if (run(tab, art0, tolerance) == RunResult::Unbounded) {
    return Solution{Status::Unbounded, {}, 0.0};
  }

  Solution sol;
  sol.status = Status::Optimal;
  sol.z = Eigen::VectorXd::Zero(nv);
  for (Index r = 0; r < tab.rows(); ++r) {
    const Index b = tab.basis[static_cast<std::size_t>(r)];
    if (b < nv) sol.z[b] = tab.t(r, ncols);
  }
  sol.value = program.c.dot(sol.z);
  return sol;
}

}  // namespace memcal::lp
