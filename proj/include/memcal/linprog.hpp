#pragma once

#include <Eigen/Dense>

namespace memcal::lp {

enum class Status { Optimal, Infeasible, Unbounded };

/// maximize c'z  subject to  A_eq z = b_eq,  A_le z <= b_le,  z >= 0.
struct Program {
  Eigen::MatrixXd a_eq;
  Eigen::VectorXd b_eq;
  Eigen::MatrixXd a_le;
  Eigen::VectorXd b_le;
  Eigen::VectorXd c;
};

struct Solution {
  Status status = Status::Infeasible;
  Eigen::VectorXd z;
  double value = 0.0;
};

/// Dense two-phase tableau simplex with Bland's anti-cycling rule.
/// Meant for the small membership problems built by the feasibility check.
Solution solve(const Program& program, double tolerance = 1e-10);

}  // namespace memcal::lp
