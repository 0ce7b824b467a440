#include "doctest.h"
#include "memcal/linprog.hpp"

using namespace memcal;
using Eigen::MatrixXd;
using Eigen::VectorXd;

TEST_CASE("small maximization with inequality constraints") {
  // max 3a + 2b s.t. a + b <= 4, a + 3b <= 6, a <= 3
  lp::Program p;
  p.a_le = (MatrixXd(3, 2) << 1, 1, 1, 3, 1, 0).finished();
  p.b_le = (VectorXd(3) << 4, 6, 3).finished();
  p.c = (VectorXd(2) << 3, 2).finished();
  const auto sol = lp::solve(p);
  REQUIRE(sol.status == lp::Status::Optimal);
  CHECK(sol.value == doctest::Approx(11.0));
  CHECK(sol.z[0] == doctest::Approx(3.0));
  CHECK(sol.z[1] == doctest::Approx(1.0));
}

TEST_CASE("equality constraints, redundancy and negative right-hand sides") {
  // a + b = 2, 2a + 2b = 4 (redundant), -a <= -0.5; max b
  lp::Program p;
  p.a_eq = (MatrixXd(2, 2) << 1, 1, 2, 2).finished();
  p.b_eq = (VectorXd(2) << 2, 4).finished();
  p.a_le = (MatrixXd(1, 2) << -1, 0).finished();
  p.b_le = (VectorXd(1) << -0.5).finished();
  p.c = (VectorXd(2) << 0, 1).finished();
  const auto sol = lp::solve(p);
  REQUIRE(sol.status == lp::Status::Optimal);
  CHECK(sol.value == doctest::Approx(1.5));
}

TEST_CASE("infeasible and unbounded programs") {
  lp::Program infeasible;
  infeasible.a_eq = (MatrixXd(1, 2) << 1, 1).finished();
  infeasible.b_eq = (VectorXd(1) << -1).finished();
  infeasible.c = VectorXd::Ones(2);
  CHECK(lp::solve(infeasible).status == lp::Status::Infeasible);

  lp::Program unbounded;
  unbounded.a_le = (MatrixXd(1, 2) << 1, -1).finished();
  unbounded.b_le = (VectorXd(1) << 1).finished();
  unbounded.c = (VectorXd(2) << 1, 0).finished();
  CHECK(lp::solve(unbounded).status == lp::Status::Unbounded);
}
