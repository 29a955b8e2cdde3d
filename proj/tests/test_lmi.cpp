#include "dcopf/lmi.hpp"

#include <doctest.h>

#include <Eigen/Eigenvalues>

#include <random>

using namespace dcopf;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

LmiBlock lyapunov_block(const MatrixXd& a) {
  LmiBlock b;
  b.M = a;  // E empty: P A + A^T P
  return b;
}

double max_eig(const MatrixXd& m) {
  return Eigen::SelfAdjointEigenSolver<MatrixXd>(0.5 * (m + m.transpose())).eigenvalues().maxCoeff();
}
double min_eig(const MatrixXd& m) {
  return Eigen::SelfAdjointEigenSolver<MatrixXd>(0.5 * (m + m.transpose())).eigenvalues().minCoeff();
}

MatrixXd random_hurwitz(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  MatrixXd a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = g(rng);
  const double shift = Eigen::EigenSolver<MatrixXd>(a).eigenvalues().real().maxCoeff();
  a.diagonal().array() -= shift + 0.5;
  return a;
}

}  // namespace

TEST_CASE("Lyapunov LMI is feasible for a stable matrix and the witness checks out") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 10; ++trial) {
    const MatrixXd a = random_hurwitz(5, rng);
    const LmiResult r = lmi_feasible({lyapunov_block(a)}, 5);
    REQUIRE(r.feasible);
    CHECK(min_eig(r.P) >= 1.0 - 1e-9);
    CHECK(max_eig(lmi_block_value(lyapunov_block(a), r.P, r.lambda)) <= -1e-7);
    CHECK(r.worst_eigenvalue < 0.0);
  }
}

TEST_CASE("Lyapunov LMI is infeasible for an unstable matrix") {
  MatrixXd a(2, 2);
  a << 1.0, 1.0, -1.0, -0.5;  // positive trace
  CHECK_FALSE(lmi_feasible({lyapunov_block(a)}, 2).feasible);
}

TEST_CASE("common Lyapunov function: exists for a commuting pair, not when the average is unstable") {
  MatrixXd a1(2, 2), a2(2, 2);
  a1 << -1.0, 0.5, 0.0, -2.0;
  a2 = 2.0 * a1;
  CHECK(lmi_feasible({lyapunov_block(a1), lyapunov_block(a2)}, 2).feasible);

  a1 << -1.0, 10.0, 0.0, -1.0;
  a2 << -1.0, 0.0, 10.0, -1.0;
  CHECK_FALSE(lmi_feasible({lyapunov_block(a1), lyapunov_block(a2)}, 2).feasible);
}

TEST_CASE("active-set result agrees with carrying every block") {
  std::mt19937_64 rng(4);
  const MatrixXd base = random_hurwitz(4, rng);
  std::vector<LmiBlock> blocks;
  std::normal_distribution<double> g;
  for (int k = 0; k < 20; ++k) {
    MatrixXd pert(4, 4);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) pert(i, j) = 0.05 * g(rng);
    blocks.push_back(lyapunov_block(base + pert));
  }
  LmiOptions all;
  all.initial_active = blocks.size();
  const LmiResult a = lmi_feasible(blocks, 4);
  const LmiResult b = lmi_feasible(blocks, 4, all);
  CHECK(a.feasible == b.feasible);
  if (a.feasible)
    for (const auto& blk : blocks) CHECK(max_eig(lmi_block_value(blk, a.P, a.lambda)) <= -1e-7);
}

TEST_CASE("diagonal P restriction") {
  MatrixXd a(3, 3);
  a << -3, 1, 0, 1, -3, 1, 0, 1, -3;  // symmetric negative definite: P = I works
  LmiOptions o;
  o.diagonal_p = true;
  const LmiResult r = lmi_feasible({lyapunov_block(a)}, 3, o);
  REQUIRE(r.feasible);
  CHECK((r.P - MatrixXd(r.P.diagonal().asDiagonal())).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("S-procedure multiplier enters through lambda terms") {
  // [P a + a P + lam, P b; b P, -lam] <= 0 for scalar a < 0, |b| small
  LmiBlock blk;
  blk.E = MatrixXd::Zero(1, 2);
  blk.E(0, 0) = 1.0;
  blk.M = MatrixXd::Zero(1, 2);
  blk.M(0, 0) = -2.0;
  blk.M(0, 1) = 0.5;
  MatrixXd x = MatrixXd::Zero(2, 2);
  x(0, 0) = 1.0;
  x(1, 1) = -1.0;
  blk.lambda_terms.push_back(x);
  const LmiResult r = lmi_feasible({blk}, 1);
  REQUIRE(r.feasible);
  CHECK(r.lambda.size() == 1);
  CHECK(r.lambda(0) >= 0.0);
  CHECK(max_eig(lmi_block_value(blk, r.P, r.lambda)) < 0.0);
}
