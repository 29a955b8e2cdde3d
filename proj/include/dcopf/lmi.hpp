#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <vector>

namespace dcopf {

/// One symmetric block, affine in the n x n symmetric matrix P and in the
/// shared multipliers lambda:
///   B(P, lambda) = E^T P M + M^T P E + sum_v lambda_v X_v
/// E and M are n x N. An empty E stands for the identity (then N = n).
struct LmiBlock {
  Eigen::MatrixXd E;
  Eigen::MatrixXd M;
  std::vector<Eigen::MatrixXd> lambda_terms;  // X_v, N x N, v indexes the shared lambda

  Eigen::Index dim() const { return M.cols(); }
};

struct LmiOptions {
  /// Feasible iff every block is <= -margin * I at the witness.
  double margin = 1e-7;
  /// tr(P) <= trace_factor * n bounds the otherwise unbounded scale of P.
  double trace_factor = 1e4;
  /// Restrict P to diagonal matrices.
  bool diagonal_p = false;
  int max_newton = 4000;
  double gap_tolerance = 1e-9;
  std::size_t initial_active = 6;
  std::size_t add_per_round = 6;
};

struct LmiResult {
  bool feasible = false;
  double t = 0.0;                // optimal (or early-exit) value of min t s.t. B_k <= t I
  Eigen::MatrixXd P;
  Eigen::VectorXd lambda;
  double worst_eigenvalue = 0.0;  // max_k lambda_max(B_k) at (P, lambda), over all blocks
  int newton_iterations = 0;
  int rounds = 0;
  std::vector<std::size_t> active;  // blocks carried by the final barrier solve
};

Eigen::MatrixXd lmi_block_value(const LmiBlock& block, const Eigen::MatrixXd& P,
                                const Eigen::VectorXd& lambda);

/// Decides whether some P >= I (and lambda >= 0) makes every block <= -margin I.
/// Solves min t s.t. B_k(P, lambda) <= t I, P >= I, tr P <= trace_factor n with a
/// log-barrier method over a growing subset of the blocks. A subset that is
/// infeasible proves the full set infeasible; a subset witness is accepted only
/// after every block passes a Cholesky test.
///
/// `hint`, when given, seeds the active subset and receives the final one.
/// Throws ConvergenceError if the barrier iteration stalls.
LmiResult lmi_feasible(const std::vector<LmiBlock>& blocks, Eigen::Index n,
                       const LmiOptions& options = {},
                       std::vector<std::size_t>* hint = nullptr);

}  // namespace dcopf
