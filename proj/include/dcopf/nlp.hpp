#pragma once

#include <Eigen/Dense>

#include <limits>
#include <string>

namespace dcopf {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Smooth problem  min f(x)  s.t.  g_lo <= g(x) <= g_hi,  x_lo <= x <= x_hi.
/// Rows with g_lo == g_hi are equalities; variables with x_lo == x_hi are fixed.
/// Derivatives are dense.
class NlpProblem {
 public:
  virtual ~NlpProblem() = default;

  virtual Eigen::Index num_variables() const = 0;
  virtual Eigen::Index num_constraints() const = 0;
  virtual void bounds(Eigen::VectorXd& x_lo, Eigen::VectorXd& x_hi, Eigen::VectorXd& g_lo,
                      Eigen::VectorXd& g_hi) const = 0;
  virtual Eigen::VectorXd initial_point() const = 0;

  virtual double objective(const Eigen::VectorXd& x) const = 0;
  virtual Eigen::VectorXd objective_gradient(const Eigen::VectorXd& x) const = 0;
  virtual Eigen::VectorXd constraints(const Eigen::VectorXd& x) const = 0;
  virtual Eigen::MatrixXd constraint_jacobian(const Eigen::VectorXd& x) const = 0;
  /// Full symmetric Hessian of  sigma f(x) + sum_i lambda_i g_i(x).
  virtual Eigen::MatrixXd lagrangian_hessian(const Eigen::VectorXd& x, double sigma,
                                             const Eigen::VectorXd& lambda) const = 0;

  virtual std::string constraint_name(Eigen::Index i) const { return "g[" + std::to_string(i) + "]"; }
  virtual std::string variable_name(Eigen::Index i) const { return "x[" + std::to_string(i) + "]"; }
};

struct NlpOptions {
  int max_iterations = 500;
  double tolerance = 1e-8;          // scaled stationarity
  double constraint_tolerance = 1e-8;
  double complementarity_tolerance = 1e-6;
  double mu_init = 0.01;
  double bound_push = 1e-2;
  /// Constraint rows are scaled so their initial gradients are at most this; the
  /// objective is scaled into [1, this].
  double gradient_scale_limit = 100.0;
  bool verbose = false;
};

struct NlpResult {
  Eigen::VectorXd x;
  /// Constraint multipliers, unscaled:  grad f + J^T lambda - z_lo + z_hi = 0.
  Eigen::VectorXd lambda;
  Eigen::VectorXd z_lo;
  Eigen::VectorXd z_hi;
  double objective = 0.0;
  double stationarity = 0.0;
  double primal_infeasibility = 0.0;  // max violation of g and x bounds, unscaled
  double complementarity = 0.0;
  double kkt_residual = 0.0;  // max of the three scaled errors
  int iterations = 0;
};

/// Primal-dual interior-point method with a log barrier on bounds and slacks,
/// inertia-corrected Newton steps and an l1 merit line search.
/// Throws InfeasibleError (naming the most violated constraint) when the
/// iterates stall away from feasibility, ConvergenceError on the iteration cap.
NlpResult nlp_solve(const NlpProblem& problem, const NlpOptions& options = {});

}  // namespace dcopf
