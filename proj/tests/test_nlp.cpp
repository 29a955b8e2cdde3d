#include "dcopf/error.hpp"
#include "dcopf/nlp.hpp"

#include <doctest.h>

#include <random>

using namespace dcopf;
using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// Hock-Schittkowski 71.
struct Hs071 : NlpProblem {
  Index num_variables() const override { return 4; }
  Index num_constraints() const override { return 2; }
  void bounds(VectorXd& xl, VectorXd& xh, VectorXd& gl, VectorXd& gh) const override {
    xl = VectorXd::Ones(4);
    xh = VectorXd::Constant(4, 5.0);
    gl.resize(2);
    gh.resize(2);
    gl << 25.0, 40.0;
    gh << kInf, 40.0;
  }
  VectorXd initial_point() const override { return (VectorXd(4) << 1, 5, 5, 1).finished(); }
  double objective(const VectorXd& x) const override { return x(0) * x(3) * (x(0) + x(1) + x(2)) + x(2); }
  VectorXd objective_gradient(const VectorXd& x) const override {
    VectorXd g(4);
    g << x(3) * (2 * x(0) + x(1) + x(2)), x(0) * x(3), x(0) * x(3) + 1, x(0) * (x(0) + x(1) + x(2));
    return g;
  }
  VectorXd constraints(const VectorXd& x) const override {
    return (VectorXd(2) << x.prod(), x.squaredNorm()).finished();
  }
  MatrixXd constraint_jacobian(const VectorXd& x) const override {
    MatrixXd j(2, 4);
    for (int k = 0; k < 4; ++k) {
      double p = 1;
      for (int i = 0; i < 4; ++i)
        if (i != k) p *= x(i);
      j(0, k) = p;
      j(1, k) = 2 * x(k);
    }
    return j;
  }
  MatrixXd lagrangian_hessian(const VectorXd& x, double s, const VectorXd& l) const override {
    MatrixXd h = MatrixXd::Zero(4, 4);
    h(0, 0) = s * 2 * x(3);
    h(0, 1) = h(1, 0) = s * x(3);
    h(0, 2) = h(2, 0) = s * x(3);
    h(0, 3) = h(3, 0) = s * (2 * x(0) + x(1) + x(2));
    h(1, 3) = h(3, 1) = s * x(0);
    h(2, 3) = h(3, 2) = s * x(0);
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b)
        if (a != b) {
          double p = 1;
          for (int i = 0; i < 4; ++i)
            if (i != a && i != b) p *= x(i);
          h(a, b) += l(0) * p;
        }
    h.diagonal().array() += 2 * l(1);
    return h;
  }
};

// Convex QCQP with a known solution: the data are built from a chosen x*, a
// chosen active set and chosen multipliers so that x* is the unique KKT point.
//   min 1/2 x'Qx + c'x  s.t.  A x >= b (rows),  |x - centre|^2 <= rho,  lo <= x <= hi
struct PlantedQcqp : NlpProblem {
  MatrixXd Q, A;
  VectorXd c, b, centre, lo, hi, x_star;
  double rho = 0.0;

  PlantedQcqp(int n, int m, std::mt19937_64& rng) {
    std::normal_distribution<double> g;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    MatrixXd r(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) r(i, j) = g(rng);
    Q = r.transpose() * r + 0.5 * MatrixXd::Identity(n, n);
    A.resize(m, n);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) A(i, j) = g(rng);
    x_star.resize(n);
    for (int j = 0; j < n; ++j) x_star(j) = g(rng);
    lo = x_star.array() - 1.0 - u(rng);
    hi = x_star.array() + 1.0 + u(rng);
    // half of the linear rows active with positive multipliers
    b = A * x_star;
    VectorXd mu = VectorXd::Zero(m);
    for (int i = 0; i < m; ++i) {
      if (i % 2 == 0)
        mu(i) = 0.5 + u(rng);
      else
        b(i) -= 0.5 + u(rng);
    }
    // the ball is active too
    VectorXd dir(n);
    for (int j = 0; j < n; ++j) dir(j) = g(rng);
    dir.normalize();
    rho = 1.0 + u(rng);
    centre = x_star - std::sqrt(rho) * dir;
    const double nu = 0.5 + u(rng);
    // stationarity: Q x* + c - A' mu + 2 nu (x* - centre) = 0
    c = -Q * x_star + A.transpose() * mu - 2.0 * nu * (x_star - centre);
  }
  Index num_variables() const override { return Q.rows(); }
  Index num_constraints() const override { return A.rows() + 1; }
  void bounds(VectorXd& xl, VectorXd& xh, VectorXd& gl, VectorXd& gh) const override {
    xl = lo;
    xh = hi;
    gl.resize(A.rows() + 1);
    gh.resize(A.rows() + 1);
    gl << b, -kInf;
    gh << VectorXd::Constant(A.rows(), kInf), rho;
  }
  VectorXd initial_point() const override { return 0.5 * (lo + hi); }
  double objective(const VectorXd& x) const override { return 0.5 * x.dot(Q * x) + c.dot(x); }
  VectorXd objective_gradient(const VectorXd& x) const override { return Q * x + c; }
  VectorXd constraints(const VectorXd& x) const override {
    VectorXd g(A.rows() + 1);
    g << A * x, (x - centre).squaredNorm();
    return g;
  }
  MatrixXd constraint_jacobian(const VectorXd& x) const override {
    MatrixXd j(A.rows() + 1, A.cols());
    j << A, 2.0 * (x - centre).transpose();
    return j;
  }
  MatrixXd lagrangian_hessian(const VectorXd&, double s, const VectorXd& l) const override {
    return s * Q + 2.0 * l(A.rows()) * MatrixXd::Identity(Q.rows(), Q.cols());
  }
};

// min x0^2 + x1^2  s.t.  x0 + x1 >= lo,  x0 - x1 = 0  with optional box on x.
struct Tiny : NlpProblem {
  double lo_sum;
  double x_cap;
  Tiny(double s, double cap) : lo_sum(s), x_cap(cap) {}
  Index num_variables() const override { return 2; }
  Index num_constraints() const override { return 2; }
  void bounds(VectorXd& xl, VectorXd& xh, VectorXd& gl, VectorXd& gh) const override {
    xl = VectorXd::Constant(2, -kInf);
    xh = VectorXd::Constant(2, x_cap);
    gl = (VectorXd(2) << lo_sum, 0.0).finished();
    gh = (VectorXd(2) << kInf, 0.0).finished();
  }
  VectorXd initial_point() const override { return VectorXd::Zero(2); }
  double objective(const VectorXd& x) const override { return x.squaredNorm(); }
  VectorXd objective_gradient(const VectorXd& x) const override { return 2.0 * x; }
  VectorXd constraints(const VectorXd& x) const override {
    return (VectorXd(2) << x(0) + x(1), x(0) - x(1)).finished();
  }
  MatrixXd constraint_jacobian(const VectorXd&) const override {
    return (MatrixXd(2, 2) << 1, 1, 1, -1).finished();
  }
  MatrixXd lagrangian_hessian(const VectorXd&, double s, const VectorXd&) const override {
    return 2.0 * s * MatrixXd::Identity(2, 2);
  }
  std::string constraint_name(Index i) const override { return i == 0 ? "sum" : "diff"; }
};

}  // namespace

TEST_CASE("HS071 reaches the known optimum") {
  const NlpResult r = nlp_solve(Hs071{});
  CHECK(r.objective == doctest::Approx(17.0140173).epsilon(1e-7));
  CHECK(r.x(0) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(r.x(1) == doctest::Approx(4.7429996).epsilon(1e-6));
  CHECK(r.x(2) == doctest::Approx(3.8211499).epsilon(1e-6));
  CHECK(r.x(3) == doctest::Approx(1.3794082).epsilon(1e-6));
  CHECK(r.kkt_residual <= 1e-6);
  CHECK(r.primal_infeasibility <= 1e-8);
}

TEST_CASE("property: planted convex QCQPs are solved to their known optimum") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 30; ++trial) {
    // at most ceil(m/2) + 1 <= 3 active constraints, so n >= 3 keeps them independent
    const int n = 3 + trial % 5;
    const int m = 1 + trial % 4;
    CAPTURE(trial);
    const PlantedQcqp p(n, m, rng);
    const NlpResult r = nlp_solve(p);
    CHECK((r.x - p.x_star).lpNorm<Eigen::Infinity>() <= 1e-5 * std::max(1.0, p.x_star.lpNorm<Eigen::Infinity>()));
    // multipliers reproduce stationarity in the documented sign convention
    const VectorXd st = p.objective_gradient(r.x) + p.constraint_jacobian(r.x).transpose() * r.lambda - r.z_lo + r.z_hi;
    CHECK(st.lpNorm<Eigen::Infinity>() <= 1e-5 * std::max(1.0, p.objective_gradient(r.x).lpNorm<Eigen::Infinity>()));
  }
}

TEST_CASE("equality and inequality rows with a bound") {
  const NlpResult r = nlp_solve(Tiny(2.0, kInf));
  CHECK(r.x(0) == doctest::Approx(1.0).epsilon(1e-7));
  CHECK(r.x(1) == doctest::Approx(1.0).epsilon(1e-7));
  // grad f + J' lambda = 0 at (1, 1): lambda_sum = -2
  CHECK(r.lambda(0) == doctest::Approx(-2.0).epsilon(1e-6));
}

TEST_CASE("infeasible problems raise InfeasibleError naming a constraint") {
  try {
    nlp_solve(Tiny(2.0, 0.5));
    FAIL("expected InfeasibleError");
  } catch (const InfeasibleError& e) {
    CHECK_FALSE(e.binding_constraint().empty());
  }
}

TEST_CASE("fixed variables are eliminated") {
  struct Fixed : Tiny {
    Fixed() : Tiny(1.0, kInf) {}
    void bounds(VectorXd& xl, VectorXd& xh, VectorXd& gl, VectorXd& gh) const override {
      Tiny::bounds(xl, xh, gl, gh);
      xl(1) = xh(1) = 3.0;
      gl(1) = -kInf;
      gh(1) = kInf;
    }
  };
  const NlpResult r = nlp_solve(Fixed{});
  CHECK(r.x(1) == 3.0);
  CHECK(std::abs(r.x(0)) <= 1e-6);
}
