#include "dcopf/error.hpp"
#include "dcopf/robustopf.hpp"

#include <doctest.h>

#include <random>

using namespace dcopf;
using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// Worst relative mismatch of gradient, Jacobian and Lagrangian Hessian against
// central differences at x.
double derivative_error(const NlpProblem& p, const VectorXd& x, std::mt19937_64& rng) {
  const Index n = p.num_variables(), m = p.num_constraints();
  std::normal_distribution<double> g;
  VectorXd lam(m);
  for (Index i = 0; i < m; ++i) lam(i) = g(rng);
  const double sigma = 0.7;
  const MatrixXd J = p.constraint_jacobian(x);
  const VectorXd grad = p.objective_gradient(x);
  const MatrixXd H = p.lagrangian_hessian(x, sigma, lam);
  double worst = (H - H.transpose()).cwiseAbs().maxCoeff() / std::max(1.0, H.cwiseAbs().maxCoeff());
  for (Index k = 0; k < n; ++k) {
    const double h = 1e-6 * std::max(1.0, std::abs(x(k)));
    VectorXd xp = x, xm = x;
    xp(k) += h;
    xm(k) -= h;
    const VectorXd dc = (p.constraints(xp) - p.constraints(xm)) / (2 * h);
    worst = std::max(worst, (dc - J.col(k)).lpNorm<Eigen::Infinity>() / std::max(1.0, J.col(k).lpNorm<Eigen::Infinity>()));
    const double df = (p.objective(xp) - p.objective(xm)) / (2 * h);
    worst = std::max(worst, std::abs(df - grad(k)) / std::max(1.0, std::abs(grad(k))));
    const VectorXd dl = (sigma * (p.objective_gradient(xp) - p.objective_gradient(xm)) +
                         (p.constraint_jacobian(xp) - p.constraint_jacobian(xm)).transpose() * lam) /
                        (2 * h);
    worst = std::max(worst, (dl - H.col(k)).lpNorm<Eigen::Infinity>() / std::max(1.0, H.col(k).lpNorm<Eigen::Infinity>()));
  }
  return worst;
}

StabilitySet fixed_floor(const NetworkCase& c, double v) {
  StabilitySet s;
  s.v_floor = VectorXd::Constant(c.num_loads(), v);
  return s;
}

}  // namespace

TEST_CASE("property: OPF derivatives match central differences") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (const char* name : {"twobus", "ieee9", "ieee14"}) {
    CAPTURE(name);
    const NetworkCase c = std::string(name) == "twobus" ? two_bus_case() : builtin_case(name);
    const GridEquations ge = grid_equations(c);
    const auto nominal = nominal_opf_problem(c, ge);
    for (auto mode : {WorstCaseMode::l1_endpoint, WorstCaseMode::exact}) {
      OpfOptions o;
      o.worst_case = mode;
      const auto robust = robust_opf_problem(c, ge, VectorXd::Constant(c.num_loads(), 470.0), c.v_max(),
                                             VectorXd::Constant(c.num_sources(), 540.0), o);
      for (const NlpProblem* p : {nominal.get(), robust.get()}) {
        VectorXd x = p->initial_point();
        CHECK(derivative_error(*p, x, rng) <= 1e-5);
        for (Index k = 0; k < x.size(); ++k) x(k) *= 1.0 + 0.01 * u(rng);
        CHECK(derivative_error(*p, x, rng) <= 1e-5);
      }
    }
  }
}

TEST_CASE("worst-case load: farther endpoint, ties toward p_max") {
  NetworkCase c = builtin_case("ieee9");
  CHECK((worst_case_load(c) - c.p_max()).cwiseAbs().maxCoeff() == 0.0);
  c.loads[0].p_nominal = 40e3;
  c.loads[1].p_nominal = 10e3;
  const VectorXd pm = worst_case_load(c);
  CHECK(pm(0) == c.loads[0].p_min);
  CHECK(pm(1) == c.loads[1].p_max);
  const auto corners = worst_case_loads(c, WorstCaseMode::exact);
  REQUIRE(corners.size() == 2);
  CHECK((corners[0] - c.p_max()).cwiseAbs().maxCoeff() == 0.0);
  CHECK((corners[1] - c.p_min()).cwiseAbs().maxCoeff() == 0.0);
  CHECK(worst_case_loads(c, WorstCaseMode::l1_endpoint).size() == 1);
  CHECK(parse_worst_case_mode(to_string(WorstCaseMode::exact)) == WorstCaseMode::exact);
}

TEST_CASE("property: the box deviation norm bounds every sampled deviation") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (const char* name : {"ieee9", "ieee14", "ieee30"}) {
    CAPTURE(name);
    NetworkCase c = builtin_case(name);
    for (auto& l : c.loads) l.p_nominal = 50e3 * u(rng);
    const GridEquations ge = grid_equations(c);
    const MatrixXd z = normalized_impedance(ge, open_circuit(ge, c.vref_max()));
    const double bound = box_deviation_norm(z, c);
    double corner = 0.0;
    for (const auto& p : worst_case_loads(c, WorstCaseMode::exact))
      corner = std::max(corner, (z * (c.p_nominal() - p)).lpNorm<Eigen::Infinity>());
    CHECK(bound == doctest::Approx(corner).epsilon(1e-12));
    for (int s = 0; s < 500; ++s) {
      VectorXd p(c.num_loads());
      for (Index j = 0; j < p.size(); ++j) p(j) = c.loads[static_cast<std::size_t>(j)].p_max * u(rng);
      CHECK((z * (c.p_nominal() - p)).lpNorm<Eigen::Infinity>() <= bound * (1 + 1e-12));
    }
  }
}

TEST_CASE("property: two-bus certificate band contains the Newton solution") {
  const NetworkCase c = two_bus_case();
  const GridEquations ge = grid_equations(c);
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int held = 0;
  for (int s = 0; s < 300; ++s) {
    const VectorXd vref = VectorXd::Constant(1, 450.0 + 125.0 * u(rng));
    const VectorXd ps = VectorXd::Constant(1, 100e3 * u(rng));
    const VectorXd p = VectorXd::Constant(1, 600e3 * u(rng));
    SolvabilityCertificate cert;
    try {
      cert = certify_solvability(ge, vref, ps, p);
    } catch (const ConvergenceError&) {
      continue;
    }
    if (!cert.holds) continue;
    ++held;
    const PfSolution pf = solve_pf(ge, vref, p);
    CHECK(pf.v_load(0) >= cert.band_lo(0) - 1e-9 * pf.v_load(0));
    CHECK(pf.v_load(0) <= cert.band_hi(0) + 1e-9 * pf.v_load(0));
    CHECK(cert.radius_r >= 0.0);
  }
  CHECK(held > 50);
}

TEST_CASE("nominal OPF respects every operational bound") {
  for (const char* name : {"ieee9", "ieee14", "ieee30", "ieee39", "ieee118"}) {
    CAPTURE(name);
    const NetworkCase c = builtin_case(name);
    const NominalOpfSolution s = solve_nominal_opf(c);
    CHECK((s.vref.array() >= c.vref_min().array() - 1e-9).all());
    CHECK((s.vref.array() <= c.vref_max().array() + 1e-9).all());
    CHECK((s.v_star.array() >= c.v_min().array() * (1 - 1e-8)).all());
    CHECK((s.v_star.array() <= c.v_max().array() * (1 + 1e-8)).all());
    CHECK(s.kkt_residual <= 1e-6);
    CHECK(s.losses > 0.0);
    CHECK(s.objective == doctest::Approx(s.losses).epsilon(1e-6));
  }
}

TEST_CASE("ieee14 robust OPF: certified, consistent, and no cheaper than nominal") {
  const NetworkCase c = builtin_case("ieee14");
  const StabilitySet floor = fixed_floor(c, 481.8);
  const NominalOpfSolution nominal = solve_nominal_opf(c);
  RobustOpfSolution l1, exact;
  {
    OpfOptions o;
    l1 = solve_robust_opf(c, floor, o);
    o.worst_case = WorstCaseMode::exact;
    exact = solve_robust_opf(c, floor, o);
  }
  for (const RobustOpfSolution* s : {&l1, &exact}) {
    CHECK(s->certificate.holds);
    CHECK(s->r_bar == doctest::Approx(s->certificate.radius_r).epsilon(1e-9));
    CHECK((s->band_lo.array() >= s->v_lower.array() - 1e-6).all());
    CHECK((s->band_hi.array() <= s->v_upper.array() + 1e-6).all());
    CHECK((s->v_lower.array() >= 481.8).all());
    CHECK(s->gamma_bar > 0.0);
    CHECK(s->aux.a < s->u_min * s->u_min);
    CHECK(s->objective >= nominal.objective * (1 - 1e-9));
    CHECK(s->kkt_residual <= 1e-6);
  }
  // the nominal point is the midpoint of the box, so both modes see the same deviation
  CHECK(l1.objective == doctest::Approx(exact.objective).epsilon(1e-6));
}

TEST_CASE("widening the load interval eventually makes the robust OPF infeasible") {
  NetworkCase c = two_bus_case();
  const StabilitySet floor = fixed_floor(c, 466.6);
  c.loads[0].p_max = 250e3;
  const RobustOpfSolution ok = solve_robust_opf(c, floor);
  CHECK(ok.certificate.holds);
  c.loads[0].p_max = 300e3;
  CHECK_THROWS_AS(solve_robust_opf(c, floor), InfeasibleError);
}

TEST_CASE("a floor above every reachable band is infeasible") {
  const NetworkCase c = builtin_case("ieee9");
  CHECK_THROWS_AS(solve_robust_opf(c, fixed_floor(c, 560.0)), InfeasibleError);
}
