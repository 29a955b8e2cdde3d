#include "dcopf/error.hpp"
#include "dcopf/powerflow.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace dcopf;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// High root of (vref - v)/R = v/R_l + p/v with R = R_s + R_line.
double two_bus_root(double vref, double p) {
  const NetworkCase c = two_bus_case();
  const double r = c.sources[0].series_resistance + c.lines[0].resistance;
  const double g = 1.0 / r + 1.0 / c.loads[0].shunt_resistance;
  const double b = vref / r;
  return (b + std::sqrt(b * b - 4.0 * g * p)) / (2.0 * g);
}

}  // namespace

TEST_CASE("two-bus power flow matches the closed-form root") {
  const GridEquations ge = grid_equations(two_bus_case());
  for (double vref : {425.0, 500.0, 575.0})
    for (double p : {0.0, 1e3, 25e3, 50e3, 200e3}) {
      CAPTURE(vref);
      CAPTURE(p);
      const PfSolution s = solve_pf(ge, VectorXd::Constant(1, vref), VectorXd::Constant(1, p));
      const double exact = two_bus_root(vref, p);
      CHECK(std::abs(s.v_load(0) - exact) <= 1e-8 * exact);
    }
}

TEST_CASE("no real root is reported as a convergence failure") {
  const GridEquations ge = grid_equations(two_bus_case());
  CHECK_THROWS_AS(solve_pf(ge, VectorXd::Constant(1, 500.0), VectorXd::Constant(1, 700e3)), ConvergenceError);
}

TEST_CASE("open circuit voltage is the zero-load solution") {
  const NetworkCase c = builtin_case("ieee14");
  const GridEquations ge = grid_equations(c);
  const VectorXd vref = VectorXd::LinSpaced(c.num_sources(), 480.0, 540.0);
  const PfSolution s = solve_pf(ge, vref, VectorXd::Zero(c.num_loads()));
  CHECK((s.v_load - open_circuit(ge, vref)).cwiseAbs().maxCoeff() <= 1e-9 * 540.0);
}

TEST_CASE("normalized impedance has nonpositive entries") {
  for (const auto& name : builtin_case_names()) {
    CAPTURE(name);
    const NetworkCase c = builtin_case(name);
    const GridEquations ge = grid_equations(c);
    const MatrixXd z = normalized_impedance(ge, open_circuit(ge, c.vref_max()));
    CHECK(z.maxCoeff() <= 0.0);
  }
}

TEST_CASE("property: converged solves balance power and energy") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (const char* name : {"ieee9", "ieee14", "ieee30", "ieee39", "ieee118"}) {
    CAPTURE(name);
    const NetworkCase c = builtin_case(name);
    const GridEquations ge = grid_equations(c);
    int converged = 0;
    for (int trial = 0; trial < 20; ++trial) {
      VectorXd vref(c.num_sources()), p(c.num_loads());
      for (Eigen::Index k = 0; k < vref.size(); ++k) vref(k) = 500.0 + 75.0 * u(rng);
      for (Eigen::Index j = 0; j < p.size(); ++j) p(j) = 25e3 * u(rng);
      PfSolution s;
      try {
        s = solve_pf(ge, vref, p);
      } catch (const ConvergenceError&) {
        continue;
      }
      ++converged;
      const double scale = std::max(1.0, p.lpNorm<Eigen::Infinity>());
      CHECK(s.residual <= 1e-8 * scale);
      CHECK(pf_mismatch(ge, vref, p, s.v_load).lpNorm<Eigen::Infinity>() <= 1e-8 * scale);
      const double loss = losses(ge, s, vref);
      CHECK(loss == doctest::Approx(resistive_dissipation(ge, s, vref)).epsilon(1e-8));
      CHECK(series_losses(ge, s, vref) <= loss);
      CHECK(series_losses(ge, s, vref) >= 0.0);
    }
    CHECK(converged > 0);
  }
}

TEST_CASE("losses grow with uniform load at fixed set points") {
  const NetworkCase c = builtin_case("ieee14");
  const GridEquations ge = grid_equations(c);
  const VectorXd vref = VectorXd::Constant(c.num_sources(), 540.0);
  const PfSolution a = solve_pf(ge, vref, VectorXd::Constant(c.num_loads(), 25e3));
  const PfSolution b = solve_pf(ge, vref, VectorXd::Constant(c.num_loads(), 50e3));
  CHECK(losses(ge, a, vref) < losses(ge, b, vref));
}

TEST_CASE("source voltages and line currents satisfy Kirchhoff's laws") {
  const NetworkCase c = builtin_case("ieee9");
  const GridEquations ge = grid_equations(c);
  const VectorXd vref = VectorXd::Constant(c.num_sources(), 530.0);
  const PfSolution s = solve_pf(ge, vref, c.p_nominal());
  // current balance at every bus: injections from sources minus line flows minus demand
  VectorXd net_source = VectorXd::Zero(c.num_sources());
  VectorXd net_load = VectorXd::Zero(c.num_loads());
  for (std::size_t k = 0; k < ge.lines.size(); ++k) {
    const auto& l = ge.lines[k];
    const double i = s.i_line(static_cast<Eigen::Index>(k));
    (l.from_is_source ? net_source : net_load)(l.from) -= i;
    (l.to_is_source ? net_source : net_load)(l.to) += i;
  }
  for (Eigen::Index k = 0; k < c.num_sources(); ++k)
    net_source(k) += (vref(k) - s.v_source(k)) / ge.source_resistance(k);
  for (Eigen::Index j = 0; j < c.num_loads(); ++j)
    net_load(j) -= s.v_load(j) / ge.load_resistance(j) + c.p_nominal()(j) / s.v_load(j);
  CHECK(net_source.cwiseAbs().maxCoeff() <= 1e-8);
  CHECK(net_load.cwiseAbs().maxCoeff() <= 1e-6);
}
