#include "dcopf/dynsim.hpp"
#include "dcopf/error.hpp"

#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>

using namespace dcopf;
using Eigen::Index;
using Eigen::VectorXd;

namespace {

double max_rel_gap(const VectorXd& a, const VectorXd& b) {
  return (a - b).lpNorm<Eigen::Infinity>() / std::max(1.0, b.lpNorm<Eigen::Infinity>());
}

}  // namespace

TEST_CASE("an equilibrium start stays put") {
  for (const char* name : {"ieee9", "ieee14"}) {
    CAPTURE(name);
    const NetworkCase c = builtin_case(name);
    const DynamicModel m = make_dynamic_model(c);
    const VectorXd vref = VectorXd::Constant(c.num_sources(), 540.0);
    const Scenario s = constant_scenario(vref, c.p_nominal(), 10.0);
    const Trajectory t = simulate(m, s, 10.0);
    REQUIRE(t.diagnostic.empty());
    const VectorXd x_eq = equilibrium_state(m.ge, vref, c.p_nominal());
    for (const auto& x : t.states) CHECK(max_rel_gap(x, x_eq) <= 1e-6);
    REQUIRE(t.flags.size() == 1);
    CHECK(t.flags[0].converged_to_equilibrium);
    CHECK_FALSE(t.unstable());
    CHECK(t.times.back() == doctest::Approx(10.0));
  }
}

TEST_CASE("the equilibrium state zeroes the right-hand side") {
  const NetworkCase c = builtin_case("ieee9");
  const DynamicModel m = make_dynamic_model(c);
  const VectorXd vref = VectorXd::LinSpaced(c.num_sources(), 500.0, 560.0);
  const VectorXd x = equilibrium_state(m.ge, vref, c.p_nominal());
  CHECK(rhs(m.ss, x, vref, c.p_nominal()).lpNorm<Eigen::Infinity>() <= 1e-6);
}

TEST_CASE("unloaded networks are linear and Hurwitz") {
  for (const char* name : {"twobus", "ieee9", "ieee14"}) {
    CAPTURE(name);
    const NetworkCase c = std::string(name) == "twobus" ? two_bus_case() : builtin_case(name);
    const DynamicModel m = make_dynamic_model(c);
    const Spectrum s = equilibrium_spectrum(m, c.vref_max(), VectorXd::Zero(c.num_loads()));
    CHECK(s.stable);
    CHECK(s.abscissa < 0.0);
    CHECK(s.eigenvalues.size() == static_cast<std::size_t>(m.ss.A.rows()));
  }
}

TEST_CASE("property: linearised stability agrees with perturbed simulations") {
  const NetworkCase c = two_bus_case();
  const DynamicModel m = make_dynamic_model(c);
  int stable = 0, unstable = 0;
  for (double vref : {425.0, 450.0, 475.0, 500.0, 525.0, 575.0})
    for (double p : {0.0, 20e3, 35e3, 50e3}) {
      CAPTURE(vref);
      CAPTURE(p);
      const VectorXd v = VectorXd::Constant(1, vref), pv = VectorXd::Constant(1, p);
      const Spectrum sp = equilibrium_spectrum(m, v, pv);
      Scenario s = constant_scenario(v, pv, 5.0);
      s.x0 = equilibrium_state(m.ge, v, pv) * 1.001;
      const Trajectory t = simulate(m, s, 5.0);
      if (sp.stable) {
        ++stable;
        CHECK(t.flags.back().converged_to_equilibrium);
        CHECK_FALSE(t.unstable());
      } else {
        ++unstable;
        CHECK_FALSE(t.flags.back().converged_to_equilibrium);
      }
    }
  CHECK(stable > 0);
  CHECK(unstable > 0);
}

TEST_CASE("implicit and explicit integrators agree") {
  const NetworkCase c = builtin_case("ieee9");
  const DynamicModel m = make_dynamic_model(c);
  const VectorXd vref = VectorXd::Constant(c.num_sources(), 540.0);
  Scenario s;
  s.vref = vref;
  s.segments = {{0.05, c.p_nominal()}, {0.05, c.p_max()}};
  SimOptions implicit;
  implicit.rel_tol = implicit.abs_tol = 1e-8;
  SimOptions explicit_rk = implicit;
  explicit_rk.explicit_rk = true;
  const Trajectory a = simulate(m, s, 0.1, implicit);
  const Trajectory b = simulate(m, s, 0.1, explicit_rk);
  REQUIRE(a.diagnostic.empty());
  REQUIRE(b.diagnostic.empty());
  CHECK(max_rel_gap(a.states.back(), b.states.back()) <= 1e-5);
}

TEST_CASE("halving the tolerance changes the answer by no more than the tolerance") {
  const NetworkCase c = builtin_case("ieee9");
  const DynamicModel m = make_dynamic_model(c);
  Scenario s;
  s.vref = VectorXd::Constant(c.num_sources(), 530.0);
  s.segments = {{0.05, c.p_nominal()}, {0.05, c.p_max()}};
  SimOptions o1;
  SimOptions o2;
  o2.rel_tol = o1.rel_tol / 2;
  o2.abs_tol = o1.abs_tol / 2;
  const Trajectory a = simulate(m, s, 0.1, o1);
  const Trajectory b = simulate(m, s, 0.1, o2);
  CHECK(max_rel_gap(a.states.back(), b.states.back()) <= 1e-4);
  CHECK(a.max_error_estimate <= 1.0);
  CHECK(b.steps_accepted >= a.steps_accepted);
}

TEST_CASE("ramp scenario: one segment per level") {
  const NetworkCase c = builtin_case("ieee14");
  const Scenario s = ramp_scenario(c, VectorXd::Constant(c.num_sources(), 530.0), {});
  REQUIRE(s.segments.size() == 11);
  CHECK(s.segments.front().p(0) == 25e3);
  CHECK(s.segments.back().p(0) == 50e3);
  double total = 0.0;
  for (const auto& seg : s.segments) total += seg.duration;
  CHECK(total == doctest::Approx(27.5));
  CHECK_NOTHROW(check_scenario(c, s));
}

TEST_CASE("scenario validation") {
  const NetworkCase c = builtin_case("ieee9");
  const VectorXd vref = VectorXd::Constant(c.num_sources(), 530.0);
  CHECK_THROWS_AS(check_scenario(c, constant_scenario(vref, c.p_nominal(), 0.0)), CaseError);
  CHECK_THROWS_AS(check_scenario(c, constant_scenario(VectorXd::Ones(1), c.p_nominal(), 1.0)), CaseError);
  CHECK_THROWS_AS(check_scenario(c, constant_scenario(vref, VectorXd::Ones(2), 1.0)), CaseError);
  Scenario high = constant_scenario(vref, c.p_max() * 1.5, 1.0);
  CHECK_THROWS_AS(check_scenario(c, high), CaseError);
  high.allow_out_of_set = true;
  CHECK_NOTHROW(check_scenario(c, high));
}

TEST_CASE("overloading collapses the load voltage") {
  const NetworkCase c = two_bus_case();
  const DynamicModel m = make_dynamic_model(c);
  Scenario s = constant_scenario(VectorXd::Constant(1, 500.0), VectorXd::Constant(1, 800e3), 2.0);
  s.allow_out_of_set = true;
  s.x0 = equilibrium_state(m.ge, s.vref, VectorXd::Constant(1, 50e3));
  const Trajectory t = simulate(m, s, 2.0);
  CHECK(t.unstable());
  CHECK(t.first_unstable_segment() == std::optional<std::size_t>(0));
  CHECK_FALSE(t.diagnostic.empty());
}

TEST_CASE("trajectory CSV has one column per state plus flags") {
  const NetworkCase c = builtin_case("ieee9");
  const DynamicModel m = make_dynamic_model(c);
  const Trajectory t = simulate(m, constant_scenario(c.vref_max(), c.p_nominal(), 0.01), 0.01);
  const auto path = std::filesystem::temp_directory_path() / "dcopf_traj.csv";
  write_trajectory_csv(m.ss, t, path);
  std::ifstream in(path);
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  const auto count = [](const std::string& s) { return std::count(s.begin(), s.end(), ',') + 1; };
  CHECK(header.rfind("t,", 0) == 0);
  CHECK(header.find("vl_") != std::string::npos);
  CHECK(count(header) == count(row));
  CHECK(count(header) > m.ss.A.rows());
  std::size_t lines = 2;
  while (std::getline(in, row)) ++lines;
  CHECK(lines == t.times.size() + 1);
  std::filesystem::remove(path);
}
