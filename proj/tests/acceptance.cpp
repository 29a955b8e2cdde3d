// Acceptance suite: one PASS/FAIL line per criterion.
//   acceptance                 run all nine
//   acceptance --criterion N   run one; exit status 1 when it fails

#include "dcopf/dynsim.hpp"
#include "dcopf/error.hpp"
#include "dcopf/harness.hpp"
#include "dcopf/powerflow.hpp"
#include "dcopf/robustopf.hpp"
#include "dcopf/stabset.hpp"
#include "dcopf/statespace.hpp"

#include <Eigen/Eigenvalues>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>

using namespace dcopf;
using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string vec(const VectorXd& v, int precision = 1) {
  std::ostringstream o;
  o.setf(std::ios::fixed);
  o.precision(precision);
  o << "(";
  for (Index i = 0; i < v.size(); ++i) o << (i ? ", " : "") << v(i);
  o << ")";
  return o.str();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

// Results shared between criteria, computed on first use.
struct Shared {
  std::map<std::string, StabilitySet> sets;
  std::optional<NominalOpfSolution> nominal14;
  std::optional<RobustOpfSolution> robust14;

  const StabilitySet& stabset(const std::string& name, std::optional<StabilityMethod> method = {}) {
    const std::string key = name + "/" + (method ? to_string(*method) : "auto");
    auto it = sets.find(key);
    if (it == sets.end()) {
      const NetworkCase c = resolve_case(name);
      it = sets.emplace(key, robust_stability_set(c, assemble(c), std::nullopt, method)).first;
    }
    return it->second;
  }
  const NominalOpfSolution& nominal() {
    if (!nominal14) nominal14 = solve_nominal_opf(resolve_case("ieee14_dc"));
    return *nominal14;
  }
  const RobustOpfSolution& robust() {
    if (!robust14) robust14 = solve_robust_opf(resolve_case("ieee14_dc"), stabset("ieee14_dc"));
    return *robust14;
  }
};

Shared shared;

Outcome criterion1() {
  const auto t0 = Clock::now();
  std::ostringstream d;
  bool pass = true;
  for (const char* name : {"ieee9", "ieee14_dc"}) {
    Algorithm1Options o;
    o.samples = 1000;
    o.seed = 1;
    const Algorithm1Report r = run_algorithm1(resolve_case(name), o);
    const auto& v = r.validation;
    pass = pass && v.passed();
    d << name << ": " << v.failures.size() << " failures / " << v.total() << " samples";
    if (!v.failures.empty()) d << " (first: " << v.failures.front().check << ", " << v.failures.front().detail << ")";
    d << "; ";
  }
  const double t = seconds_since(t0);
  pass = pass && t <= 300.0;
  d << "runtime " << t << " s (limit 300 s)";
  return {pass, d.str()};
}

Outcome criterion2() {
  const auto t0 = Clock::now();
  const NetworkCase c = resolve_case("ieee14_dc");
  const DynamicModel m = make_dynamic_model(c);
  const Trajectory nominal = simulate(m, ramp_scenario(c, shared.nominal().vref, {}), 27.5);
  const Trajectory robust = simulate(m, ramp_scenario(c, shared.robust().vref, {}), 27.5);
  std::ostringstream d;
  bool pass = true;
  const auto k = nominal.first_unstable_segment();
  if (k) {
    const auto& f = nominal.flags[*k];
    const double p = f.p.maxCoeff();
    d << "nominal: unstable at " << p / 1e3 << " kW, t = " << f.t_start << " s";
    if (!nominal.diagnostic.empty()) d << " (" << nominal.diagnostic << ")";
    pass = pass && p >= 30e3 && p <= 50e3;
  } else {
    d << "nominal: no instability detected";
    pass = false;
  }
  const bool robust_ok = !robust.unstable() && robust.diagnostic.empty() && robust.times.back() >= 27.5 - 1e-9 &&
                         robust.flags.back().p.minCoeff() == 50e3;
  d << "; robust: " << (robust_ok ? "ramp completes to 50 kW, no flags" : "instability or early stop " + robust.diagnostic);
  pass = pass && robust_ok;
  const double t = seconds_since(t0);
  pass = pass && t <= 120.0;
  d << "; runtime " << t << " s (limit 120 s, includes stability set and OPFs)";
  return {pass, d.str()};
}

Outcome criterion3() {
  const StabilitySet& s = shared.stabset("ieee14_dc");
  const double lo = s.v_floor.minCoeff(), hi = s.v_floor.maxCoeff();
  std::ostringstream d;
  d << "v_floor in [" << lo << ", " << hi << "] V vs 500 V +- 10%; beta = " << s.beta << ", delta0 = "
    << s.delta0(0) << " W (uniform p_max, every load), method " << to_string(s.method);
  return {lo >= 450.0 && hi <= 550.0, d.str()};
}

Outcome criterion4() {
  const VectorXd robust_ref = (VectorXd(5) << 544.5, 553.4, 543.8, 543.2, 549.9).finished();
  const VectorXd nominal_ref = (VectorXd(5) << 455.6, 462.9, 454.9, 454.4, 460.0).finished();
  const VectorXd nominal = shared.nominal().vref;
  std::ostringstream d;
  bool pass = true;
  d << "nominal " << vec(nominal);
  if (nominal.size() == 5) {
    const double dev = (nominal - nominal_ref).cwiseQuotient(nominal_ref).cwiseAbs().maxCoeff();
    d << " max dev " << 100 * dev << "%";
    pass = pass && dev <= 0.02;
  } else {
    pass = false;
  }
  try {
    const VectorXd robust = shared.robust().vref;
    const double dev = (robust - robust_ref).cwiseQuotient(robust_ref).cwiseAbs().maxCoeff();
    d << "; robust " << vec(robust) << " max dev " << 100 * dev << "%";
    pass = pass && dev <= 0.02;
  } catch (const Error& e) {
    d << "; robust OPF failed: " << e.what();
    pass = false;
  }
  const StabilitySet& s = shared.stabset("ieee14_dc");
  d << "; beta = " << s.beta << ", delta0 = " << s.delta0(0) << " W";
  return {pass, d.str()};
}

Outcome criterion5() {
  const RobustOpfSolution& r = shared.robust();
  const double ratio = (r.r_bar * r.certificate.w.cwiseQuotient(r.v_star)).maxCoeff();
  std::ostringstream d;
  d << "band ratio max_j r w_j / v*_j = " << ratio << " (required [0.015, 0.03]); r = " << r.r_bar;
  return {ratio >= 0.015 && ratio <= 0.03, d.str()};
}

Outcome criterion6() {
  const NetworkCase c = two_bus_case();
  const GridEquations ge = grid_equations(c);
  const double rsum = c.sources[0].series_resistance + c.lines[0].resistance;
  const double g = 1.0 / rsum + 1.0 / c.loads[0].shunt_resistance;
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 1.0);

  double worst_root = 0.0;
  int roots = 0;
  for (int s = 0; s < 200; ++s) {
    const double vref = 425.0 + 150.0 * u(rng), p = 100e3 * u(rng);
    const double b = vref / rsum;
    const double exact = (b + std::sqrt(b * b - 4.0 * g * p)) / (2.0 * g);
    const PfSolution pf = solve_pf(ge, VectorXd::Constant(1, vref), VectorXd::Constant(1, p));
    worst_root = std::max(worst_root, std::abs(pf.v_load(0) - exact) / exact);
    ++roots;
  }

  int held = 0, not_held = 0, disagreements = 0, attempts = 0;
  const VectorXd p_star = c.p_nominal();
  while (held < 200 && attempts < 100000) {
    ++attempts;
    const VectorXd vref = VectorXd::Constant(1, 425.0 + 150.0 * u(rng));
    const VectorXd p = VectorXd::Constant(1, 650e3 * u(rng));
    const SolvabilityCertificate cert = certify_solvability(ge, vref, p_star, p);
    std::optional<double> v;
    const double b = vref(0) / rsum;
    if (b * b - 4.0 * g * p(0) >= 0.0) v = solve_pf(ge, vref, p).v_load(0);
    if (cert.holds) {
      ++held;
      const bool inside = v && *v >= cert.band_lo(0) * (1 - 1e-12) && *v <= cert.band_hi(0) * (1 + 1e-12);
      if (!inside) ++disagreements;
    } else {
      ++not_held;
      const bool precondition_fails = cert.a >= cert.u_min * cert.u_min || cert.gamma_s <= 0.0;
      if (v && !precondition_fails) ++disagreements;
    }
  }
  std::ostringstream d;
  d << "closed-form max rel err " << worst_root << " over " << roots << " solves; certificate: " << held
    << " holds, " << not_held << " not, " << disagreements << " disagreements";
  return {worst_root <= 1e-8 && held == 200 && disagreements == 0, d.str()};
}

Outcome criterion7() {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst_fd = 0.0, worst_residual = 0.0;
  int solves = 0;
  std::vector<std::string> names = builtin_case_names();
  for (const auto& name : names) {
    const NetworkCase c = builtin_case(name);
    const StateSpaceModel m = assemble(c);
    const GridEquations ge = grid_equations(c);
    const VectorXd vref = VectorXd::Constant(c.num_sources(), 500.0);
    for (int trial = 0; trial < 50; ++trial) {
      VectorXd x(m.num_states());
      for (Index k = 0; k < x.size(); ++k) x(k) = 450.0 + 100.0 * u(rng);
      for (Index k = 0; k < m.index_map.num_lines; ++k) x(k) = 200.0 * (u(rng) - 0.5);
      VectorXd p(c.num_loads());
      for (Index j = 0; j < p.size(); ++j) p(j) = c.loads[static_cast<std::size_t>(j)].p_max * u(rng);
      const MatrixXd J = jacobian(m, load_delta(p, m.load_voltages(x)));
      MatrixXd fd(J.rows(), J.cols());
      for (Index k = 0; k < x.size(); ++k) {
        const double h = 1e-4 * std::max(1.0, std::abs(x(k)));
        VectorXd xp = x, xm = x;
        xp(k) += h;
        xm(k) -= h;
        fd.col(k) = (rhs(m, xp, vref, p) - rhs(m, xm, vref, p)) / (2.0 * h);
      }
      worst_fd = std::max(worst_fd, (fd - J).cwiseAbs().maxCoeff() / J.cwiseAbs().maxCoeff());

      VectorXd vr(c.num_sources());
      for (Index k = 0; k < vr.size(); ++k) vr(k) = c.sources[static_cast<std::size_t>(k)].vref_min +
                                                    u(rng) * (c.sources[static_cast<std::size_t>(k)].vref_max -
                                                              c.sources[static_cast<std::size_t>(k)].vref_min);
      try {
        const PfSolution s = solve_pf(ge, vr, p);
        worst_residual = std::max(worst_residual, pf_mismatch(ge, vr, p, s.v_load).lpNorm<Eigen::Infinity>() /
                                                      std::max(1.0, p.lpNorm<Eigen::Infinity>()));
        ++solves;
      } catch (const ConvergenceError&) {
      }
    }
  }

  double worst_bracket = 0.0;
  for (const char* name : {"twobus", "ieee9", "ieee14_dc"}) {
    const StabilitySet& s = shared.stabset(name);
    worst_bracket = std::max(worst_bracket, s.beta / s.beta_lo);
  }
  const StabilitySet& single9 = shared.stabset("ieee9", StabilityMethod::single_lmi);
  worst_bracket = std::max(worst_bracket, single9.beta / single9.beta_lo);

  double worst_scalar = 0.0;
  for (double a : {0.5, 2.0, 37.0}) {
    StateSpaceModel s;
    s.A = MatrixXd::Constant(1, 1, -a);
    s.B = MatrixXd::Zero(1, 0);
    s.Cmat = MatrixXd::Constant(1, 1, -1.0);
    s.D = MatrixXd::Constant(1, 1, 1.0);
    s.index_map.num_loads = 1;
    s.index_map.load_voltage_index["x"] = 0;
    StabilityOptions o;
    o.bracket_ratio = 1.0 + 1e-8;
    for (auto method : {StabilityMethod::vertex_lmi, StabilityMethod::single_lmi}) {
      const GevpResult g = gevp_max_scaling(s, VectorXd::Ones(1), method, o);
      worst_scalar = std::max(worst_scalar, std::abs(g.beta * a - 1.0));
    }
  }
  std::ostringstream d;
  d << "FD Jacobian " << worst_fd << " (50 states x " << names.size() << " cases); residual " << worst_residual
    << " over " << solves << " solves; bracket ratio " << worst_bracket << "; scalar beta rel err " << worst_scalar;
  return {worst_fd <= 1e-6 && worst_residual <= 1e-8 && worst_bracket <= 1.001 && worst_scalar <= 1e-6, d.str()};
}

Outcome criterion8() {
  const std::vector<std::string> cases = {"ieee9", "ieee30", "ieee39", "ieee69", "ieee118"};
  const auto rows = bench(cases, 10);
  bool pass = rows.size() == cases.size();
  std::ostringstream d;
  for (const auto& r : rows) {
    const bool ok = r.ok() && r.ratio() <= 10.0;
    pass = pass && ok;
    d << r.case_name << " ";
    if (r.ok())
      d << "ratio " << r.ratio();
    else
      d << "nominal " << r.nominal_status << " / robust " << r.robust_status;
    d << "; ";
  }
  return {pass, d.str()};
}

Outcome criterion9() {
  const NetworkCase c = builtin_case("ieee9");
  const StateSpaceModel m = assemble(c);
  const StabilitySet& vertex = shared.stabset("ieee9", StabilityMethod::vertex_lmi);
  const StabilitySet& single = shared.stabset("ieee9", StabilityMethod::single_lmi);
  const double alpha_v = 1.0 / vertex.beta, alpha_s = 1.0 / single.beta;

  // soundness: sampled Jacobians in each certified box are Hurwitz and decrease x'Px
  int unsound = 0;
  for (const StabilitySet* s : {&vertex, &single}) {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const VectorXd half = s->delta0 / s->beta;
    for (int k = 0; k < 500; ++k) {
      VectorXd d(half.size());
      for (Index j = 0; j < d.size(); ++j) d(j) = u(rng) * half(j);
      const MatrixXd J = jacobian(m, d);
      const MatrixXd L = s->witness.P * J + J.transpose() * s->witness.P;
      if (spectral_abscissa(J) >= 0.0 || Eigen::SelfAdjointEigenSolver<MatrixXd>(L).eigenvalues().maxCoeff() >= 0.0)
        ++unsound;
    }
  }
  const double volume = std::pow(alpha_s / alpha_v, static_cast<double>(c.num_loads()));
  std::ostringstream d;
  d << "alpha single " << alpha_s << " vs vertex " << alpha_v << "; volume ratio " << volume
    << " (required [0.1, 1]); unsound samples " << unsound << " / 1000";
  return {alpha_s <= alpha_v && volume >= 0.1 && volume <= 1.0 && unsound == 0, d.str()};
}

const std::map<int, std::function<Outcome()>> kCriteria = {
    {1, criterion1}, {2, criterion2}, {3, criterion3}, {4, criterion4}, {5, criterion5},
    {6, criterion6}, {7, criterion7}, {8, criterion8}, {9, criterion9},
};

bool run(int n) {
  Outcome o;
  try {
    o = kCriteria.at(n)();
  } catch (const std::exception& e) {
    o = {false, std::string("error: ") + e.what()};
  }
  std::cout << "criterion " << n << ": " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail << std::endl;
  return o.pass;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> which;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--criterion" && i + 1 < argc) {
      which.push_back(std::atoi(argv[++i]));
    } else {
      std::cerr << "usage: acceptance [--criterion N]...\n";
      return 2;
    }
  }
  if (which.empty())
    for (const auto& [n, f] : kCriteria) which.push_back(n);
  bool all = true;
  for (int n : which) {
    if (!kCriteria.count(n)) {
      std::cerr << "no criterion " << n << "\n";
      return 2;
    }
    all = run(n) && all;
  }
  return all ? 0 : 1;
}
