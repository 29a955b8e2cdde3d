// Command-line front end: power flow, stability set, OPF, simulation,
// end-to-end pipeline, validation and benchmarks.

#include "dcopf/dynsim.hpp"
#include "dcopf/error.hpp"
#include "dcopf/harness.hpp"
#include "dcopf/netcase.hpp"
#include "dcopf/powerflow.hpp"
#include "dcopf/robustopf.hpp"
#include "dcopf/stabset.hpp"
#include "dcopf/statespace.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

namespace {

using dcopf::NetworkCase;
using Eigen::VectorXd;

constexpr int kExitValidationFailed = 1;
constexpr int kExitError = 2;

std::vector<double> split_numbers(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    const double x = std::stod(item, &used);
    if (used != item.size()) throw dcopf::CaseError("not a number", item);
    out.push_back(x);
  }
  return out;
}

// A single value is broadcast to every entry.
VectorXd parse_vector(const std::string& text, Eigen::Index n, const char* what) {
  const auto xs = split_numbers(text);
  if (xs.size() == 1) return VectorXd::Constant(n, xs[0]);
  if (static_cast<Eigen::Index>(xs.size()) != n)
    throw dcopf::CaseError(std::string(what) + " needs 1 or " + std::to_string(n) + " values");
  return Eigen::Map<const VectorXd>(xs.data(), n);
}

std::string join(const VectorXd& v, int digits = 6) {
  std::string s;
  char buf[64];
  for (Eigen::Index k = 0; k < v.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%s%.*f", k ? ", " : "", digits, v(k));
    s += buf;
  }
  return s;
}

void emit(const std::string& text, const std::string& path) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw dcopf::IoError("cannot open " + path + " for writing");
  out << text;
}

dcopf::OpfOptions opf_options(const std::string& worstcase, bool verbose) {
  dcopf::OpfOptions o;
  o.worst_case = dcopf::parse_worst_case_mode(worstcase);
  o.nlp.verbose = verbose;
  return o;
}

std::optional<dcopf::StabilityMethod> method_option(const std::string& name) {
  if (name == "auto") return std::nullopt;
  return dcopf::parse_stability_method(name);
}

// Set points from an explicit list, or by solving the nominal or robust OPF.
VectorXd set_points(const NetworkCase& net, const std::string& vref, const std::string& setpoints,
                    const dcopf::OpfOptions& opf, const std::optional<dcopf::StabilitySet>& stabset) {
  if (!vref.empty()) return parse_vector(vref, net.num_sources(), "--vref");
  if (setpoints == "nominal") return dcopf::solve_nominal_opf(net, opf).vref;
  if (setpoints == "robust") {
    const auto set = stabset ? *stabset : dcopf::robust_stability_set(net, dcopf::assemble(net));
    return dcopf::solve_robust_opf(net, set, opf).vref;
  }
  throw dcopf::CaseError("--setpoints must be nominal or robust", setpoints);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust DC network optimal power flow with stability guarantees"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("--verbose", verbose, "Print solver iterations to stderr");

  std::string case_name, out_path, vref_text, setpoints = "robust", p_text, method = "auto",
                         worstcase = "l1", mode = "nominal", dump_matrices, dump_witness,
                         ramp_text, cases_text = "ieee9,ieee30,ieee39,ieee69,ieee118", delta0_text;
  std::size_t samples = 1000;
  std::uint64_t seed = 1;
  double t_end = 0.0;
  int reps = 10;
  bool explicit_rk = false;

  auto* pf = app.add_subcommand("pf", "Solve the power flow at given set points and loads");
  pf->add_option("--case", case_name, "Builtin case name or case JSON file")->required();
  pf->add_option("--vref", vref_text, "Set points in volt, one value or one per source")->required();
  pf->add_option("--p", p_text, "Load powers in watt, one value or one per load (default nominal)");
  pf->add_option("--out", out_path, "Output JSON file (default stdout)");

  auto* ss = app.add_subcommand("stabset", "Compute the stability floor v_floor from the GEVP");
  ss->add_option("--case", case_name, "Builtin case name or case JSON file")->required();
  ss->add_option("--method", method, "vertex_lmi, single_lmi or auto")
      ->check(CLI::IsMember({"auto", "vertex_lmi", "single_lmi"}));
  ss->add_option("--delta0", delta0_text, "Box direction in watt, comma separated (default p_max)");
  ss->add_option("--dump-matrices", dump_matrices, "Write A, B, C, D as JSON");
  ss->add_option("--dump-witness", dump_witness, "Write the Lyapunov matrix P as JSON");
  ss->add_option("--out", out_path, "Output JSON file (default stdout)");

  auto* opf = app.add_subcommand("opf", "Solve the nominal or robust OPF");
  opf->add_option("--case", case_name, "Builtin case name or case JSON file")->required();
  opf->add_option("--mode", mode, "nominal or robust")->check(CLI::IsMember({"nominal", "robust"}));
  opf->add_option("--worstcase", worstcase, "l1 or exact")->check(CLI::IsMember({"l1", "paper", "exact"}));
  opf->add_option("--out", out_path, "Output JSON file (default stdout)");

  auto* sim = app.add_subcommand("simulate", "Integrate the network dynamics under a load scenario");
  sim->add_option("--case", case_name, "Builtin case name or case JSON file")->required();
  sim->add_option("--vref", vref_text, "Set points in volt");
  sim->add_option("--setpoints", setpoints, "nominal or robust, used when --vref is absent")
      ->check(CLI::IsMember({"nominal", "robust"}));
  sim->add_option("--ramp", ramp_text, "start,step,period,end in watt and seconds");
  sim->add_option("--p", p_text, "Constant load powers in watt instead of a ramp");
  sim->add_option("--t-end", t_end, "End time in seconds (default: end of the scenario)");
  sim->add_flag("--explicit", explicit_rk, "Use the explicit Dormand-Prince integrator");
  sim->add_option("--out", out_path, "Trajectory CSV file");

  auto* run = app.add_subcommand("run", "Stability set, robust OPF and Monte-Carlo validation");
  run->add_option("--case", case_name, "Builtin case name or case JSON file")->required();
  run->add_option("--samples", samples, "Uniform validation samples");
  run->add_option("--seed", seed, "Sampling seed");
  run->add_option("--worstcase", worstcase, "l1 or exact")->check(CLI::IsMember({"l1", "paper", "exact"}));
  run->add_option("--method", method, "vertex_lmi, single_lmi or auto")
      ->check(CLI::IsMember({"auto", "vertex_lmi", "single_lmi"}));
  run->add_option("--out", out_path, "Directory for the JSON and markdown artifacts");

  auto* val = app.add_subcommand("validate", "Check set points against sampled loads");
  val->add_option("--case", case_name, "Builtin case name or case JSON file")->required();
  val->add_option("--vref", vref_text, "Set points in volt");
  val->add_option("--setpoints", setpoints, "nominal or robust, used when --vref is absent")
      ->check(CLI::IsMember({"nominal", "robust"}));
  val->add_option("--samples", samples, "Uniform validation samples");
  val->add_option("--seed", seed, "Sampling seed");
  val->add_option("--method", method, "vertex_lmi, single_lmi or auto")
      ->check(CLI::IsMember({"auto", "vertex_lmi", "single_lmi"}));
  val->add_option("--out", out_path, "Validation JSON file (markdown goes to stdout)");

  auto* bn = app.add_subcommand("bench", "Time the nominal and robust OPF");
  bn->add_option("--cases", cases_text, "Comma-separated case names or files");
  bn->add_option("--reps", reps, "Repetitions per case")->check(CLI::NonNegativeNumber);
  bn->add_option("--out", out_path, "CSV file (markdown goes to stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitError;
  }

  try {
    if (*pf) {
      const NetworkCase net = dcopf::resolve_case(case_name);
      const auto ge = dcopf::grid_equations(net);
      const VectorXd vref = parse_vector(vref_text, net.num_sources(), "--vref");
      const VectorXd p = p_text.empty() ? net.p_nominal() : parse_vector(p_text, net.num_loads(), "--p");
      const auto sol = dcopf::solve_pf(ge, vref, p);
      std::ostringstream js;
      js << "{\n \"v_load_volt\": [" << join(sol.v_load) << "],\n \"v_source_volt\": [" << join(sol.v_source)
         << "],\n \"i_line_ampere\": [" << join(sol.i_line) << "],\n \"iterations\": " << sol.iterations
         << ",\n \"residual_watt\": " << sol.residual << ",\n \"losses_watt\": " << dcopf::losses(ge, sol, vref)
         << "\n}\n";
      emit(js.str(), out_path);
      return 0;
    }
    if (*ss) {
      const NetworkCase net = dcopf::resolve_case(case_name);
      const auto model = dcopf::assemble(net);
      if (!dump_matrices.empty()) dcopf::dump_matrices(model, dump_matrices);
      std::optional<VectorXd> delta0;
      if (!delta0_text.empty()) delta0 = parse_vector(delta0_text, net.num_loads(), "--delta0");
      const auto set = dcopf::robust_stability_set(net, model, delta0, method_option(method));
      if (!dump_witness.empty()) dcopf::dump_witness(set, dump_witness);
      emit(dcopf::stability_set_json(set), out_path);
      return 0;
    }
    if (*opf) {
      const NetworkCase net = dcopf::resolve_case(case_name);
      const auto options = opf_options(worstcase, verbose);
      if (mode == "nominal") {
        emit(dcopf::nominal_solution_json(dcopf::solve_nominal_opf(net, options)), out_path);
      } else {
        const auto set = dcopf::robust_stability_set(net, dcopf::assemble(net));
        emit(dcopf::robust_solution_json(dcopf::solve_robust_opf(net, set, options)), out_path);
      }
      return 0;
    }
    if (*sim) {
      const NetworkCase net = dcopf::resolve_case(case_name);
      const auto model = dcopf::make_dynamic_model(net);
      const VectorXd vref = set_points(net, vref_text, setpoints, opf_options(worstcase, verbose), std::nullopt);
      dcopf::Scenario sc;
      double horizon = t_end;
      if (!p_text.empty()) {
        if (!(t_end > 0.0)) throw dcopf::CaseError("--t-end is required with --p");
        sc = dcopf::constant_scenario(vref, parse_vector(p_text, net.num_loads(), "--p"), t_end);
      } else {
        dcopf::RampSpec ramp;
        if (!ramp_text.empty()) {
          const auto r = split_numbers(ramp_text);
          if (r.size() != 4) throw dcopf::CaseError("--ramp needs start,step,period,end");
          ramp = {r[0], r[1], r[2], r[3]};
        }
        sc = dcopf::ramp_scenario(net, vref, ramp);
        if (!(horizon > 0.0))
          for (const auto& seg : sc.segments) horizon += seg.duration;
      }
      dcopf::SimOptions so;
      so.explicit_rk = explicit_rk;
      const auto traj = dcopf::simulate(model, sc, horizon, so);
      if (!out_path.empty()) dcopf::write_trajectory_csv(model.ss, traj, out_path);
      std::cout << "vref [V]: " << join(vref, 3) << "\n";
      for (const auto& f : traj.flags)
        std::cout << "t " << f.t_start << "-" << f.t_end << " s, p[0] " << f.p(0) << " W: "
                  << (f.collapsed ? "collapsed" : f.diverged ? "diverged"
                                  : f.oscillation_growing  ? "growing oscillation"
                                  : f.converged_to_equilibrium ? "settled" : "transient")
                  << "\n";
      std::cout << (traj.unstable() ? "UNSTABLE" : "stable") << (traj.diagnostic.empty() ? "" : ": ")
                << traj.diagnostic << "\n";
      return 0;
    }
    if (*run) {
      const NetworkCase net = dcopf::resolve_case(case_name);
      dcopf::Algorithm1Options o;
      o.opf = opf_options(worstcase, verbose);
      o.method = method_option(method);
      o.samples = samples;
      o.seed = seed;
      const auto report = dcopf::run_algorithm1(net, o);
      if (!out_path.empty()) dcopf::write_algorithm1_artifacts(report, out_path);
      std::cout << "beta " << report.stabset.beta << ", v_floor [V]: " << join(report.stabset.v_floor, 3) << "\n"
                << "robust vref [V]: " << join(report.robust.vref, 3) << "\n"
                << "band ratio r_bar: " << report.robust.r_bar << "\n"
                << dcopf::validation_markdown(report.validation);
      return report.validation.passed() ? 0 : kExitValidationFailed;
    }
    if (*val) {
      const NetworkCase net = dcopf::resolve_case(case_name);
      const auto set = dcopf::robust_stability_set(net, dcopf::assemble(net), std::nullopt, method_option(method));
      const VectorXd vref = set_points(net, vref_text, setpoints, opf_options(worstcase, verbose), set);
      const auto report = dcopf::validate(net, vref, set, samples, seed);
      if (!out_path.empty()) emit(dcopf::validation_json(report), out_path);
      std::cout << dcopf::validation_markdown(report);
      return report.passed() ? 0 : kExitValidationFailed;
    }
    if (*bn) {
      std::vector<std::string> cases;
      std::stringstream ss_cases(cases_text);
      for (std::string c; std::getline(ss_cases, c, ',');)
        if (!c.empty()) cases.push_back(c);
      dcopf::BenchOptions o;
      o.opf.nlp.verbose = verbose;
      const auto rows = dcopf::bench(cases, reps, o);
      if (!out_path.empty()) emit(dcopf::bench_csv(rows), out_path);
      std::cout << dcopf::bench_markdown(rows);
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return 0;
}
