#include "dcopf/harness.hpp"

#include "dcopf/powerflow.hpp"
#include "dcopf/statespace.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

namespace dcopf {
namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using nlohmann::json;

std::vector<double> vec(const VectorXd& v) { return {v.data(), v.data() + v.size()}; }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* spec, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, x);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

// Outcome of the four checks on one sample.
struct SampleResult {
  std::vector<ValidationFailure> failures;
  bool converged = false;
  double abscissa = -kInf;
  double floor_margin = kInf;
  double band_margin = kInf;
};

json certificate_json(const SolvabilityCertificate& c) {
  return {{"u_min", c.u_min},          {"a", c.a},
          {"b", c.b},                  {"gamma_s", c.gamma_s},
          {"radius", c.radius_r},      {"holds", c.holds},
          {"w_volt", vec(c.w)},        {"v_star_volt", vec(c.v_star)},
          {"band_lo_volt", vec(c.band_lo)}, {"band_hi_volt", vec(c.band_hi)}};
}

json nominal_to_json(const NominalOpfSolution& s) {
  return {{"vref_volt", vec(s.vref)},   {"v_star_volt", vec(s.v_star)},
          {"objective", s.objective},   {"losses_watt", s.losses},
          {"series_losses_watt", s.series_losses},
          {"kkt_residual", s.kkt_residual}, {"iterations", s.iterations}};
}

json robust_to_json(const RobustOpfSolution& s) {
  json loads = json::array();
  for (const auto& p : s.worst_loads) loads.push_back(vec(p));
  return {{"vref_volt", vec(s.vref)},
          {"v_star_volt", vec(s.v_star)},
          {"u_min", s.u_min},
          {"r_bar", s.r_bar},
          {"band_lo_volt", vec(s.band_lo)},
          {"band_hi_volt", vec(s.band_hi)},
          {"v_lower_volt", vec(s.v_lower)},
          {"v_upper_volt", vec(s.v_upper)},
          {"gamma_bar", s.gamma_bar},
          {"objective", s.objective},
          {"losses_watt", s.losses},
          {"series_losses_watt", s.series_losses},
          {"kkt_residual", s.kkt_residual},
          {"iterations", s.iterations},
          {"aux", {{"a", s.aux.a}, {"b", s.aux.b}, {"c", s.aux.c}, {"d", s.aux.d}}},
          {"worst_case", to_string(s.worst_case)},
          {"worst_loads_watt", loads},
          {"certificate", certificate_json(s.certificate)}};
}

json stabset_to_json(const StabilitySet& s) {
  return {{"method", to_string(s.method)},
          {"beta", s.beta},
          {"beta_lo", s.beta_lo},
          {"delta0_watt", vec(s.delta0)},
          {"v_floor_volt", vec(s.v_floor)},
          {"diagonal_p", s.diagonal_p},
          {"bisection_steps", s.bisection_steps},
          {"witness_margin", s.witness.margin},
          {"witness_lambda", s.witness.lambda}};
}

json validation_to_json(const ValidationReport& r) {
  json failures = json::array();
  for (const auto& f : r.failures)
    failures.push_back({{"sample", f.sample}, {"check", f.check}, {"detail", f.detail}, {"p_watt", vec(f.p)}});
  return {{"case", r.case_name},
          {"seed", r.seed},
          {"random_samples", r.random_samples},
          {"deterministic_samples", r.deterministic_samples},
          {"total", r.total()},
          {"pass_count", r.pass_count},
          {"certificate_holds", r.certificate_holds},
          {"radius", r.radius},
          {"max_abscissa", r.max_abscissa},
          {"min_floor_margin_volt", r.min_floor_margin},
          {"min_band_margin_volt", r.min_band_margin},
          {"failures", failures}};
}

}  // namespace

NetworkCase resolve_case(const std::string& name_or_path) {
  std::string name = name_or_path;
  if (name.size() > 3 && name.ends_with("_dc")) name.resize(name.size() - 3);
  if (name == "twobus" || name == "two_bus") return two_bus_case();
  const auto names = builtin_case_names();
  if (std::find(names.begin(), names.end(), name) != names.end()) return builtin_case(name);
  if (std::filesystem::exists(name_or_path)) return load_case(name_or_path);
  throw CaseError("neither a builtin case nor a readable file", name_or_path);
}

std::vector<Eigen::VectorXd> validation_samples(const NetworkCase& network, std::size_t n_samples,
                                                std::uint64_t seed) {
  const VectorXd lo = network.p_min(), hi = network.p_max(), nom = network.p_nominal();
  std::vector<VectorXd> out{lo, hi};
  for (Index j = 0; j < lo.size(); ++j) {
    VectorXd p = nom;
    p(j) = lo(j);
    out.push_back(p);
    p(j) = hi(j);
    out.push_back(p);
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t s = 0; s < n_samples; ++s) {
    VectorXd p(lo.size());
    for (Index j = 0; j < p.size(); ++j) p(j) = lo(j) + unit(rng) * (hi(j) - lo(j));
    out.push_back(p);
  }
  return out;
}

ValidationReport validate(const NetworkCase& network, const Eigen::VectorXd& vref,
                          const StabilitySet& stabset, std::size_t n_samples, std::uint64_t seed,
                          const ValidationOptions& options) {
  const GridEquations ge = grid_equations(network);
  const StateSpaceModel model = assemble(network);
  const std::vector<VectorXd> samples = validation_samples(network, n_samples, seed);

  ValidationReport report;
  report.case_name = network.name;
  report.seed = seed;
  report.random_samples = n_samples;
  report.deterministic_samples = samples.size() - n_samples;

  // Band certified for every load in the box.
  VectorXd band_lo = VectorXd::Constant(network.num_loads(), -kInf);
  VectorXd band_hi = VectorXd::Constant(network.num_loads(), kInf);
  try {
    const VectorXd w = open_circuit(ge, vref);
    const double b = box_deviation_norm(normalized_impedance(ge, w), network);
    const SolvabilityCertificate cert = certify_deviation(ge, vref, network.p_nominal(), b);
    report.certificate_holds = cert.holds;
    report.radius = cert.radius_r;
    band_lo = cert.band_lo;
    band_hi = cert.band_hi;
  } catch (const Error&) {
    report.certificate_holds = false;
    report.radius = kInf;
  }

  auto check = [&](std::size_t k) {
    SampleResult res;
    const VectorXd& p = samples[k];
    auto fail = [&](const char* what, std::string detail) {
      res.failures.push_back({k, p, what, std::move(detail)});
    };
    PfSolution pf;
    try {
      pf = solve_pf(ge, vref, p);
    } catch (const Error& e) {
      fail("power_flow", e.what());
      return res;
    }
    res.converged = true;
    const VectorXd& v = pf.v_load;
    const VectorXd tol = options.voltage_tol * v.cwiseAbs();
    if (!report.certificate_holds) {
      fail("band", "no certified band at these set points");
    } else {
      const VectorXd inside = (v - band_lo).cwiseMin(band_hi - v);
      res.band_margin = inside.minCoeff();
      Index j = 0;
      if ((inside + tol).minCoeff(&j) < 0.0)
        fail("band", "load " + network.loads[static_cast<std::size_t>(j)].bus + " at " +
                         fmt("%.6f", v(j)) + " V outside [" + fmt("%.6f", band_lo(j)) + ", " +
                         fmt("%.6f", band_hi(j)) + "] V");
    }
    const VectorXd above = v - stabset.v_floor;
    res.floor_margin = above.minCoeff();
    Index j = 0;
    if ((above + tol).minCoeff(&j) < 0.0)
      fail("floor", "load " + network.loads[static_cast<std::size_t>(j)].bus + " at " +
                        fmt("%.6f", v(j)) + " V below v_floor " + fmt("%.6f", stabset.v_floor(j)) + " V");
    res.abscissa = spectral_abscissa(jacobian(model, load_delta(p, v)));
    if (!(res.abscissa < 0.0)) fail("spectrum", "spectral abscissa " + fmt("%.6g", res.abscissa));
    return res;
  };

  std::vector<SampleResult> results(samples.size());
  unsigned threads = options.threads ? options.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(1, samples.size())));
  {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t)
      pool.emplace_back([&, t] {
        for (std::size_t k = t; k < samples.size(); k += threads) results[k] = check(k);
      });
  }

  report.max_abscissa = -kInf;
  report.min_floor_margin = kInf;
  report.min_band_margin = kInf;
  for (const auto& r : results) {
    if (r.failures.empty()) ++report.pass_count;
    report.failures.insert(report.failures.end(), r.failures.begin(), r.failures.end());
    if (!r.converged) continue;
    report.max_abscissa = std::max(report.max_abscissa, r.abscissa);
    report.min_floor_margin = std::min(report.min_floor_margin, r.floor_margin);
    report.min_band_margin = std::min(report.min_band_margin, r.band_margin);
  }
  return report;
}

Algorithm1Report run_algorithm1(const NetworkCase& network, const Algorithm1Options& options) {
  Algorithm1Report report;
  report.case_name = network.name;
  auto t0 = std::chrono::steady_clock::now();
  try {
    const StateSpaceModel model = assemble(network);
    report.stabset = robust_stability_set(network, model, options.delta0, options.method, options.stability);
  } catch (const Error& e) {
    throw PipelineError("stability set", e.what());
  }
  report.seconds_stabset = seconds_since(t0);

  t0 = std::chrono::steady_clock::now();
  try {
    report.nominal = solve_nominal_opf(network, options.opf);
    report.nominal_status = "ok";
  } catch (const Error& e) {
    report.nominal_status = e.what();
  }
  report.seconds_nominal = seconds_since(t0);

  t0 = std::chrono::steady_clock::now();
  try {
    report.robust = solve_robust_opf(network, report.stabset, options.opf);
  } catch (const Error& e) {
    throw PipelineError("robust opf", e.what());
  }
  report.seconds_robust = seconds_since(t0);

  t0 = std::chrono::steady_clock::now();
  try {
    report.validation = validate(network, report.robust.vref, report.stabset, options.samples,
                                 options.seed, options.validation);
  } catch (const Error& e) {
    throw PipelineError("validation", e.what());
  }
  report.seconds_validation = seconds_since(t0);
  return report;
}

std::vector<BenchRow> bench(const std::vector<std::string>& cases, int repetitions,
                            const BenchOptions& options) {
  std::vector<BenchRow> rows;
  for (const auto& name : cases) {
    BenchRow row;
    row.repetitions = repetitions;
    const NetworkCase network = resolve_case(name);
    row.case_name = network.name;
    std::optional<StabilitySet> stabset;
    try {
      stabset = robust_stability_set(network, assemble(network), std::nullopt, std::nullopt,
                                     options.stability);
    } catch (const Error& e) {
      row.robust_status = std::string("stability set: ") + e.what();
    }
    row.nominal_status = "ok";
    if (stabset) row.robust_status = "ok";
    for (int r = 0; r < repetitions; ++r) {
      auto t0 = std::chrono::steady_clock::now();
      try {
        solve_nominal_opf(network, options.opf);
      } catch (const Error& e) {
        row.nominal_status = e.what();
      }
      row.nominal_seconds += seconds_since(t0);
      if (!stabset) continue;
      t0 = std::chrono::steady_clock::now();
      try {
        solve_robust_opf(network, *stabset, options.opf);
      } catch (const Error& e) {
        row.robust_status = e.what();
      }
      row.robust_seconds += seconds_since(t0);
    }
    if (repetitions > 0) {
      row.nominal_seconds /= repetitions;
      row.robust_seconds /= repetitions;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string bench_csv(const std::vector<BenchRow>& rows) {
  std::ostringstream out;
  out << "case,repetitions,nominal_s,robust_s,ratio,nominal_status,robust_status\n";
  auto quote = [](const std::string& s) {
    std::string q = "\"";
    for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
    return q + "\"";
  };
  for (const auto& r : rows)
    out << r.case_name << ',' << r.repetitions << ',' << fmt("%.6g", r.nominal_seconds) << ','
        << fmt("%.6g", r.robust_seconds) << ',' << fmt("%.4g", r.ratio()) << ',' << quote(r.nominal_status)
        << ',' << quote(r.robust_status) << '\n';
  return out.str();
}

std::string bench_markdown(const std::vector<BenchRow>& rows) {
  std::ostringstream out;
  out << "| case | reps | nominal (s) | robust (s) | robust/nominal | status |\n";
  out << "|---|---|---|---|---|---|\n";
  for (const auto& r : rows) {
    std::string status = r.ok() ? "ok" : "";
    if (r.nominal_status != "ok") status += "nominal: " + r.nominal_status;
    if (r.robust_status != "ok") status += std::string(status.empty() ? "" : "; ") + "robust: " + r.robust_status;
    out << "| " << r.case_name << " | " << r.repetitions << " | " << fmt("%.4g", r.nominal_seconds) << " | "
        << fmt("%.4g", r.robust_seconds) << " | " << fmt("%.3g", r.ratio()) << " | " << status << " |\n";
  }
  return out.str();
}

std::string validation_json(const ValidationReport& report) { return validation_to_json(report).dump(1) + "\n"; }

std::string validation_markdown(const ValidationReport& report) {
  std::ostringstream out;
  out << "# Validation: " << report.case_name << "\n\n";
  out << "- samples: " << report.total() << " (" << report.deterministic_samples << " deterministic, "
      << report.random_samples << " uniform, seed " << report.seed << ")\n";
  out << "- passed: " << report.pass_count << " / " << report.total() << "\n";
  out << "- certificate holds: " << (report.certificate_holds ? "yes" : "no") << ", radius "
      << fmt("%.6g", report.radius) << "\n";
  out << "- max spectral abscissa: " << fmt("%.6g", report.max_abscissa) << " 1/s\n";
  out << "- min margin above v_floor: " << fmt("%.6g", report.min_floor_margin) << " V\n";
  out << "- min margin inside band: " << fmt("%.6g", report.min_band_margin) << " V\n";
  if (!report.failures.empty()) {
    out << "\n| sample | check | detail |\n|---|---|---|\n";
    for (const auto& f : report.failures)
      out << "| " << f.sample << " | " << f.check << " | " << f.detail << " |\n";
  }
  return out.str();
}

std::string nominal_solution_json(const NominalOpfSolution& solution) {
  return nominal_to_json(solution).dump(1) + "\n";
}
std::string robust_solution_json(const RobustOpfSolution& solution) {
  return robust_to_json(solution).dump(1) + "\n";
}
std::string stability_set_json(const StabilitySet& set) { return stabset_to_json(set).dump(1) + "\n"; }

std::string algorithm1_json(const Algorithm1Report& report) {
  json doc{{"case", report.case_name},
           {"stability_set", stabset_to_json(report.stabset)},
           {"nominal_status", report.nominal_status},
           {"robust", robust_to_json(report.robust)},
           {"validation", validation_to_json(report.validation)},
           {"seconds", {{"stability_set", report.seconds_stabset},
                        {"nominal_opf", report.seconds_nominal},
                        {"robust_opf", report.seconds_robust},
                        {"validation", report.seconds_validation}}}};
  doc["nominal"] = report.nominal ? nominal_to_json(*report.nominal) : json(nullptr);
  return doc.dump(1) + "\n";
}

void write_algorithm1_artifacts(const Algorithm1Report& report, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  write_text(dir / "stabset.json", stability_set_json(report.stabset));
  write_text(dir / "robust_opf.json", robust_solution_json(report.robust));
  if (report.nominal) write_text(dir / "nominal_opf.json", nominal_solution_json(*report.nominal));
  write_text(dir / "validation.json", validation_json(report.validation));
  write_text(dir / "validation.md", validation_markdown(report.validation));
  write_text(dir / "report.json", algorithm1_json(report));
}

}  // namespace dcopf
