#pragma once

#include "dcopf/error.hpp"
#include "dcopf/netcase.hpp"
#include "dcopf/robustopf.hpp"
#include "dcopf/stabset.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace dcopf {

/// A pipeline step failed; the message carries the step and the original diagnostic.
class PipelineError : public Error {
 public:
  PipelineError(std::string step, const std::string& diagnostic)
      : Error(step + ": " + diagnostic), step_(std::move(step)) {}
  const std::string& step() const { return step_; }

 private:
  std::string step_;
};

/// Builtin case name, or a path to a case JSON file.
NetworkCase resolve_case(const std::string& name_or_path);

struct ValidationFailure {
  std::size_t sample = 0;
  Eigen::VectorXd p;   // watt
  std::string check;   // power_flow | band | floor | spectrum
  std::string detail;
};

struct ValidationReport {
  std::string case_name;
  std::uint64_t seed = 0;
  std::size_t random_samples = 0;
  std::size_t deterministic_samples = 0;  // 2 corners + 2 n_l single-coordinate extremes
  std::size_t pass_count = 0;
  bool certificate_holds = false;
  double radius = 0.0;
  double max_abscissa = 0.0;      // over samples whose power flow converged
  double min_floor_margin = 0.0;  // volt, min over samples of v - v_floor
  double min_band_margin = 0.0;   // volt, min distance inside the band (negative outside)
  std::vector<ValidationFailure> failures;

  std::size_t total() const { return random_samples + deterministic_samples; }
  bool passed() const { return failures.empty(); }
};

struct ValidationOptions {
  /// Worker threads; 0 picks the hardware concurrency. Results do not depend on it.
  unsigned threads = 0;
  /// Slack on the band and floor checks, relative to the voltage.
  double voltage_tol = 1e-9;
};

/// The load samples used by validate: the all-min and all-max corners, each
/// coordinate at its min and max with the others nominal, then n_samples
/// uniform draws from a 64-bit Mersenne twister seeded with seed.
std::vector<Eigen::VectorXd> validation_samples(const NetworkCase& network, std::size_t n_samples,
                                                std::uint64_t seed);

/// Empirical check of robust feasibility and stability at vref: for every
/// sample the power flow converges, v lies in the band certified for the whole
/// load box, v >= v_floor, and the Jacobian is Hurwitz.
ValidationReport validate(const NetworkCase& network, const Eigen::VectorXd& vref,
                          const StabilitySet& stabset, std::size_t n_samples, std::uint64_t seed,
                          const ValidationOptions& options = {});

struct Algorithm1Options {
  OpfOptions opf;
  StabilityOptions stability;
  std::optional<StabilityMethod> method;
  std::optional<Eigen::VectorXd> delta0;  // watt; defaults to p_max
  std::size_t samples = 1000;
  std::uint64_t seed = 1;
  ValidationOptions validation;
};

struct Algorithm1Report {
  std::string case_name;
  StabilitySet stabset;
  std::optional<NominalOpfSolution> nominal;  // empty when the nominal OPF failed
  std::string nominal_status;                 // "ok" or the error message
  RobustOpfSolution robust;
  ValidationReport validation;
  double seconds_stabset = 0.0;
  double seconds_nominal = 0.0;
  double seconds_robust = 0.0;
  double seconds_validation = 0.0;
};

/// Stability set from the GEVP, worst-case loads, robust OPF, then Monte-Carlo
/// validation. The nominal OPF is solved alongside for comparison and its failure
/// is recorded, not raised. Throws PipelineError naming the failed step.
Algorithm1Report run_algorithm1(const NetworkCase& network, const Algorithm1Options& options = {});

struct BenchRow {
  std::string case_name;
  int repetitions = 0;
  double nominal_seconds = 0.0;  // mean wall time, including failed attempts
  double robust_seconds = 0.0;
  std::string nominal_status;  // "ok" or the error message
  std::string robust_status;
  double ratio() const { return robust_seconds / nominal_seconds; }
  bool ok() const { return nominal_status == "ok" && robust_status == "ok"; }
};

struct BenchOptions {
  OpfOptions opf;
  StabilityOptions stability;
};

/// Mean OPF wall times per case. The stability set is computed once per case,
/// outside the timed region.
std::vector<BenchRow> bench(const std::vector<std::string>& cases, int repetitions,
                            const BenchOptions& options = {});

std::string bench_csv(const std::vector<BenchRow>& rows);
std::string bench_markdown(const std::vector<BenchRow>& rows);

std::string validation_json(const ValidationReport& report);
std::string validation_markdown(const ValidationReport& report);

std::string nominal_solution_json(const NominalOpfSolution& solution);
std::string robust_solution_json(const RobustOpfSolution& solution);
std::string stability_set_json(const StabilitySet& set);
std::string algorithm1_json(const Algorithm1Report& report);

/// Writes stabset.json, robust_opf.json, nominal_opf.json, validation.json,
/// validation.md and report.json into dir.
void write_algorithm1_artifacts(const Algorithm1Report& report, const std::filesystem::path& dir);

}  // namespace dcopf
