#pragma once

#include "dcopf/netcase.hpp"
#include "dcopf/powerflow.hpp"
#include "dcopf/statespace.hpp"

#include <Eigen/Dense>

#include <complex>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace dcopf {

/// Everything the time-domain model needs, assembled once per case.
struct DynamicModel {
  NetworkCase network;
  StateSpaceModel ss;
  GridEquations ge;
};

DynamicModel make_dynamic_model(const NetworkCase& network);

/// Constant load powers held for a duration.
struct LoadSegment {
  double duration = 0.0;  // s
  Eigen::VectorXd p;      // watt, per load
};

/// Uniform staircase: every load starts at p_start and steps by step_w every
/// step_period_s; each level up to and including p_end is held for one period.
struct RampSpec {
  double p_start = 25e3;
  double step_w = 2.5e3;
  double step_period_s = 2.5;
  double p_end = 50e3;
};

struct Scenario {
  Eigen::VectorXd vref;  // volt, per source
  std::vector<LoadSegment> segments;
  /// Initial state; defaults to the equilibrium of the first segment, or the
  /// open-circuit state when that power flow has no solution.
  std::optional<Eigen::VectorXd> x0;
  bool allow_out_of_set = false;
};

Scenario ramp_scenario(const NetworkCase& network, const Eigen::VectorXd& vref, const RampSpec& ramp);
Scenario constant_scenario(const Eigen::VectorXd& vref, const Eigen::VectorXd& p, double duration);

/// Throws CaseError on non-positive durations, size mismatches, or powers
/// outside [p_min, p_max] unless the scenario allows it.
void check_scenario(const NetworkCase& network, const Scenario& scenario);

struct SegmentFlags {
  double t_start = 0.0;
  double t_end = 0.0;
  Eigen::VectorXd p;
  bool converged_to_equilibrium = false;
  bool diverged = false;
  bool oscillation_growing = false;
  /// A load voltage fell below 1 V: the constant-power current p/v blows up.
  bool collapsed = false;
  bool unstable() const { return diverged || oscillation_growing || collapsed; }
};

struct Trajectory {
  std::vector<double> times;
  std::vector<Eigen::VectorXd> states;
  std::vector<SegmentFlags> flags;
  int steps_accepted = 0;
  int steps_rejected = 0;
  /// Largest normalised local error estimate of an accepted step.
  double max_error_estimate = 0.0;
  std::string diagnostic;  // why integration stopped early, empty otherwise

  bool unstable() const;
  /// First segment with an instability flag, if any.
  std::optional<std::size_t> first_unstable_segment() const;
};

struct SimOptions {
  double rel_tol = 1e-6;
  double abs_tol = 1e-6;  // volt or ampere
  double dt_max = 0.05;   // s
  double dt_min = 1e-9;   // s; smaller steps are reported as divergence
  double dt_init = 1e-6;  // s
  /// States are stored at this spacing plus every segment boundary.
  double output_interval = 1e-3;
  /// Explicit Dormand-Prince instead of the Rosenbrock scheme, for cross-checks.
  bool explicit_rk = false;
  /// Relative distance to the segment's power-flow solution counted as settled.
  double equilibrium_tol = 1e-4;
};

/// Integrates dx/dt = A x + B vref + Cmat h(x, p) over the scenario's segments,
/// continuing the final segment until t_end when t_end exceeds their total.
/// Stops at the first divergence or collapse.
Trajectory simulate(const DynamicModel& model, const Scenario& scenario, double t_end,
                    const SimOptions& options = {});

/// Steady state x = [i_t; v_s; v_l] at (vref, p). Throws ConvergenceError if the
/// power flow has no solution.
Eigen::VectorXd equilibrium_state(const GridEquations& ge, const Eigen::VectorXd& vref,
                                  const Eigen::VectorXd& p);

struct Spectrum {
  std::vector<std::complex<double>> eigenvalues;
  double abscissa = 0.0;  // largest real part
  bool stable = false;
  Eigen::VectorXd v_load;
};

/// Eigenvalues of J at delta_j = p_j / v*_j^2.
Spectrum equilibrium_spectrum(const DynamicModel& model, const Eigen::VectorXd& vref,
                              const Eigen::VectorXd& p);

/// CSV with columns t, every state by id, then the flags of the active segment.
void write_trajectory_csv(const StateSpaceModel& model, const Trajectory& trajectory,
                          const std::filesystem::path& path);

}  // namespace dcopf
