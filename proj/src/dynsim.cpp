#include "dcopf/dynsim.hpp"

#include "dcopf/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>

namespace dcopf {
namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kCollapseVoltage = 1.0;  // volt
constexpr double kEnvelopeFactor = 10.0;  // times v_max
constexpr int kBins = 4;
constexpr double kGrowth = 1.05;

// dx/dt with the constant-power currents; false when a load voltage is at the singularity.
struct Field {
  const StateSpaceModel& ss;
  VectorXd bv;
  VectorXd p;

  bool operator()(const VectorXd& x, VectorXd& out) const {
    const auto v = ss.load_voltages(x);
    if (!x.allFinite() || (v.array().abs() < kSingularVoltage).any()) return false;
    out = ss.A * x + bv + ss.Cmat * p.cwiseQuotient(v);
    return out.allFinite();
  }
};

double error_norm(const VectorXd& e, const VectorXd& x0, const VectorXd& x1, const SimOptions& opt) {
  const VectorXd scale =
      (opt.abs_tol + opt.rel_tol * x0.cwiseAbs().cwiseMax(x1.cwiseAbs()).array()).matrix();
  return std::sqrt(e.cwiseQuotient(scale).squaredNorm() / static_cast<double>(e.size()));
}

// Two-stage L-stable Rosenbrock scheme, gamma = 1 + 1/sqrt(2); the embedded
// solution is linearly implicit Euler.
bool ros2_step(const Field& f, const VectorXd& x, const VectorXd& fx, double h, VectorXd& x1,
               VectorXd& err) {
  static const double gamma = 1.0 + 1.0 / std::sqrt(2.0);
  const Index n = x.size();
  const MatrixXd J = jacobian(f.ss, load_delta(f.p, f.ss.load_voltages(x)));
  const Eigen::PartialPivLU<MatrixXd> W(MatrixXd::Identity(n, n) - gamma * h * J);
  const VectorXd k1 = W.solve(fx);
  VectorXd f2;
  if (!f(x + h * k1, f2)) return false;
  const VectorXd k2 = W.solve(f2 - 2.0 * k1);
  x1 = x + h * (1.5 * k1 + 0.5 * k2);
  err = 0.5 * h * (k1 + k2);
  return x1.allFinite();
}

// Dormand-Prince 5(4).
bool dopri_step(const Field& f, const VectorXd& x, const VectorXd& fx, double h, VectorXd& x1,
                VectorXd& err) {
  static constexpr double a21 = 1.0 / 5, a31 = 3.0 / 40, a32 = 9.0 / 40, a41 = 44.0 / 45,
                          a42 = -56.0 / 15, a43 = 32.0 / 9, a51 = 19372.0 / 6561,
                          a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729,
                          a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                          a64 = 49.0 / 176, a65 = -5103.0 / 18656, b1 = 35.0 / 384,
                          b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                          e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
  VectorXd k2, k3, k4, k5, k6, k7;
  const VectorXd& k1 = fx;
  if (!f(x + h * a21 * k1, k2)) return false;
  if (!f(x + h * (a31 * k1 + a32 * k2), k3)) return false;
  if (!f(x + h * (a41 * k1 + a42 * k2 + a43 * k3), k4)) return false;
  if (!f(x + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4), k5)) return false;
  if (!f(x + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5), k6)) return false;
  x1 = x + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
  if (!f(x1, k7)) return false;
  err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
  return true;
}

std::vector<std::string> state_names(const StateSpaceModel& model) {
  std::vector<std::string> names(static_cast<std::size_t>(model.num_states()));
  const auto& idx = model.index_map;
  for (const auto& [id, k] : idx.line_current_index) names[static_cast<std::size_t>(k)] = "i_" + id;
  for (const auto& [id, k] : idx.source_voltage_index) names[static_cast<std::size_t>(k)] = "vs_" + id;
  for (const auto& [id, k] : idx.load_voltage_index) names[static_cast<std::size_t>(k)] = "vl_" + id;
  return names;
}

}  // namespace

DynamicModel make_dynamic_model(const NetworkCase& network) {
  return {network, assemble(network), grid_equations(network)};
}

Scenario ramp_scenario(const NetworkCase& network, const Eigen::VectorXd& vref, const RampSpec& ramp) {
  if (!(ramp.step_w > 0.0) || !(ramp.step_period_s > 0.0) || ramp.p_end < ramp.p_start)
    throw CaseError("ramp needs a positive step and period and p_end >= p_start");
  Scenario sc;
  sc.vref = vref;
  const Index nl = network.num_loads();
  for (int k = 0;; ++k) {
    double level = ramp.p_start + k * ramp.step_w;
    const bool last = level >= ramp.p_end - 1e-9 * std::max(1.0, std::abs(ramp.p_end));
    if (last) level = ramp.p_end;
    sc.segments.push_back({ramp.step_period_s, VectorXd::Constant(nl, level)});
    if (last) break;
  }
  return sc;
}

Scenario constant_scenario(const Eigen::VectorXd& vref, const Eigen::VectorXd& p, double duration) {
  Scenario sc;
  sc.vref = vref;
  sc.segments.push_back({duration, p});
  return sc;
}

void check_scenario(const NetworkCase& network, const Scenario& scenario) {
  if (scenario.vref.size() != network.num_sources())
    throw CaseError("scenario vref has the wrong length");
  if (scenario.segments.empty()) throw CaseError("scenario has no segments");
  const VectorXd lo = network.p_min(), hi = network.p_max();
  for (std::size_t s = 0; s < scenario.segments.size(); ++s) {
    const auto& seg = scenario.segments[s];
    const std::string where = "segment " + std::to_string(s);
    if (!(seg.duration > 0.0) || !std::isfinite(seg.duration))
      throw CaseError("segment duration must be positive", where);
    if (seg.p.size() != network.num_loads()) throw CaseError("segment p has the wrong length", where);
    if (!seg.p.allFinite()) throw CaseError("segment p is not finite", where);
    if (!scenario.allow_out_of_set) {
      for (Index j = 0; j < seg.p.size(); ++j)
        if (seg.p(j) < lo(j) - 1e-9 * std::abs(lo(j)) || seg.p(j) > hi(j) + 1e-9 * std::abs(hi(j)))
          throw CaseError("load power outside [p_min, p_max]",
                          where + ", load " + network.loads[static_cast<std::size_t>(j)].bus);
    }
  }
  if (scenario.x0 && scenario.x0->size() != network.num_states())
    throw CaseError("scenario x0 has the wrong length");
}

bool Trajectory::unstable() const { return first_unstable_segment().has_value(); }

std::optional<std::size_t> Trajectory::first_unstable_segment() const {
  for (std::size_t s = 0; s < flags.size(); ++s)
    if (flags[s].unstable()) return s;
  return std::nullopt;
}

Eigen::VectorXd equilibrium_state(const GridEquations& ge, const Eigen::VectorXd& vref,
                                  const Eigen::VectorXd& p) {
  const PfSolution pf = solve_pf(ge, vref, p);
  VectorXd x(pf.i_line.size() + pf.v_source.size() + pf.v_load.size());
  x << pf.i_line, pf.v_source, pf.v_load;
  return x;
}

Trajectory simulate(const DynamicModel& model, const Scenario& scenario, double t_end,
                    const SimOptions& opt) {
  check_scenario(model.network, scenario);
  if (!(t_end > 0.0)) throw CaseError("simulation end time must be positive");
  const StateSpaceModel& ss = model.ss;
  const Index nl = ss.num_loads();
  const VectorXd v_max = model.network.v_max();

  // Segments clipped to t_end, the last one extended if needed.
  std::vector<LoadSegment> segs;
  double total = 0.0;
  for (const auto& seg : scenario.segments) {
    if (total >= t_end) break;
    segs.push_back({std::min(seg.duration, t_end - total), seg.p});
    total += segs.back().duration;
  }
  if (total < t_end) segs.back().duration += t_end - total;

  VectorXd x;
  if (scenario.x0) {
    x = *scenario.x0;
  } else {
    try {
      x = equilibrium_state(model.ge, scenario.vref, segs.front().p);
    } catch (const ConvergenceError&) {
      x = equilibrium_state(model.ge, scenario.vref, VectorXd::Zero(nl));
    }
  }

  Trajectory traj;
  traj.times.push_back(0.0);
  traj.states.push_back(x);
  const double q = opt.explicit_rk ? 5.0 : 2.0;  // error estimate order + 1
  double t = 0.0;
  double next_out = opt.output_interval;
  bool stop = false;

  for (const auto& seg : segs) {
    SegmentFlags fl;
    fl.t_start = t;
    fl.p = seg.p;
    const double t1 = t + seg.duration;
    const double t_eps = 1e-12 * std::max(1.0, t1);
    Field f{ss, ss.B * scenario.vref, seg.p};
    MatrixXd bin_hi = MatrixXd::Constant(nl, kBins, -std::numeric_limits<double>::infinity());
    MatrixXd bin_lo = MatrixXd::Constant(nl, kBins, std::numeric_limits<double>::infinity());

    VectorXd fx;
    if (!f(x, fx)) {
      fl.collapsed = true;
      traj.diagnostic = "load voltage at the constant-power singularity";
      stop = true;
    }
    double h = opt.dt_init;
    VectorXd x1, err;
    while (!stop && t < t1 - t_eps) {
      const double step = std::min({h, opt.dt_max, t1 - t});
      const bool ok = opt.explicit_rk ? dopri_step(f, x, fx, step, x1, err)
                                      : ros2_step(f, x, fx, step, x1, err);
      const double en = ok ? error_norm(err, x, x1, opt) : std::numeric_limits<double>::infinity();
      VectorXd fx1;
      if (!ok || !(en <= 1.0) || !f(x1, fx1)) {
        ++traj.steps_rejected;
        h = step * (std::isfinite(en) ? std::max(0.2, 0.9 * std::pow(en, -1.0 / q)) : 0.25);
        if (h < opt.dt_min) {
          fl.diverged = true;
          traj.diagnostic = "step size collapsed below " + std::to_string(opt.dt_min) + " s at t = " +
                            std::to_string(t);
          stop = true;
        }
        continue;
      }
      ++traj.steps_accepted;
      traj.max_error_estimate = std::max(traj.max_error_estimate, en);
      t += step;
      x = x1;
      fx = fx1;
      h = step * (en > 0.0 ? std::min(5.0, std::max(0.2, 0.9 * std::pow(en, -1.0 / q))) : 5.0);

      const auto v = ss.load_voltages(x);
      const int bin = std::clamp(static_cast<int>(kBins * (t - fl.t_start) / seg.duration), 0, kBins - 1);
      bin_hi.col(bin) = bin_hi.col(bin).cwiseMax(v);
      bin_lo.col(bin) = bin_lo.col(bin).cwiseMin(v);
      if ((v.array() < kCollapseVoltage).any()) {
        fl.collapsed = true;
        traj.diagnostic = "load voltage collapsed at t = " + std::to_string(t);
        stop = true;
      } else if ((v.array() > kEnvelopeFactor * v_max.array()).any()) {
        fl.diverged = true;
        traj.diagnostic = "load voltage left the envelope at t = " + std::to_string(t);
        stop = true;
      }
      if (stop || t >= next_out) {
        traj.times.push_back(t);
        traj.states.push_back(x);
        next_out = t + opt.output_interval;
      }
    }
    if (traj.times.back() < t) {
      traj.times.push_back(t);
      traj.states.push_back(x);
    }
    fl.t_end = t;

    if (!stop) {
      // Growing oscillation: the voltage envelope widens over consecutive quarters.
      std::array<double, kBins> amp{};
      for (int k = 0; k < kBins; ++k)
        amp[static_cast<std::size_t>(k)] =
            std::isfinite(bin_hi(0, k)) ? (bin_hi.col(k) - bin_lo.col(k)).maxCoeff() : 0.0;
      fl.oscillation_growing = amp[3] > kGrowth * amp[2] && amp[2] > kGrowth * amp[1] &&
                               amp[3] > 1e-4 * v_max.maxCoeff();
      try {
        const VectorXd v = ss.load_voltages(x);
        const PfSolution pf = solve_pf(model.ge, scenario.vref, seg.p, v);
        fl.converged_to_equilibrium =
            ((v - pf.v_load).cwiseAbs().array() / pf.v_load.cwiseAbs().array()).maxCoeff() <=
            opt.equilibrium_tol;
      } catch (const Error&) {
        fl.converged_to_equilibrium = false;
      }
    }
    traj.flags.push_back(fl);
    if (stop) break;
  }
  return traj;
}

Spectrum equilibrium_spectrum(const DynamicModel& model, const Eigen::VectorXd& vref,
                              const Eigen::VectorXd& p) {
  const PfSolution pf = solve_pf(model.ge, vref, p);
  const MatrixXd J = jacobian(model.ss, load_delta(p, pf.v_load));
  const Eigen::EigenSolver<MatrixXd> es(J, false);
  if (es.info() != Eigen::Success) throw ConvergenceError("eigenvalue iteration failed", J.cwiseAbs().rowwise().sum().maxCoeff());
  Spectrum out;
  out.v_load = pf.v_load;
  out.abscissa = -std::numeric_limits<double>::infinity();
  for (Index k = 0; k < es.eigenvalues().size(); ++k) {
    out.eigenvalues.push_back(es.eigenvalues()(k));
    out.abscissa = std::max(out.abscissa, es.eigenvalues()(k).real());
  }
  out.stable = out.abscissa < 0.0;
  return out;
}

void write_trajectory_csv(const StateSpaceModel& model, const Trajectory& trajectory,
                          const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out.precision(10);
  out << "t";
  for (const auto& name : state_names(model)) out << ',' << name;
  out << ",diverged,oscillation_growing,collapsed,converged_to_equilibrium\n";
  std::size_t seg = 0;
  for (std::size_t k = 0; k < trajectory.times.size(); ++k) {
    const double t = trajectory.times[k];
    while (seg + 1 < trajectory.flags.size() && t > trajectory.flags[seg].t_end) ++seg;
    out << t;
    for (Index i = 0; i < trajectory.states[k].size(); ++i) out << ',' << trajectory.states[k](i);
    if (trajectory.flags.empty()) {
      out << ",0,0,0,0\n";
      continue;
    }
    const auto& fl = trajectory.flags[seg];
    out << ',' << fl.diverged << ',' << fl.oscillation_growing << ',' << fl.collapsed << ','
        << fl.converged_to_equilibrium << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace dcopf
