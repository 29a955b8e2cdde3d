#pragma once

#include "dcopf/netcase.hpp"
#include "dcopf/nlp.hpp"
#include "dcopf/powerflow.hpp"
#include "dcopf/stabset.hpp"

#include <Eigen/Dense>

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace dcopf {

/// Unique power-flow solution inside the box v* +- r w for a load p, given the
/// nominal operating point (vref, p*, v*).
struct SolvabilityCertificate {
  double u_min = 0.0;    // min_j v*_j / w_j
  double a = 0.0;        // ||Z p*||_inf
  double b = 0.0;        // ||Z (p* - p)||_inf
  double gamma_s = 0.0;  // (u - a/u)^2 - 4 b
  double radius_r = 0.0;
  bool holds = false;    // a < u^2 and gamma_s > 0
  Eigen::VectorXd w;       // open-circuit voltage, volt
  Eigen::VectorXd v_star;  // nominal load voltages, volt
  Eigen::VectorXd band_lo;  // volt, v* - r w (only meaningful when holds)
  Eigen::VectorXd band_hi;  // volt, v* + r w
};

/// Load vector(s) whose deviation from nominal sets the certified radius.
enum class WorstCaseMode {
  l1_endpoint,  // single p^m maximising the l1 deviation, ties toward p_max
  exact   // the box maximum of ||Z (p* - p)||_inf, attained at the all-min or all-max corner
};

std::string to_string(WorstCaseMode mode);
WorstCaseMode parse_worst_case_mode(const std::string& name);

struct NominalOpfSolution {
  Eigen::VectorXd vref;    // volt
  Eigen::VectorXd v_star;  // volt
  double objective = 0.0;  // cost; watt for the loss objective
  double losses = 0.0;     // watt, total at nominal load
  double series_losses = 0.0;
  double kkt_residual = 0.0;
  int iterations = 0;
};

struct RobustOpfAux {
  double a = 0.0;  // ||Z p*||_inf
  double b = 0.0;  // ||Z (p* - p^m)||_inf
  double c = 0.0;  // sqrt(gamma)
  double d = 0.0;  // a / u_min
};

struct RobustOpfSolution {
  Eigen::VectorXd vref;    // volt
  Eigen::VectorXd v_star;  // volt, nominal load
  double u_min = 0.0;
  double r_bar = 0.0;
  Eigen::VectorXd band_lo;  // volt
  Eigen::VectorXd band_hi;  // volt
  Eigen::VectorXd v_lower;  // volt, max(v_min, v_floor)
  Eigen::VectorXd v_upper;  // volt
  double gamma_bar = 0.0;
  double objective = 0.0;
  double losses = 0.0;
  double series_losses = 0.0;
  double kkt_residual = 0.0;
  int iterations = 0;
  RobustOpfAux aux;
  WorstCaseMode worst_case = WorstCaseMode::l1_endpoint;
  std::vector<Eigen::VectorXd> worst_loads;  // the p^m used, watt
  SolvabilityCertificate certificate;
};

struct OpfOptions {
  NlpOptions nlp;
  WorstCaseMode worst_case = WorstCaseMode::l1_endpoint;
  /// Margin on strict inequalities, in per-unit of the problem scaling.
  double strict_margin = 1e-6;
  /// Robust start: nominal-OPF set points inflated by this factor, clipped to vref_max.
  double init_inflation = 1.10;
};

/// p^m_j: the endpoint of [p_min_j, p_max_j] farther from p*_j, ties toward p_max.
Eigen::VectorXd worst_case_load(const NetworkCase& network);

/// Loads entering the radius: {p^m} (l1_endpoint) or the all-max and all-min corners (exact).
std::vector<Eigen::VectorXd> worst_case_loads(const NetworkCase& network, WorstCaseMode mode);

/// ||Z (p* - p)||_inf maximised over the load box, row by row.
double box_deviation_norm(const Eigen::MatrixXd& z_tilde, const NetworkCase& network);

SolvabilityCertificate certify_solvability(const GridEquations& ge, const Eigen::VectorXd& vref,
                                           const Eigen::VectorXd& p_star,
                                           const Eigen::VectorXd& p);

/// Same certificate for a given deviation norm b = ||Z (p* - p)||_inf.
SolvabilityCertificate certify_deviation(const GridEquations& ge, const Eigen::VectorXd& vref,
                                         const Eigen::VectorXd& p_star, double b);

/// Minimises the case cost subject to the nominal power flow and the
/// operational bounds on vref and v.
NominalOpfSolution solve_nominal_opf(const NetworkCase& network, const OpfOptions& options = {});

/// Robust DN-OPF over (vref, v*, u_min, a, b, c, d, r) with the voltage band
/// v* +- r w inside [max(v_min, v_floor), v_max]. The returned point is polished
/// with a power-flow solve and re-certified.
RobustOpfSolution solve_robust_opf(const NetworkCase& network, const StabilitySet& stabset,
                                   const OpfOptions& options = {});

/// The NLP formulations, exposed for derivative checks. Variables are per-unit
/// on the largest vref_max.
std::unique_ptr<NlpProblem> nominal_opf_problem(const NetworkCase& network,
                                                const GridEquations& ge);
std::unique_ptr<NlpProblem> robust_opf_problem(const NetworkCase& network, const GridEquations& ge,
                                               const Eigen::VectorXd& v_lower,
                                               const Eigen::VectorXd& v_upper,
                                               const Eigen::VectorXd& vref_init,
                                               const OpfOptions& options = {});

}  // namespace dcopf
