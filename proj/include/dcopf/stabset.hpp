#pragma once

#include "dcopf/lmi.hpp"
#include "dcopf/netcase.hpp"
#include "dcopf/statespace.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <optional>
#include <string>

namespace dcopf {

enum class StabilityMethod { vertex_lmi, single_lmi };

std::string to_string(StabilityMethod method);
StabilityMethod parse_stability_method(const std::string& name);

/// Common quadratic Lyapunov function x^T P x in the model's own coordinates.
struct LyapunovWitness {
  Eigen::MatrixXd P;  // symmetric, min eigenvalue 1
  /// Largest eigenvalue over the certified blocks (vertex: P J + J^T P at every
  /// vertex; single LMI: the full S-procedure block). Negative when certified.
  double margin = 0.0;
  double lambda = 0.0;  // S-procedure multiplier (single LMI only)
};

struct StabilityTest {
  bool feasible = false;
  std::optional<LyapunovWitness> witness;
};

struct StabilitySet {
  Eigen::VectorXd v_floor;  // volt, per load
  double beta = 0.0;        // smallest certified beta (feasible end of the bracket)
  double beta_lo = 0.0;     // largest beta shown infeasible
  Eigen::VectorXd delta0;   // watt per load; the certified box is [-delta0, delta0] / beta siemens
  LyapunovWitness witness;
  StabilityMethod method = StabilityMethod::vertex_lmi;
  bool diagonal_p = false;
  int bisection_steps = 0;
};

struct StabilityOptions {
  std::size_t vertex_cap = 12;
  /// Certificate margin relative to the norm of the balanced A.
  double margin = 1e-7;
  double trace_factor = 1e4;
  double bracket_ratio = 1.001;
  /// Full symmetric P while n(n+1)/2 stays below this, diagonal P beyond.
  std::size_t full_p_limit = 1200;
  std::optional<bool> diagonal_p;
};

struct GevpResult {
  double beta = 0.0;     // feasible
  double beta_lo = 0.0;  // infeasible
  LyapunovWitness witness;
  int steps = 0;
};

/// Real part of the rightmost eigenvalue.
double spectral_abscissa(const Eigen::MatrixXd& m);

/// Diagonal similarity T with T A T^{-1} having skew-symmetric line couplings
/// (square roots of the line inductances and node capacitances).
Eigen::VectorXd energy_scaling(const StateSpaceModel& model);

bool uses_diagonal_p(const StateSpaceModel& model, const StabilityOptions& options);

/// Common Lyapunov test at every vertex of the delta box.
StabilityTest vertex_lmi_test(const StateSpaceModel& model, const DeltaBox& box,
                              const StabilityOptions& options = {});

/// Single S-procedure LMI over the box written as A_hat + B_hat Theta C_hat, |Theta| <= 1.
StabilityTest single_lmi_test(const StateSpaceModel& model, const DeltaBox& box,
                              const StabilityOptions& options = {});

/// Smallest beta for which the box [-delta0, delta0] / beta is certified, by
/// geometric bisection on alpha = 1/beta. Throws NotHurwitzError if A itself has
/// no Lyapunov certificate.
GevpResult gevp_max_scaling(const StateSpaceModel& model, const Eigen::VectorXd& delta0,
                            StabilityMethod method, const StabilityOptions& options = {});

StabilityMethod auto_method(const StateSpaceModel& model, const StabilityOptions& options = {});

/// v_floor_k = sqrt(beta p_max_k / delta0_k). delta0 defaults to p_max.
StabilitySet robust_stability_set(const NetworkCase& network, const StateSpaceModel& model,
                                  const std::optional<Eigen::VectorXd>& delta0 = std::nullopt,
                                  const std::optional<StabilityMethod>& method = std::nullopt,
                                  const StabilityOptions& options = {});

void dump_witness(const StabilitySet& set, const std::filesystem::path& path);

}  // namespace dcopf
