#pragma once

#include "dcopf/netcase.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace dcopf {

/// Steady-state network equations reduced to the load buses:
///   p = diag(v) (Y_ll v + Y_ls vref)
/// The source-bus voltages are eliminated (Kron reduction); the pieces needed
/// to recover them are retained.
struct GridEquations {
  Eigen::MatrixXd Y_ll;      // n_l x n_l, siemens
  Eigen::MatrixXd Y_ls;      // n_l x n_s, siemens
  Eigen::MatrixXd Y_ll_inv;  // n_l x n_l, ohm
  std::vector<std::string> load_order;
  std::vector<std::string> source_order;

  // v_s = source_from_vref * vref + source_from_load * v_l
  Eigen::MatrixXd source_from_vref;
  Eigen::MatrixXd source_from_load;

  Eigen::VectorXd source_resistance;
  Eigen::VectorXd load_resistance;

  struct LineEnds {
    bool from_is_source;
    Eigen::Index from;
    bool to_is_source;
    Eigen::Index to;
    double resistance;
  };
  std::vector<LineEnds> lines;

  Eigen::Index num_loads() const { return Y_ll.rows(); }
  Eigen::Index num_sources() const { return Y_ls.cols(); }
};

struct PfSolution {
  Eigen::VectorXd v_load;
  Eigen::VectorXd v_source;
  Eigen::VectorXd i_line;
  Eigen::VectorXd p_load;  // the load powers this solution was computed for
  int iterations = 0;
  double residual = 0.0;  // ||diag(v)(Y_ll v + Y_ls vref) - p||_inf, watt
};

struct PfOptions {
  int max_iterations = 50;
  int max_halvings = 10;
  /// Converged when the residual is below tolerance * max(1, ||p||_inf).
  double tolerance = 1e-8;
};

GridEquations grid_equations(const NetworkCase& network);

/// w = -Y_ll^{-1} Y_ls vref, the load voltages at zero load power.
Eigen::VectorXd open_circuit(const GridEquations& ge, const Eigen::VectorXd& vref);

/// diag(w)^{-1} Y_ll^{-1} diag(w)^{-1}. Entries are negative with the
/// consumption-positive sign convention; only infinity norms of products are used.
Eigen::MatrixXd normalized_impedance(const GridEquations& ge, const Eigen::VectorXd& w);

/// Residual F(v) = diag(v)(Y_ll v + Y_ls vref) - p.
Eigen::VectorXd pf_mismatch(const GridEquations& ge, const Eigen::VectorXd& vref,
                            const Eigen::VectorXd& p, const Eigen::VectorXd& v_load);

/// Damped Newton solve of the load-bus power-flow equations starting from
/// v0 (default: the open-circuit voltage, which targets the high-voltage root).
PfSolution solve_pf(const GridEquations& ge, const Eigen::VectorXd& vref,
                    const Eigen::VectorXd& p,
                    const std::optional<Eigen::VectorXd>& v0 = std::nullopt,
                    const PfOptions& options = {});

Eigen::VectorXd source_voltages(const GridEquations& ge, const Eigen::VectorXd& vref,
                                const Eigen::VectorXd& v_load);
Eigen::VectorXd line_currents(const GridEquations& ge, const Eigen::VectorXd& v_source,
                              const Eigen::VectorXd& v_load);

/// Total source injection minus constant-power demand, watt.
double losses(const GridEquations& ge, const PfSolution& pf, const Eigen::VectorXd& vref);
/// Losses in series elements only (source resistances and lines).
double series_losses(const GridEquations& ge, const PfSolution& pf, const Eigen::VectorXd& vref);
/// Sum of i^2 R over every resistor; equals losses() at a converged solution.
double resistive_dissipation(const GridEquations& ge, const PfSolution& pf,
                             const Eigen::VectorXd& vref);

}  // namespace dcopf
