#pragma once

#include "dcopf/netcase.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <map>
#include <string>

namespace dcopf {

/// Position of every state in x = [i_t; v_s; v_l].
struct StateIndexMap {
  std::map<std::string, Eigen::Index> line_current_index;
  std::map<std::string, Eigen::Index> source_voltage_index;
  std::map<std::string, Eigen::Index> load_voltage_index;
  Eigen::Index num_lines = 0;
  Eigen::Index num_sources = 0;
  Eigen::Index num_loads = 0;

  Eigen::Index source_offset() const { return num_lines; }
  Eigen::Index load_offset() const { return num_lines + num_sources; }
  Eigen::Index size() const { return num_lines + num_sources + num_loads; }
};

/// Linear part of the network dynamics
///   dx/dt = A x + B vref + Cmat h(x, p),  h_j = p_j / v_lj
/// and the load-sensitivity matrix D of the Jacobian J(delta) = A + D diag(delta) E,
/// where E selects the load-voltage states.
struct StateSpaceModel {
  Eigen::MatrixXd A;     // n x n
  Eigen::MatrixXd B;     // n x n_s
  Eigen::MatrixXd Cmat;  // n x n_l
  Eigen::MatrixXd D;     // n x n_l
  StateIndexMap index_map;

  Eigen::Index num_states() const { return A.rows(); }
  Eigen::Index num_sources() const { return B.cols(); }
  Eigen::Index num_loads() const { return D.cols(); }
  auto load_voltages(const Eigen::VectorXd& x) const {
    return x.segment(index_map.load_offset(), index_map.num_loads);
  }
};

/// Per-load interval of delta_j = p_j / v_j^2, in siemens.
struct DeltaBox {
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;
};

/// Loads whose terminal voltage is below this magnitude are treated as singular.
inline constexpr double kSingularVoltage = 1e-9;

StateSpaceModel assemble(const NetworkCase& network);

Eigen::VectorXd rhs(const StateSpaceModel& model, const Eigen::VectorXd& x,
                    const Eigen::VectorXd& vref, const Eigen::VectorXd& p);

/// A + D diag(delta) E.
Eigen::MatrixXd jacobian(const StateSpaceModel& model, const Eigen::VectorXd& delta);

/// delta_j = p_j / v_j^2 at an operating point.
Eigen::VectorXd load_delta(const Eigen::VectorXd& p, const Eigen::VectorXd& v_load);

DeltaBox delta_box(const NetworkCase& network, const Eigen::VectorXd& v_lo,
                   const Eigen::VectorXd& v_hi);

/// Row-major JSON dump of A, B, Cmat and D.
void dump_matrices(const StateSpaceModel& model, const std::filesystem::path& path);

}  // namespace dcopf
