#include "dcopf/statespace.hpp"

#include "dcopf/error.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>

namespace dcopf {

StateSpaceModel assemble(const NetworkCase& network) {
  validate(network);
  StateSpaceModel model;
  auto& idx = model.index_map;
  idx.num_lines = network.num_lines();
  idx.num_sources = network.num_sources();
  idx.num_loads = network.num_loads();
  const Eigen::Index n = idx.size();

  for (Eigen::Index p = 0; p < idx.num_lines; ++p)
    idx.line_current_index[network.lines[static_cast<std::size_t>(p)].id] = p;
  for (Eigen::Index k = 0; k < idx.num_sources; ++k)
    idx.source_voltage_index[network.sources[static_cast<std::size_t>(k)].bus] =
        idx.source_offset() + k;
  for (Eigen::Index j = 0; j < idx.num_loads; ++j)
    idx.load_voltage_index[network.loads[static_cast<std::size_t>(j)].bus] = idx.load_offset() + j;

  // node state index and capacitance for every bus
  std::map<std::string, std::pair<Eigen::Index, double>> node;
  for (const auto& s : network.sources) node[s.bus] = {idx.source_voltage_index[s.bus], s.capacitance};
  for (const auto& l : network.loads) node[l.bus] = {idx.load_voltage_index[l.bus], l.capacitance};

  model.A = Eigen::MatrixXd::Zero(n, n);
  model.B = Eigen::MatrixXd::Zero(n, idx.num_sources);
  model.Cmat = Eigen::MatrixXd::Zero(n, idx.num_loads);
  model.D = Eigen::MatrixXd::Zero(n, idx.num_loads);

  for (Eigen::Index p = 0; p < idx.num_lines; ++p) {
    const auto& line = network.lines[static_cast<std::size_t>(p)];
    const auto [from, c_from] = node.at(line.from);
    const auto [to, c_to] = node.at(line.to);
    // L di/dt = v_from - R i - v_to
    model.A(p, p) = -line.resistance / line.inductance;
    model.A(p, from) += 1.0 / line.inductance;
    model.A(p, to) -= 1.0 / line.inductance;
    // the current leaves `from` and enters `to`
    model.A(from, p) -= 1.0 / c_from;
    model.A(to, p) += 1.0 / c_to;
  }
  for (Eigen::Index k = 0; k < idx.num_sources; ++k) {
    const auto& s = network.sources[static_cast<std::size_t>(k)];
    const Eigen::Index row = idx.source_offset() + k;
    model.A(row, row) -= 1.0 / (s.series_resistance * s.capacitance);
    model.B(row, k) = 1.0 / (s.series_resistance * s.capacitance);
  }
  for (Eigen::Index j = 0; j < idx.num_loads; ++j) {
    const auto& l = network.loads[static_cast<std::size_t>(j)];
    const Eigen::Index row = idx.load_offset() + j;
    model.A(row, row) -= 1.0 / (l.shunt_resistance * l.capacitance);
    model.Cmat(row, j) = -1.0 / l.capacitance;
    model.D(row, j) = 1.0 / l.capacitance;
  }
  return model;
}

Eigen::VectorXd rhs(const StateSpaceModel& model, const Eigen::VectorXd& x,
                    const Eigen::VectorXd& vref, const Eigen::VectorXd& p) {
  const Eigen::VectorXd v = model.load_voltages(x);
  if ((v.array().abs() < kSingularVoltage).any())
    throw SingularStateError("load voltage at the constant-power singularity");
  const Eigen::VectorXd h = p.cwiseQuotient(v);
  return model.A * x + model.B * vref + model.Cmat * h;
}

Eigen::MatrixXd jacobian(const StateSpaceModel& model, const Eigen::VectorXd& delta) {
  Eigen::MatrixXd J = model.A;
  const Eigen::Index off = model.index_map.load_offset();
  for (Eigen::Index j = 0; j < model.num_loads(); ++j)
    J(off + j, off + j) += model.D(off + j, j) * delta(j);
  return J;
}

Eigen::VectorXd load_delta(const Eigen::VectorXd& p, const Eigen::VectorXd& v_load) {
  return p.cwiseQuotient(v_load.cwiseAbs2());
}

DeltaBox delta_box(const NetworkCase& network, const Eigen::VectorXd& v_lo,
                   const Eigen::VectorXd& v_hi) {
  if (v_lo.size() != network.num_loads() || v_hi.size() != network.num_loads())
    throw Error("delta_box: voltage bounds must have one entry per load");
  if ((v_lo.array() <= 0.0).any() || (v_hi.array() <= 0.0).any())
    throw Error("delta_box: voltage bounds must be positive");
  if ((v_lo.array() > v_hi.array()).any()) throw Error("delta_box: v_lo must not exceed v_hi");
  return {network.p_min().cwiseQuotient(v_hi.cwiseAbs2()),
          network.p_max().cwiseQuotient(v_lo.cwiseAbs2())};
}

void dump_matrices(const StateSpaceModel& model, const std::filesystem::path& path) {
  auto rows = [](const Eigen::MatrixXd& m) {
    nlohmann::json out = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      std::vector<double> row(static_cast<std::size_t>(m.cols()));
      for (Eigen::Index j = 0; j < m.cols(); ++j) row[static_cast<std::size_t>(j)] = m(i, j);
      out.push_back(row);
    }
    return out;
  };
  nlohmann::json doc{{"A", rows(model.A)},
                     {"B", rows(model.B)},
                     {"C", rows(model.Cmat)},
                     {"D", rows(model.D)},
                     {"line_current_index", model.index_map.line_current_index},
                     {"source_voltage_index", model.index_map.source_voltage_index},
                     {"load_voltage_index", model.index_map.load_voltage_index}};
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << doc.dump(1) << '\n';
}

}  // namespace dcopf
