#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace dcopf {

enum class BusKind { source, load };

struct Bus {
  std::string id;
  BusKind kind = BusKind::load;
  bool operator==(const Bus&) const = default;
};

/// Series RL line. Current is positive from `from` to `to`.
struct Line {
  std::string id;
  std::string from;
  std::string to;
  double resistance = 0.0;  // ohm
  double inductance = 0.0;  // henry
  bool operator==(const Line&) const = default;
};

/// Voltage source behind a series resistance, with its terminal capacitance.
struct SourceParams {
  std::string bus;
  double series_resistance = 0.0;  // ohm
  double capacitance = 0.0;        // farad
  double vref_min = 0.0;           // volt
  double vref_max = 0.0;           // volt
  bool operator==(const SourceParams&) const = default;
};

/// Constant-power load in parallel with a shunt resistance and capacitance.
struct LoadParams {
  std::string bus;
  double shunt_resistance = 0.0;  // ohm
  double capacitance = 0.0;       // farad
  double p_nominal = 0.0;         // watt
  double p_min = 0.0;             // watt
  double p_max = 0.0;             // watt
  double v_min = 0.0;             // volt
  double v_max = 0.0;             // volt
  bool operator==(const LoadParams&) const = default;
};

enum class CostKind { nominal_losses, quadratic };

/// Objective of the OPF problems. The quadratic form acts on the set points:
/// f(vref) = vref' Q vref + c' vref, with Q stored row-major (n_s x n_s).
struct CostSpec {
  CostKind kind = CostKind::nominal_losses;
  std::vector<double> quadratic;
  std::vector<double> linear;
  bool operator==(const CostSpec&) const = default;
};

/// Static description of a DC network. Vector-valued quantities elsewhere in
/// the library (set points, load powers, load voltages) follow the order of
/// `sources` and `loads`.
struct NetworkCase {
  std::string name;
  std::vector<Bus> buses;
  std::vector<Line> lines;
  std::vector<SourceParams> sources;
  std::vector<LoadParams> loads;
  CostSpec cost;

  bool operator==(const NetworkCase&) const = default;

  Eigen::Index num_sources() const { return static_cast<Eigen::Index>(sources.size()); }
  Eigen::Index num_loads() const { return static_cast<Eigen::Index>(loads.size()); }
  Eigen::Index num_lines() const { return static_cast<Eigen::Index>(lines.size()); }
  /// n = n_s + n_t + n_l
  Eigen::Index num_states() const { return num_sources() + num_lines() + num_loads(); }

  Eigen::VectorXd p_nominal() const;
  Eigen::VectorXd p_min() const;
  Eigen::VectorXd p_max() const;
  Eigen::VectorXd v_min() const;
  Eigen::VectorXd v_max() const;
  Eigen::VectorXd vref_min() const;
  Eigen::VectorXd vref_max() const;
};

/// Checks every invariant of the data model; throws CaseError naming the
/// violated rule and the offending element.
void validate(const NetworkCase& network);

NetworkCase parse_case(std::string_view json_text);
std::string case_to_json(const NetworkCase& network);

NetworkCase load_case(const std::filesystem::path& path);
void save_case(const NetworkCase& network, const std::filesystem::path& path);

/// DC adaptations of IEEE test systems: generator buses become sources, every
/// other bus a constant-power load, with uniform component parameters.
NetworkCase builtin_case(std::string_view name);
std::vector<std::string> builtin_case_names();

/// One source, one line, one load, with the uniform parameters of the
/// builtin cases. Used throughout the tests as the closed-form reference.
NetworkCase two_bus_case();

}  // namespace dcopf
