#include "dcopf/netcase.hpp"

#include "dcopf/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <initializer_list>
#include <map>
#include <queue>
#include <set>
#include <sstream>

namespace dcopf {

using json = nlohmann::json;

namespace {

template <typename T, typename F>
Eigen::VectorXd collect(const std::vector<T>& items, F field) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(items.size()));
  for (std::size_t i = 0; i < items.size(); ++i) out(static_cast<Eigen::Index>(i)) = field(items[i]);
  return out;
}

bool positive(double v) { return std::isfinite(v) && v > 0.0; }

void require(bool condition, const std::string& message, const std::string& element) {
  if (!condition) throw CaseError(message, element);
}

}  // namespace

Eigen::VectorXd NetworkCase::p_nominal() const {
  return collect(loads, [](const LoadParams& l) { return l.p_nominal; });
}
Eigen::VectorXd NetworkCase::p_min() const {
  return collect(loads, [](const LoadParams& l) { return l.p_min; });
}
Eigen::VectorXd NetworkCase::p_max() const {
  return collect(loads, [](const LoadParams& l) { return l.p_max; });
}
Eigen::VectorXd NetworkCase::v_min() const {
  return collect(loads, [](const LoadParams& l) { return l.v_min; });
}
Eigen::VectorXd NetworkCase::v_max() const {
  return collect(loads, [](const LoadParams& l) { return l.v_max; });
}
Eigen::VectorXd NetworkCase::vref_min() const {
  return collect(sources, [](const SourceParams& s) { return s.vref_min; });
}
Eigen::VectorXd NetworkCase::vref_max() const {
  return collect(sources, [](const SourceParams& s) { return s.vref_max; });
}

void validate(const NetworkCase& network) {
  std::map<std::string, BusKind> kinds;
  for (const auto& bus : network.buses) {
    require(!bus.id.empty(), "bus id must not be empty", bus.id);
    require(kinds.emplace(bus.id, bus.kind).second, "duplicate bus id", bus.id);
  }
  const auto n_source_buses =
      std::count_if(network.buses.begin(), network.buses.end(),
                    [](const Bus& b) { return b.kind == BusKind::source; });
  require(n_source_buses >= 1, "case needs at least one source bus", network.name);
  require(n_source_buses < static_cast<long>(network.buses.size()),
          "case needs at least one load bus", network.name);

  std::set<std::string> line_ids;
  std::map<std::string, std::vector<std::string>> adjacency;
  for (const auto& line : network.lines) {
    require(!line.id.empty(), "line id must not be empty", line.id);
    require(line_ids.insert(line.id).second, "duplicate line id", line.id);
    require(kinds.count(line.from) == 1, "line endpoint 'from' is not a bus", line.id);
    require(kinds.count(line.to) == 1, "line endpoint 'to' is not a bus", line.id);
    require(line.from != line.to, "line endpoints must differ", line.id);
    require(positive(line.resistance), "line resistance must be positive", line.id);
    require(positive(line.inductance), "line inductance must be positive", line.id);
    adjacency[line.from].push_back(line.to);
    adjacency[line.to].push_back(line.from);
  }

  std::set<std::string> seen_sources;
  for (const auto& src : network.sources) {
    require(kinds.count(src.bus) == 1, "source attached to unknown bus", src.bus);
    require(kinds[src.bus] == BusKind::source, "source parameters on a load bus", src.bus);
    require(seen_sources.insert(src.bus).second, "more than one source on a bus", src.bus);
    require(positive(src.series_resistance), "source resistance must be positive", src.bus);
    require(positive(src.capacitance), "source capacitance must be positive", src.bus);
    require(positive(src.vref_min), "vref_min must be positive", src.bus);
    require(std::isfinite(src.vref_max) && src.vref_min <= src.vref_max,
            "vref_min must not exceed vref_max", src.bus);
  }
  std::set<std::string> seen_loads;
  for (const auto& load : network.loads) {
    require(kinds.count(load.bus) == 1, "load attached to unknown bus", load.bus);
    require(kinds[load.bus] == BusKind::load, "load parameters on a source bus", load.bus);
    require(seen_loads.insert(load.bus).second, "more than one load on a bus", load.bus);
    require(positive(load.shunt_resistance), "load shunt resistance must be positive", load.bus);
    require(positive(load.capacitance), "load capacitance must be positive", load.bus);
    require(std::isfinite(load.p_min) && load.p_min >= 0.0, "p_min must be nonnegative",
            load.bus);
    require(std::isfinite(load.p_nominal) && std::isfinite(load.p_max) &&
                load.p_min <= load.p_nominal && load.p_nominal <= load.p_max,
            "load powers must satisfy p_min <= p_nominal <= p_max", load.bus);
    require(positive(load.v_min), "v_min must be positive", load.bus);
    require(std::isfinite(load.v_max) && load.v_min < load.v_max, "v_min must be below v_max",
            load.bus);
  }
  for (const auto& [id, kind] : kinds) {
    if (kind == BusKind::source)
      require(seen_sources.count(id) == 1, "source bus has no source parameters", id);
    else
      require(seen_loads.count(id) == 1, "load bus has no load parameters", id);
  }

  // connectivity
  std::set<std::string> reached{network.buses.front().id};
  std::queue<std::string> frontier;
  frontier.push(network.buses.front().id);
  while (!frontier.empty()) {
    const auto bus = frontier.front();
    frontier.pop();
    for (const auto& next : adjacency[bus])
      if (reached.insert(next).second) frontier.push(next);
  }
  for (const auto& bus : network.buses)
    require(reached.count(bus.id) == 1, "network is not connected; unreachable bus", bus.id);

  const auto ns = static_cast<std::size_t>(network.num_sources());
  if (network.cost.kind == CostKind::quadratic) {
    require(network.cost.quadratic.size() == ns * ns, "quadratic cost must be n_s x n_s",
            network.name);
    require(network.cost.linear.empty() || network.cost.linear.size() == ns,
            "linear cost must have n_s entries", network.name);
    Eigen::MatrixXd q(static_cast<Eigen::Index>(ns), static_cast<Eigen::Index>(ns));
    for (std::size_t i = 0; i < ns; ++i)
      for (std::size_t j = 0; j < ns; ++j)
        q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            network.cost.quadratic[i * ns + j];
    require(q.allFinite(), "quadratic cost must be finite", network.name);
    const Eigen::MatrixXd sym = 0.5 * (q + q.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
    const double scale = std::max(1.0, sym.cwiseAbs().maxCoeff());
    require(eig.eigenvalues().minCoeff() >= -1e-12 * scale,
            "quadratic cost must be positive semidefinite", network.name);
  }
}

namespace {

void check_keys(const json& obj, std::initializer_list<const char*> allowed,
                const std::string& context) {
  if (!obj.is_object()) throw CaseError("expected an object", context);
  for (const auto& item : obj.items()) {
    const bool known = std::any_of(allowed.begin(), allowed.end(),
                                   [&](const char* k) { return item.key() == k; });
    if (!known) throw CaseError("unknown key '" + item.key() + "'", context);
  }
}

template <typename T>
T field(const json& obj, const char* key, const std::string& context) {
  if (!obj.contains(key)) throw CaseError(std::string("missing key '") + key + "'", context);
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw CaseError(std::string("wrong type for key '") + key + "'", context);
  }
}

std::string element_name(const json& obj, const char* key, const char* fallback) {
  if (obj.is_object() && obj.contains(key) && obj.at(key).is_string())
    return obj.at(key).get<std::string>();
  return fallback;
}

}  // namespace

NetworkCase parse_case(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw CaseError(std::string("malformed case file: ") + e.what());
  }
  check_keys(doc, {"name", "buses", "lines", "sources", "loads", "cost"}, "case");

  NetworkCase network;
  if (doc.contains("name")) network.name = field<std::string>(doc, "name", "case");
  for (const char* section : {"buses", "lines", "sources", "loads"})
    if (!doc.contains(section) || !doc.at(section).is_array())
      throw CaseError(std::string("missing array '") + section + "'", "case");

  for (const auto& b : doc.at("buses")) {
    const auto ctx = element_name(b, "id", "bus");
    check_keys(b, {"id", "kind"}, ctx);
    Bus bus;
    bus.id = field<std::string>(b, "id", ctx);
    const auto kind = field<std::string>(b, "kind", ctx);
    if (kind == "source")
      bus.kind = BusKind::source;
    else if (kind == "load")
      bus.kind = BusKind::load;
    else
      throw CaseError("bus kind must be 'source' or 'load'", ctx);
    network.buses.push_back(std::move(bus));
  }
  for (const auto& l : doc.at("lines")) {
    const auto ctx = element_name(l, "id", "line");
    check_keys(l, {"id", "from", "to", "r_ohm", "l_henry"}, ctx);
    network.lines.push_back({field<std::string>(l, "id", ctx), field<std::string>(l, "from", ctx),
                             field<std::string>(l, "to", ctx), field<double>(l, "r_ohm", ctx),
                             field<double>(l, "l_henry", ctx)});
  }
  for (const auto& s : doc.at("sources")) {
    const auto ctx = element_name(s, "bus", "source");
    check_keys(s, {"bus", "r_ohm", "c_farad", "vref_min", "vref_max"}, ctx);
    network.sources.push_back({field<std::string>(s, "bus", ctx), field<double>(s, "r_ohm", ctx),
                               field<double>(s, "c_farad", ctx), field<double>(s, "vref_min", ctx),
                               field<double>(s, "vref_max", ctx)});
  }
  for (const auto& l : doc.at("loads")) {
    const auto ctx = element_name(l, "bus", "load");
    check_keys(l, {"bus", "r_ohm", "c_farad", "p_nom_w", "p_min_w", "p_max_w", "v_min", "v_max"},
               ctx);
    network.loads.push_back({field<std::string>(l, "bus", ctx), field<double>(l, "r_ohm", ctx),
                             field<double>(l, "c_farad", ctx), field<double>(l, "p_nom_w", ctx),
                             field<double>(l, "p_min_w", ctx), field<double>(l, "p_max_w", ctx),
                             field<double>(l, "v_min", ctx), field<double>(l, "v_max", ctx)});
  }
  if (doc.contains("cost")) {
    const auto& c = doc.at("cost");
    check_keys(c, {"kind", "q", "c"}, "cost");
    const auto kind = field<std::string>(c, "kind", "cost");
    if (kind == "nominal_losses") {
      network.cost.kind = CostKind::nominal_losses;
    } else if (kind == "quadratic") {
      network.cost.kind = CostKind::quadratic;
      const auto rows = field<std::vector<std::vector<double>>>(c, "q", "cost");
      for (const auto& row : rows) {
        if (row.size() != rows.size()) throw CaseError("quadratic cost must be square", "cost");
        network.cost.quadratic.insert(network.cost.quadratic.end(), row.begin(), row.end());
      }
      if (c.contains("c")) network.cost.linear = field<std::vector<double>>(c, "c", "cost");
    } else {
      throw CaseError("cost kind must be 'nominal_losses' or 'quadratic'", "cost");
    }
  }
  validate(network);
  return network;
}

std::string case_to_json(const NetworkCase& network) {
  json doc;
  if (!network.name.empty()) doc["name"] = network.name;
  doc["buses"] = json::array();
  for (const auto& b : network.buses)
    doc["buses"].push_back({{"id", b.id}, {"kind", b.kind == BusKind::source ? "source" : "load"}});
  doc["lines"] = json::array();
  for (const auto& l : network.lines)
    doc["lines"].push_back({{"id", l.id},
                            {"from", l.from},
                            {"to", l.to},
                            {"r_ohm", l.resistance},
                            {"l_henry", l.inductance}});
  doc["sources"] = json::array();
  for (const auto& s : network.sources)
    doc["sources"].push_back({{"bus", s.bus},
                              {"r_ohm", s.series_resistance},
                              {"c_farad", s.capacitance},
                              {"vref_min", s.vref_min},
                              {"vref_max", s.vref_max}});
  doc["loads"] = json::array();
  for (const auto& l : network.loads)
    doc["loads"].push_back({{"bus", l.bus},
                            {"r_ohm", l.shunt_resistance},
                            {"c_farad", l.capacitance},
                            {"p_nom_w", l.p_nominal},
                            {"p_min_w", l.p_min},
                            {"p_max_w", l.p_max},
                            {"v_min", l.v_min},
                            {"v_max", l.v_max}});
  if (network.cost.kind == CostKind::nominal_losses) {
    doc["cost"] = {{"kind", "nominal_losses"}};
  } else {
    const auto ns = network.sources.size();
    json rows = json::array();
    for (std::size_t i = 0; i < ns; ++i)
      rows.push_back(std::vector<double>(network.cost.quadratic.begin() + static_cast<long>(i * ns),
                                         network.cost.quadratic.begin() +
                                             static_cast<long>((i + 1) * ns)));
    doc["cost"] = {{"kind", "quadratic"}, {"q", rows}};
    if (!network.cost.linear.empty()) doc["cost"]["c"] = network.cost.linear;
  }
  return doc.dump(2);
}

NetworkCase load_case(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open case file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_case(buffer.str());
}

void save_case(const NetworkCase& network, const std::filesystem::path& path) {
  validate(network);
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << case_to_json(network) << '\n';
  out.flush();
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace dcopf
