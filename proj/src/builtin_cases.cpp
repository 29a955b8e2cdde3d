#include "dcopf/error.hpp"
#include "dcopf/netcase.hpp"

#include <algorithm>
#include <array>
#include <set>
#include <sstream>

namespace dcopf {

namespace {

struct Topology {
  std::string_view name;
  int num_buses;
  std::vector<int> generators;
  std::string_view branches;  // whitespace separated "from-to" pairs
};

// Bus numbering, generator buses and branch lists of the IEEE test systems.
// Parallel circuits are kept as separate lines.
const std::array<Topology, 6>& topologies() {
  static const std::array<Topology, 6> table{{
      {"ieee9", 9, {1, 2, 3}, "1-4 4-5 5-6 3-6 6-7 7-8 8-2 8-9 9-4"},
      {"ieee14", 14, {1, 2, 3, 6, 8},
       "1-2 1-5 2-3 2-4 2-5 3-4 4-5 4-7 4-9 5-6 6-11 6-12 6-13 7-8 7-9 9-10 9-14 10-11 12-13 "
       "13-14"},
      {"ieee30", 30, {1, 2, 5, 8, 11, 13},
       "1-2 1-3 2-4 3-4 2-5 2-6 4-6 5-7 6-7 6-8 6-9 6-10 9-11 9-10 4-12 12-13 12-14 12-15 12-16 "
       "14-15 16-17 15-18 18-19 19-20 10-20 10-17 10-21 10-22 21-22 15-23 22-24 23-24 24-25 25-26 "
       "25-27 28-27 27-29 27-30 29-30 8-28 6-28"},
      {"ieee39", 39, {30, 31, 32, 33, 34, 35, 36, 37, 38, 39},
       "1-2 1-39 2-3 2-25 2-30 3-4 3-18 4-5 4-14 5-6 5-8 6-7 6-11 6-31 7-8 8-9 9-39 10-11 10-13 "
       "10-32 12-11 12-13 13-14 14-15 15-16 16-17 16-19 16-21 16-24 17-18 17-27 19-20 19-33 20-34 "
       "21-22 22-23 22-35 23-24 23-36 25-26 25-37 26-27 26-28 26-29 28-29 29-38"},
      {"ieee69", 69, {1},
       "1-2 2-3 3-4 4-5 5-6 6-7 7-8 8-9 9-10 10-11 11-12 12-13 13-14 14-15 15-16 16-17 17-18 "
       "18-19 19-20 20-21 21-22 22-23 23-24 24-25 25-26 26-27 3-28 28-29 29-30 30-31 31-32 32-33 "
       "33-34 34-35 3-36 36-37 37-38 38-39 39-40 40-41 41-42 42-43 43-44 44-45 45-46 4-47 47-48 "
       "48-49 49-50 8-51 51-52 9-53 53-54 54-55 55-56 56-57 57-58 58-59 59-60 60-61 61-62 62-63 "
       "63-64 64-65 11-66 66-67 12-68 68-69"},
      {"ieee118", 118,
       {1,  4,  6,  8,  10, 12, 15, 18, 19, 24, 25, 26, 27, 31, 32, 34, 36, 40,
        42, 46, 49, 54, 55, 56, 59, 61, 62, 65, 66, 69, 70, 72, 73, 74, 76, 77,
        80, 85, 87, 89, 90, 91, 92, 99, 100, 103, 104, 105, 107, 110, 111, 112, 113, 116},
       "1-2 1-3 4-5 3-5 5-6 6-7 8-9 8-5 9-10 4-11 5-11 11-12 2-12 3-12 7-12 11-13 12-14 13-15 "
       "14-15 12-16 15-17 16-17 17-18 18-19 19-20 15-19 20-21 21-22 22-23 23-24 23-25 26-25 25-27 "
       "27-28 28-29 30-17 8-30 26-30 17-31 29-31 23-32 31-32 27-32 15-33 19-34 35-36 35-37 33-37 "
       "34-36 34-37 38-37 37-39 37-40 30-38 39-40 40-41 40-42 41-42 43-44 34-43 44-45 45-46 46-47 "
       "46-48 47-49 42-49 42-49 45-49 48-49 49-50 49-51 51-52 52-53 53-54 49-54 49-54 54-55 54-56 "
       "55-56 56-57 50-57 56-58 51-58 54-59 56-59 56-59 55-59 59-60 59-61 60-61 60-62 61-62 63-59 "
       "63-64 64-61 38-65 64-65 49-66 49-66 62-66 62-67 65-66 66-67 65-68 47-69 49-69 68-69 69-70 "
       "24-70 70-71 24-72 71-72 71-73 70-74 70-75 69-75 74-75 76-77 69-77 75-77 77-78 78-79 77-80 "
       "77-80 79-80 68-81 81-80 77-82 82-83 83-84 83-85 84-85 85-86 86-87 85-88 85-89 88-89 89-90 "
       "89-90 90-91 89-92 89-92 91-92 92-93 92-94 93-94 94-95 80-96 82-96 94-96 80-97 80-98 80-99 "
       "92-100 94-100 95-96 96-97 98-100 99-100 100-101 92-102 101-102 100-103 100-104 103-104 "
       "103-105 100-106 104-105 105-106 105-107 105-108 106-107 108-109 103-110 109-110 110-111 "
       "110-112 17-113 32-113 32-114 27-115 114-115 68-116 12-117 75-118 76-118"},
  }};
  return table;
}

// Uniform component parameters of the 14-bus study, applied to every case.
constexpr double kSourceResistance = 0.05;
constexpr double kLoadResistance = 5.0;
constexpr double kLineResistance = 0.05;
constexpr double kLineInductance = 3e-3;
constexpr double kSourceCapacitance = 0.75e-3;
constexpr double kLoadCapacitance = 0.9e-3;
constexpr double kPowerNominal = 25e3;
constexpr double kPowerMax = 50e3;
constexpr double kVoltageMin = 425.0;
constexpr double kVoltageMax = 575.0;

SourceParams uniform_source(std::string bus) {
  return {std::move(bus), kSourceResistance, kSourceCapacitance, kVoltageMin, kVoltageMax};
}

LoadParams uniform_load(std::string bus) {
  return {std::move(bus), kLoadResistance, kLoadCapacitance, kPowerNominal, 0.0,
          kPowerMax,      kVoltageMin,     kVoltageMax};
}

NetworkCase from_topology(const Topology& topo) {
  NetworkCase network;
  network.name = std::string(topo.name);
  const std::set<int> generators(topo.generators.begin(), topo.generators.end());
  for (int b = 1; b <= topo.num_buses; ++b) {
    const auto id = std::to_string(b);
    const bool is_source = generators.count(b) == 1;
    network.buses.push_back({id, is_source ? BusKind::source : BusKind::load});
    if (is_source)
      network.sources.push_back(uniform_source(id));
    else
      network.loads.push_back(uniform_load(id));
  }
  std::istringstream branches{std::string(topo.branches)};
  std::string token;
  int k = 0;
  while (branches >> token) {
    const auto dash = token.find('-');
    network.lines.push_back({"L" + std::to_string(++k), token.substr(0, dash),
                             token.substr(dash + 1), kLineResistance, kLineInductance});
  }
  validate(network);
  return network;
}

}  // namespace

NetworkCase builtin_case(std::string_view name) {
  for (const auto& topo : topologies())
    if (topo.name == name) return from_topology(topo);
  throw CaseError("unknown builtin case", std::string(name));
}

std::vector<std::string> builtin_case_names() {
  std::vector<std::string> names;
  for (const auto& topo : topologies()) names.emplace_back(topo.name);
  return names;
}

NetworkCase two_bus_case() {
  NetworkCase network;
  network.name = "twobus";
  network.buses = {{"s", BusKind::source}, {"l", BusKind::load}};
  network.lines = {{"L1", "s", "l", kLineResistance, kLineInductance}};
  network.sources = {uniform_source("s")};
  network.loads = {uniform_load("l")};
  validate(network);
  return network;
}

}  // namespace dcopf
