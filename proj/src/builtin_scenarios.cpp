#include "fsim/scenario.hpp"

#include <map>

namespace fsim::sim {

namespace {

// Shipped fixtures. The timelines are declared assumptions: the experiments
// they mirror report signal shapes, not schedules.

const char* kSteadyGrid = R"json({
  "schema_version": 1,
  "name": "steady_grid",
  "duration_s": 5.0,
  "events": []
})json";

const char* kCase1Island = R"json({
  "schema_version": 1,
  "name": "case1_island",
  "duration_s": 6.0,
  "events": [
    {"t_s": 2.0, "kind": "open_breaker"}
  ]
})json";

const char* kCase2Resync = R"json({
  "schema_version": 1,
  "name": "case2_resync",
  "duration_s": 15.0,
  "start_islanded": true,
  "settle_s": 2.0,
  "pv1": {"p_ref_pu": 0.30},
  "pv2": {"p_ref_pu": 0.30},
  "events": [
    {"t_s": 2.0, "kind": "request_resync"}
  ]
})json";

const char* kCase4Inertia = R"json({
  "schema_version": 1,
  "name": "case4_inertia",
  "duration_s": 4.0,
  "start_islanded": true,
  "settle_s": 2.0,
  "pv1": {"p_ref_pu": 0.30},
  "pv2": {"p_ref_pu": 0.30},
  "battery": {"t_w_s": 0.05},
  "events": [
    {"t_s": 1.0, "kind": "load_step", "delta_pu": 0.1}
  ]
})json";

const char* kCase4Static = R"json({
  "schema_version": 1,
  "name": "case4_static",
  "duration_s": 4.0,
  "start_islanded": true,
  "settle_s": 2.0,
  "pv1": {"p_ref_pu": 0.30},
  "pv2": {"p_ref_pu": 0.30},
  "control": {"h_s": 0.0},
  "battery": {"t_w_s": 0.0},
  "events": [
    {"t_s": 1.0, "kind": "load_step", "delta_pu": 0.1}
  ]
})json";

const std::map<std::string, const char*>& builtin_map() {
  static const std::map<std::string, const char*> m = {
      {"steady_grid", kSteadyGrid},
      {"case1_island", kCase1Island},
      {"case2_resync", kCase2Resync},
      {"case4_inertia", kCase4Inertia},
      {"case4_static", kCase4Static},
  };
  return m;
}

} // namespace

std::vector<std::string> builtin_scenario_names() {
  std::vector<std::string> names;
  for (const auto& [name, text] : builtin_map()) {
    names.push_back(name);
  }
  return names;
}

bool is_builtin_scenario(const std::string& name) {
  return builtin_map().count(name) > 0;
}

std::string builtin_scenario_json(const std::string& name) {
  const auto it = builtin_map().find(name);
  if (it == builtin_map().end()) {
    throw ConfigError("unknown built-in scenario \"" + name + "\"");
  }
  return it->second;
}

} // namespace fsim::sim
