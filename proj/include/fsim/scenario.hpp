#pragma once
// Scenario documents: the JSON schema, validation with key-path diagnostics,
// and the built-in fixtures. Unknown keys are rejected; every default that
// gets filled in is logged so a run can echo its effective configuration.

#include "fsim/network.hpp"
#include "fsim/simcore.hpp"
#include "fsim/storage.hpp"
#include "fsim/sync.hpp"

#include <string>
#include <vector>

namespace fsim::sim {

enum class EventKind {
  OpenBreaker,
  RequestResync,
  LoadStep,
  IrradianceStep,
  SetEnable,
  SetPRef,
};

enum class Target { Pv1, Pv2, Battery, BothPv };

struct Event {
  double t{0.0};
  EventKind kind{EventKind::OpenBreaker};
  Target target{Target::Pv1};
  double value{0.0}; // load delta (pu) / irradiance (W/m2) / p_ref (pu)
  bool flag{true};   // set_enable payload
};

std::string describe(const Event& e);

struct PvConfig {
  double p_rated_w{22e3};
  double v_oc_v{700.0};
  double v_mp_v{580.0};
  double i_sc_a{40.0};
  double c_dc_f{0.01};
  double irradiance_wm2{1000.0};
  double temperature_c{25.0};
  double p_ref_pu{-1.0}; // < 0: captured from the running average at islanding
  double q_ref_pu{0.0};
  double mppt_step_v{2.0};
  double mppt_rate_hz{10.0};
  double dc_gain_a_per_v{0.5};
};

struct BatteryConfig {
  bess::BatteryParams params{};
  double soc0{0.5};
  double p_ref_pu{0.0};
  double q_ref_pu{0.0};
  double k_w{0.02};
  double n_q{0.05};
  double t_w_s{0.0}; // no inertial lag in the battery droop by default
  double v_dc_v{700.0};
};

struct ControlDefaults {
  double k_w{0.02};
  double h_s{2.0};
  double d{40.0};
  double n_q{0.05};
  double r_v_pu{0.05};
  double x_v_pu{0.25};
  double f_bw_current_hz{1000.0};
  double f_bw_voltage_hz{2.0};
  double f_bw_pll_hz{20.0};
  double p_avg_tau_s{0.005};
  double i_limit_factor{1.2};
};

struct NetworkConfig {
  net::LcFilterParams filter{};
  net::LineParams line_pv1{0.02, 0.007};
  net::LineParams line_pv2{0.02, 0.007};
  net::LineParams line_bat{0.01, 0.0035};
  net::GridEquivalent grid{};
  double load_p_pu{0.6};
  double load_x_pu{0.0};
};

struct SyncConfig {
  sync::SyncThresholds thresholds{};
  sync::SyncGains gains{};
};

struct Scenario {
  int schema_version{1};
  std::string name{"unnamed"};
  double duration_s{5.0};
  double dt_s{1e-4};
  double settle_s{1.0};
  double telemetry_hz{1000.0};
  bool start_islanded{false};
  PerUnitBase base{50e3, 400.0, 50.0};
  NetworkConfig network{};
  PvConfig pv1{};
  PvConfig pv2{};
  BatteryConfig battery{};
  ControlDefaults control{};
  SyncConfig sync{};
  std::vector<Event> events;

  std::vector<std::string> defaults_applied; // loader bookkeeping
};

/// Parses and fully validates a scenario document. Unknown keys and
/// invariant violations throw ConfigError naming the offending key path.
Scenario load_scenario(const std::string& json_text);
Scenario load_scenario_file(const std::string& path);

/// Re-checks the cross-field invariants (also called by load_scenario).
void validate_scenario(const Scenario& s);

/// Built-in fixtures (case1_island, case2_resync, ...).
std::vector<std::string> builtin_scenario_names();
bool is_builtin_scenario(const std::string& name);
std::string builtin_scenario_json(const std::string& name);

} // namespace fsim::sim
