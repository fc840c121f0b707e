#include "fsim/scenario.hpp"

#include "fsim/pv.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace fsim::sim {

using nlohmann::json;

std::string describe(const Event& e) {
  std::ostringstream os;
  os << "t=" << e.t << "s ";
  const char* tgt = e.target == Target::Pv1      ? "pv1"
                    : e.target == Target::Pv2    ? "pv2"
                    : e.target == Target::BothPv ? "pv"
                                                 : "battery";
  switch (e.kind) {
    case EventKind::OpenBreaker: os << "open_breaker"; break;
    case EventKind::RequestResync: os << "request_resync"; break;
    case EventKind::LoadStep: os << "load_step delta=" << e.value << " pu"; break;
    case EventKind::IrradianceStep:
      os << "irradiance_step " << tgt << " -> " << e.value << " W/m2";
      break;
    case EventKind::SetEnable: os << "set_enable " << tgt << " -> " << (e.flag ? "on" : "off"); break;
    case EventKind::SetPRef: os << "set_p_ref " << tgt << " -> " << e.value << " pu"; break;
  }
  return os.str();
}

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw ConfigError("scenario: " + path + ": " + what);
}

void expect_keys(const json& j, const std::string& path, const std::set<std::string>& allowed) {
  if (!j.is_object()) {
    fail(path, "expected an object");
  }
  for (const auto& item : j.items()) {
    if (!allowed.count(item.key())) {
      fail(path + "/" + item.key(), "unknown key");
    }
  }
}

class Reader {
 public:
  Reader(const json& j, std::string path, std::vector<std::string>& defaults)
      : j_(j), path_(std::move(path)), defaults_(defaults) {}

  double num(const std::string& key, double def) {
    if (!j_.contains(key)) {
      note_default(key, def);
      return def;
    }
    if (!j_.at(key).is_number()) {
      fail(path_ + "/" + key, "expected a number");
    }
    return j_.at(key).get<double>();
  }

  /// A number that may be JSON null (mapped to the sentinel).
  double num_or_null(const std::string& key, double def, double null_value) {
    if (!j_.contains(key)) {
      note_default(key, def);
      return def;
    }
    if (j_.at(key).is_null()) {
      return null_value;
    }
    if (!j_.at(key).is_number()) {
      fail(path_ + "/" + key, "expected a number or null");
    }
    return j_.at(key).get<double>();
  }

  bool boolean(const std::string& key, bool def) {
    if (!j_.contains(key)) {
      note_default(key, def ? 1.0 : 0.0);
      return def;
    }
    if (!j_.at(key).is_boolean()) {
      fail(path_ + "/" + key, "expected a boolean");
    }
    return j_.at(key).get<bool>();
  }

  std::string str(const std::string& key, const std::string& def) {
    if (!j_.contains(key)) {
      defaults_.push_back(path_ + "/" + key + " = \"" + def + "\"");
      return def;
    }
    if (!j_.at(key).is_string()) {
      fail(path_ + "/" + key, "expected a string");
    }
    return j_.at(key).get<std::string>();
  }

 private:
  void note_default(const std::string& key, double def) {
    std::ostringstream os;
    os << path_ << "/" << key << " = " << def;
    defaults_.push_back(os.str());
  }

  const json& j_;
  std::string path_;
  std::vector<std::string>& defaults_;
};

json sub(const json& j, const std::string& key) {
  return j.contains(key) ? j.at(key) : json::object();
}

PvConfig parse_pv(const json& j, const std::string& path, std::vector<std::string>& defaults) {
  expect_keys(j, path,
              {"p_rated_w", "v_oc_v", "v_mp_v", "i_sc_a", "c_dc_f", "irradiance_wm2",
               "temperature_c", "p_ref_pu", "q_ref_pu", "mppt_step_v", "mppt_rate_hz",
               "dc_gain_a_per_v"});
  Reader r(j, path, defaults);
  PvConfig p;
  p.p_rated_w = r.num("p_rated_w", p.p_rated_w);
  p.v_oc_v = r.num("v_oc_v", p.v_oc_v);
  p.v_mp_v = r.num("v_mp_v", p.v_mp_v);
  p.i_sc_a = r.num("i_sc_a", p.i_sc_a);
  p.c_dc_f = r.num("c_dc_f", p.c_dc_f);
  p.irradiance_wm2 = r.num("irradiance_wm2", p.irradiance_wm2);
  p.temperature_c = r.num("temperature_c", p.temperature_c);
  p.p_ref_pu = r.num_or_null("p_ref_pu", -1.0, -1.0);
  p.q_ref_pu = r.num("q_ref_pu", p.q_ref_pu);
  p.mppt_step_v = r.num("mppt_step_v", p.mppt_step_v);
  p.mppt_rate_hz = r.num("mppt_rate_hz", p.mppt_rate_hz);
  p.dc_gain_a_per_v = r.num("dc_gain_a_per_v", p.dc_gain_a_per_v);
  return p;
}

net::LineParams parse_line(const json& j, const std::string& path,
                           std::vector<std::string>& defaults, net::LineParams def) {
  expect_keys(j, path, {"r_pu", "x_pu"});
  Reader r(j, path, defaults);
  return {r.num("r_pu", def.r_pu), r.num("x_pu", def.x_pu)};
}

Event parse_event(const json& j, const std::string& path, std::vector<std::string>& defaults) {
  expect_keys(j, path, {"t_s", "kind", "target", "delta_pu", "wm2", "on", "p_pu"});
  Reader r(j, path, defaults);
  Event e;
  if (!j.contains("t_s") || !j.contains("kind")) {
    fail(path, "events need t_s and kind");
  }
  e.t = r.num("t_s", 0.0);
  const std::string kind = r.str("kind", "");
  const std::string target = r.str("target", "pv1");
  if (target == "pv1") {
    e.target = Target::Pv1;
  } else if (target == "pv2") {
    e.target = Target::Pv2;
  } else if (target == "battery") {
    e.target = Target::Battery;
  } else if (target == "both_pv") {
    e.target = Target::BothPv;
  } else {
    fail(path + "/target", "expected pv1|pv2|battery|both_pv, got \"" + target + "\"");
  }
  if (kind == "open_breaker") {
    e.kind = EventKind::OpenBreaker;
  } else if (kind == "request_resync") {
    e.kind = EventKind::RequestResync;
  } else if (kind == "load_step") {
    e.kind = EventKind::LoadStep;
    if (!j.contains("delta_pu")) fail(path, "load_step needs delta_pu");
    e.value = r.num("delta_pu", 0.0);
  } else if (kind == "irradiance_step") {
    e.kind = EventKind::IrradianceStep;
    if (!j.contains("wm2")) fail(path, "irradiance_step needs wm2");
    e.value = r.num("wm2", 1000.0);
  } else if (kind == "set_enable") {
    e.kind = EventKind::SetEnable;
    if (!j.contains("on")) fail(path, "set_enable needs on");
    e.flag = r.boolean("on", true);
  } else if (kind == "set_p_ref") {
    e.kind = EventKind::SetPRef;
    if (!j.contains("p_pu")) fail(path, "set_p_ref needs p_pu");
    e.value = r.num("p_pu", 0.0);
  } else {
    fail(path + "/kind", "unknown event kind \"" + kind + "\"");
  }
  return e;
}

} // namespace

Scenario load_scenario(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("scenario: JSON parse error: ") + e.what());
  }
  expect_keys(j, "", {"schema_version", "name", "duration_s", "dt_s", "settle_s",
                      "telemetry_hz", "start_islanded", "base", "network", "pv1", "pv2",
                      "battery", "control", "synchronizer", "events"});

  Scenario s;
  Reader top(j, "", s.defaults_applied);
  const double ver = top.num("schema_version", 1.0);
  if (ver != 1.0) {
    fail("/schema_version", "unsupported schema version");
  }
  s.schema_version = 1;
  s.name = top.str("name", "unnamed");
  s.duration_s = top.num("duration_s", s.duration_s);
  s.dt_s = top.num("dt_s", s.dt_s);
  s.settle_s = top.num("settle_s", s.settle_s);
  s.telemetry_hz = top.num("telemetry_hz", s.telemetry_hz);
  s.start_islanded = top.boolean("start_islanded", false);

  {
    const json jb = sub(j, "base");
    expect_keys(jb, "/base", {"s_va", "v_ll", "f_hz"});
    Reader r(jb, "/base", s.defaults_applied);
    s.base = PerUnitBase::make(r.num("s_va", 50e3), r.num("v_ll", 400.0), r.num("f_hz", 50.0));
  }
  {
    const json jn = sub(j, "network");
    expect_keys(jn, "/network",
                {"filter", "line_pv1", "line_pv2", "line_bat", "grid", "load"});
    const json jf = sub(jn, "filter");
    expect_keys(jf, "/network/filter", {"lf_pu", "cf_pu", "rf_pu"});
    Reader rf(jf, "/network/filter", s.defaults_applied);
    s.network.filter.lf_pu = rf.num("lf_pu", s.network.filter.lf_pu);
    s.network.filter.cf_pu = rf.num("cf_pu", s.network.filter.cf_pu);
    s.network.filter.rf_pu = rf.num("rf_pu", s.network.filter.rf_pu);
    s.network.line_pv1 = parse_line(sub(jn, "line_pv1"), "/network/line_pv1",
                                    s.defaults_applied, s.network.line_pv1);
    s.network.line_pv2 = parse_line(sub(jn, "line_pv2"), "/network/line_pv2",
                                    s.defaults_applied, s.network.line_pv2);
    s.network.line_bat = parse_line(sub(jn, "line_bat"), "/network/line_bat",
                                    s.defaults_applied, s.network.line_bat);
    const json jg = sub(jn, "grid");
    expect_keys(jg, "/network/grid", {"v_pu", "r_pu", "x_pu", "f_hz"});
    Reader rg(jg, "/network/grid", s.defaults_applied);
    s.network.grid.v_th_pu = rg.num("v_pu", s.network.grid.v_th_pu);
    s.network.grid.r_pu = rg.num("r_pu", s.network.grid.r_pu);
    s.network.grid.x_pu = rg.num("x_pu", s.network.grid.x_pu);
    s.network.grid.f_hz = rg.num("f_hz", s.network.grid.f_hz);
    const json jl = sub(jn, "load");
    expect_keys(jl, "/network/load", {"p_pu", "x_pu"});
    Reader rl(jl, "/network/load", s.defaults_applied);
    s.network.load_p_pu = rl.num("p_pu", s.network.load_p_pu);
    s.network.load_x_pu = rl.num("x_pu", s.network.load_x_pu);
  }
  s.pv1 = parse_pv(sub(j, "pv1"), "/pv1", s.defaults_applied);
  s.pv2 = parse_pv(sub(j, "pv2"), "/pv2", s.defaults_applied);
  {
    const json jb = sub(j, "battery");
    expect_keys(jb, "/battery",
                {"p_rate_w", "q_rate_var", "usable_wh", "nominal_wh", "dod", "efficiency",
                 "soc0", "p_ref_pu", "q_ref_pu", "k_w", "n_q", "t_w_s", "v_dc_v"});
    Reader r(jb, "/battery", s.defaults_applied);
    auto& bp = s.battery.params;
    bp.p_rate_w = r.num("p_rate_w", bp.p_rate_w);
    bp.q_rate_var = r.num("q_rate_var", bp.q_rate_var);
    bp.usable_wh = r.num("usable_wh", bp.usable_wh);
    bp.nominal_wh = r.num("nominal_wh", bp.nominal_wh);
    bp.dod_limit = r.num("dod", bp.dod_limit);
    bp.efficiency = r.num("efficiency", bp.efficiency);
    s.battery.soc0 = r.num("soc0", s.battery.soc0);
    s.battery.p_ref_pu = r.num("p_ref_pu", s.battery.p_ref_pu);
    s.battery.q_ref_pu = r.num("q_ref_pu", s.battery.q_ref_pu);
    s.battery.k_w = r.num("k_w", s.battery.k_w);
    s.battery.n_q = r.num("n_q", s.battery.n_q);
    s.battery.t_w_s = r.num("t_w_s", s.battery.t_w_s);
    s.battery.v_dc_v = r.num("v_dc_v", s.battery.v_dc_v);
  }
  {
    const json jc = sub(j, "control");
    expect_keys(jc, "/control",
                {"k_w", "h_s", "d", "n_q", "r_v_pu", "x_v_pu", "f_bw_current_hz",
                 "f_bw_voltage_hz", "f_bw_pll_hz", "p_avg_tau_s", "i_limit_factor"});
    Reader r(jc, "/control", s.defaults_applied);
    auto& c = s.control;
    c.k_w = r.num("k_w", c.k_w);
    c.h_s = r.num("h_s", c.h_s);
    c.d = r.num("d", c.d);
    c.n_q = r.num("n_q", c.n_q);
    c.r_v_pu = r.num("r_v_pu", c.r_v_pu);
    c.x_v_pu = r.num("x_v_pu", c.x_v_pu);
    c.f_bw_current_hz = r.num("f_bw_current_hz", c.f_bw_current_hz);
    c.f_bw_voltage_hz = r.num("f_bw_voltage_hz", c.f_bw_voltage_hz);
    c.f_bw_pll_hz = r.num("f_bw_pll_hz", c.f_bw_pll_hz);
    c.p_avg_tau_s = r.num("p_avg_tau_s", c.p_avg_tau_s);
    c.i_limit_factor = r.num("i_limit_factor", c.i_limit_factor);
  }
  {
    const json js = sub(j, "synchronizer");
    expect_keys(js, "/synchronizer",
                {"max_phase_err_deg", "max_volt_err_pu", "max_freq_err_hz", "dwell_s",
                 "k_theta", "k_freq", "k_volt", "update_hz"});
    Reader r(js, "/synchronizer", s.defaults_applied);
    auto& thr = s.sync.thresholds;
    thr.max_phase_err = r.num("max_phase_err_deg", 5.0) * kPi / 180.0;
    thr.max_volt_err = r.num("max_volt_err_pu", thr.max_volt_err);
    thr.max_freq_err = r.num("max_freq_err_hz", thr.max_freq_err);
    thr.dwell = r.num("dwell_s", thr.dwell);
    auto& g = s.sync.gains;
    g.k_theta = r.num("k_theta", g.k_theta);
    g.k_freq = r.num("k_freq", g.k_freq);
    g.k_volt = r.num("k_volt", g.k_volt);
    g.update_hz = r.num("update_hz", g.update_hz);
  }
  if (j.contains("events")) {
    if (!j.at("events").is_array()) {
      fail("/events", "expected an array");
    }
    int idx = 0;
    for (const auto& je : j.at("events")) {
      s.events.push_back(parse_event(je, "/events/" + std::to_string(idx), s.defaults_applied));
      ++idx;
    }
  }
  std::stable_sort(s.events.begin(), s.events.end(),
                   [](const Event& a, const Event& b) { return a.t < b.t; });
  validate_scenario(s);
  return s;
}

Scenario load_scenario_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("scenario: cannot open file " + path);
  }
  std::ostringstream os;
  os << in.rdbuf();
  return load_scenario(os.str());
}

void validate_scenario(const Scenario& s) {
  if (!(s.duration_s > 0.0)) {
    fail("/duration_s", "must be positive");
  }
  if (std::abs(s.dt_s - 1e-4) > 1e-12) {
    fail("/dt_s", "the plant and control step is fixed at 100 us (1e-4 s)");
  }
  if (s.settle_s < 0.0) {
    fail("/settle_s", "must be non-negative");
  }
  if (!(s.telemetry_hz > 0.0) ||
      std::abs(std::round(1.0 / (s.telemetry_hz * s.dt_s)) - 1.0 / (s.telemetry_hz * s.dt_s)) >
          1e-9) {
    fail("/telemetry_hz", "must divide the 10 kHz stepping rate");
  }
  net::validate_filter(s.network.filter, s.dt_s, s.base.f_base);
  if (!(s.network.load_p_pu > 0.0)) {
    fail("/network/load/p_pu", "baseline load must be positive");
  }
  for (const auto& line : {s.network.line_pv1, s.network.line_pv2, s.network.line_bat}) {
    if (!(line.r_pu > 0.0) || !(line.x_pu > 0.0)) {
      fail("/network/line_*", "line r and x must be positive");
    }
  }
  for (const auto* pvc : {&s.pv1, &s.pv2}) {
    // Reject anchors the curve fit cannot represent before the run starts.
    pv::PvArrayParams::fit(pvc->i_sc_a, pvc->v_oc_v, pvc->v_mp_v,
                           pvc->p_rated_w / pvc->v_mp_v);
    if (!(pvc->c_dc_f > 0.0)) {
      fail("/pv*/c_dc_f", "DC-link capacitance must be positive");
    }
    if (!(pvc->mppt_rate_hz > 0.0) || !(pvc->mppt_step_v > 0.0)) {
      fail("/pv*/mppt", "MPPT rate and step must be positive");
    }
  }
  s.battery.params.validate();
  if (s.battery.soc0 < s.battery.params.soc_min() || s.battery.soc0 > 1.0) {
    fail("/battery/soc0", "initial SoC outside the usable window");
  }
  if (!(s.control.k_w > 0.0) || !(s.battery.k_w > 0.0)) {
    fail("/control/k_w", "droop coefficients must be positive");
  }
  s.sync.thresholds.validate();
  for (std::size_t i = 0; i < s.events.size(); ++i) {
    const auto& e = s.events[i];
    if (e.t < 0.0 || e.t > s.duration_s) {
      fail("/events/" + std::to_string(i) + "/t_s", "event time outside [0, duration]");
    }
  }
  if (s.start_islanded) {
    if (s.pv1.p_ref_pu < 0.0 || s.pv2.p_ref_pu < 0.0) {
      fail("/pv*/p_ref_pu", "islanded start needs explicit PV power references");
    }
  }
}

} // namespace fsim::sim
