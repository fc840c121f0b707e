#include "fsim/simulation.hpp"

#include <chrono>
#include <cmath>

namespace fsim::sim {

namespace {

constexpr int iPv1 = 0;
constexpr int iPv2 = 1;
constexpr int iBat = 2;

/// Right-side-of-curve DC voltage where the array delivers p_w; used to park
/// an islanded PV at its droop reference before the settle roll.
double right_side_voltage(const pv::PvArrayParams& a, double irr, double temp, double p_w) {
  double lo = a.v_mp;
  double hi = a.v_oc;
  if (p_w >= lo * pv::pv_current(lo, irr, temp, a)) {
    return lo;
  }
  for (int it = 0; it < 100; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double p = mid * pv::pv_current(mid, irr, temp, a);
    (p > p_w ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

} // namespace

double Simulation::PvSystem::p_target_w() const {
  const double i_pv = pv::pv_current(v_dc, irradiance, temperature, array);
  const double i_target = i_pv + dc_gain * (v_dc - mppt.v_ref);
  return std::clamp(v_dc * i_target, 0.0, 1.2 * p_rated_w);
}

void Simulation::PvSystem::step_dc(double p_ac_w, double dt) {
  const double i_pv = pv::pv_current(v_dc, irradiance, temperature, array);
  const double i_inv = p_ac_w / std::max(v_dc, 1.0);
  const pv::DcLinkResult r = pv::dc_link_step(v_dc, i_pv, i_inv, c_dc, dt);
  v_dc = r.v_dc;
  // A sustained slide deep into the current-limited left side of the curve
  // is a brownout the averaged bridge cannot escape: report it as the
  // collapse event rather than waiting for an exact zero crossing.
  collapsed = collapsed || r.collapsed || v_dc < 0.35 * array.v_oc;
  if (mppt.enabled && ++tick >= mppt_decim) {
    tick = 0;
    mppt = pv::mppt_step(mppt, v_dc * i_pv, v_dc);
  }
}

void Simulation::PvSystem::on_enter_ccm() {
  mppt.enabled = true;
  mppt.v_ref = std::clamp(v_dc, mppt.v_min, mppt.v_max);
  mppt.last_p = 0.0; // first decimated sample re-establishes the direction
  mppt.direction = -1;
  tick = 0;
}

void Simulation::PvSystem::on_enter_vcm() { mppt.enabled = false; }

Simulation::Simulation(const Scenario& scenario) : sc_(scenario) {
  validate_scenario(sc_);

  net::PlantParams pp;
  pp.base = sc_.base;
  pp.dt = sc_.dt_s;
  pp.filter = {sc_.network.filter, sc_.network.filter, sc_.network.filter};
  pp.line = {sc_.network.line_pv1, sc_.network.line_pv2, sc_.network.line_bat};
  pp.grid = sc_.network.grid;

  net::LoadBank loads;
  loads.loads.push_back({net::kPcc, 1.0 / sc_.network.load_p_pu, sc_.network.load_x_pu});

  plant_ = std::make_unique<net::Plant>(pp, loads,
                                        net::BreakerState{!sc_.start_islanded, 0.0});
  state_ = plant_->initial_state();
  // Park the buses on a balanced 1 pu phasor aligned with the grid source.
  for (int s = 0; s < net::kNumInverters; ++s) {
    state_.v_cap[s] = balanced_abc(1.0, 0.0);
  }
  state_.v_pcc = balanced_abc(1.0, 0.0);

  const double omega_nom = sc_.base.omega_base();
  const auto pv_cfgs = std::array<const PvConfig*, 2>{&sc_.pv1, &sc_.pv2};
  for (int s = 0; s < 2; ++s) {
    const PvConfig& pc = *pv_cfgs[s];
    ctl::ControlConfig cfg;
    cfg.vsg.omega_nom = omega_nom;
    cfg.vsg.k_w = sc_.control.k_w;
    cfg.vsg.h = sc_.control.h_s;
    cfg.vsg.d = sc_.control.d;
    cfg.vsg.n_q = sc_.control.n_q;
    cfg.vsg.p_ref = std::max(pc.p_ref_pu, 0.0);
    cfg.vsg.q_ref = pc.q_ref_pu;
    cfg.adm = {sc_.control.r_v_pu, sc_.control.x_v_pu, omega_nom};
    cfg.f_bw_current_hz = sc_.control.f_bw_current_hz;
    cfg.f_bw_voltage_hz = sc_.control.f_bw_voltage_hz;
    cfg.f_bw_pll_hz = sc_.control.f_bw_pll_hz;
    cfg.p_avg_tau_s = sc_.control.p_avg_tau_s;
    cfg.i_limit_pu = sc_.control.i_limit_factor * pc.p_rated_w / sc_.base.s_base;
    cfg.lf_pu = sc_.network.filter.lf_pu;
    cfg.cf_pu = sc_.network.filter.cf_pu;
    cfg.rf_pu = sc_.network.filter.rf_pu;
    cfg.grid_forming_only = false;
    cfg.capture_p_ref_on_island = pc.p_ref_pu < 0.0;
    cfg.base = sc_.base;
    cfg.dt = sc_.dt_s;
    ctrl_[s] = std::make_unique<ctl::InverterControl>(cfg);

    PvSystem& ps = pv_[s];
    ps.array = pv::PvArrayParams::fit(pc.i_sc_a, pc.v_oc_v, pc.v_mp_v,
                                      pc.p_rated_w / pc.v_mp_v);
    ps.c_dc = pc.c_dc_f;
    ps.irradiance = pc.irradiance_wm2;
    ps.temperature = pc.temperature_c;
    ps.dc_gain = pc.dc_gain_a_per_v;
    ps.p_rated_w = pc.p_rated_w;
    ps.mppt.step_size = pc.mppt_step_v;
    ps.mppt.v_min = 0.1 * pc.v_oc_v;
    ps.mppt.v_max = pc.v_oc_v;
    ps.mppt_decim = std::max(1, static_cast<int>(std::lround(1.0 / (pc.mppt_rate_hz * sc_.dt_s))));

    double p0_pu;
    if (sc_.start_islanded) {
      ps.v_dc = right_side_voltage(ps.array, ps.irradiance, ps.temperature,
                                   pc.p_ref_pu * sc_.base.s_base);
      ps.mppt.enabled = false;
      p0_pu = pc.p_ref_pu;
      ctrl_[s]->seed(1.0, 0.0, ctl::Mode::Vcm, p0_pu, pc.q_ref_pu);
    } else {
      ps.v_dc = pc.v_mp_v;
      ps.mppt.enabled = true;
      p0_pu = pc.p_rated_w / sc_.base.s_base;
      ctrl_[s]->seed(1.0, 0.0, ctl::Mode::Ccm, p0_pu, 0.0);
    }
    ps.mppt.v_ref = std::clamp(ps.v_dc, ps.mppt.v_min, ps.mppt.v_max);
  }

  bat_params_ = sc_.battery.params;
  bat_params_.validate();
  bat_state_.soc = sc_.battery.soc0;
  {
    ctl::ControlConfig cfg;
    cfg.vsg.omega_nom = omega_nom;
    cfg.vsg.k_w = sc_.battery.k_w;
    cfg.vsg.d = 1.0;
    cfg.vsg.h = sc_.battery.t_w_s; // t_w = h/d
    cfg.vsg.n_q = sc_.battery.n_q;
    cfg.vsg.p_ref = sc_.battery.p_ref_pu;
    cfg.vsg.q_ref = sc_.battery.q_ref_pu;
    cfg.adm = {sc_.control.r_v_pu, sc_.control.x_v_pu, omega_nom};
    cfg.f_bw_current_hz = sc_.control.f_bw_current_hz;
    cfg.f_bw_voltage_hz = sc_.control.f_bw_voltage_hz;
    cfg.f_bw_pll_hz = sc_.control.f_bw_pll_hz;
    cfg.p_avg_tau_s = sc_.control.p_avg_tau_s;
    cfg.i_limit_pu = sc_.control.i_limit_factor *
                     std::max(bat_params_.p_rate_w, bat_params_.q_rate_var) / sc_.base.s_base;
    cfg.lf_pu = sc_.network.filter.lf_pu;
    cfg.cf_pu = sc_.network.filter.cf_pu;
    cfg.rf_pu = sc_.network.filter.rf_pu;
    cfg.grid_forming_only = true;
    cfg.capture_p_ref_on_island = false;
    cfg.base = sc_.base;
    cfg.dt = sc_.dt_s;
    ctrl_[iBat] = std::make_unique<ctl::InverterControl>(cfg);
    ctrl_[iBat]->seed(1.0, 0.0, ctl::Mode::Vcm, sc_.battery.p_ref_pu, sc_.battery.q_ref_pu);
  }

  sync_ = std::make_unique<sync::SyncUnit>(
      sc_.sync.thresholds, sc_.sync.gains,
      ctl::PllParams::from_bandwidth(sc_.control.f_bw_pll_hz, omega_nom), sc_.dt_s);
  sync_->seed(1.0, 0.0, 0.0, omega_nom);

  // Latch a unity voltage command so the first plant step already sees a
  // plausible source instead of a dead bridge.
  for (int s = 0; s < net::kNumInverters; ++s) {
    const double v_dc = s < 2 ? pv_[s].v_dc : sc_.battery.v_dc_v;
    const auto mod = ctl::modulation({1.0, 0.0, 0.0}, 0.0, v_dc, {true}, sc_.base);
    vsi_latch_[s] = {mod.m_abc, v_dc, true};
  }
}

void Simulation::apply_event(const Event& e, double t, RunReport& report) {
  switch (e.kind) {
    case EventKind::OpenBreaker:
      plant_->set_breaker(false, t);
      break;
    case EventKind::RequestResync:
      sync_->arm(t);
      break;
    case EventKind::LoadStep:
      plant_->set_loads(net::apply_load_step(plant_->loads(), e.value, t));
      break;
    case EventKind::IrradianceStep:
      if (e.target == Target::Pv1 || e.target == Target::BothPv) {
        pv_[0].irradiance = e.value;
      }
      if (e.target == Target::Pv2 || e.target == Target::BothPv) {
        pv_[1].irradiance = e.value;
      }
      break;
    case EventKind::SetEnable: {
      const int s = e.target == Target::Pv1 ? iPv1 : e.target == Target::Pv2 ? iPv2 : iBat;
      enabled_[s] = e.flag;
      break;
    }
    case EventKind::SetPRef: {
      const int s = e.target == Target::Pv1 ? iPv1 : e.target == Target::Pv2 ? iPv2 : iBat;
      ctrl_[s]->set_p_ref(e.value);
      break;
    }
  }
  report.event_log.push_back(describe(e));
}

RunResult Simulation::run() {
  const auto wall_start = std::chrono::steady_clock::now();
  RunResult result;
  RunReport& report = result.report;

  const double dt = sc_.dt_s;
  const long n_settle = std::lround(sc_.settle_s / dt);
  const long n_run = std::lround(sc_.duration_s / dt);
  const int decim = std::max(1, static_cast<int>(std::lround(1.0 / (sc_.telemetry_hz * dt))));

  std::size_t next_event = 0;
  std::array<ctl::Mode, 2> prev_mode = {ctrl_[0]->mode(), ctrl_[1]->mode()};

  for (long k = -n_settle; k < n_run; ++k) {
    const double t = static_cast<double>(k) * dt;
    if (k >= 0) {
      while (next_event < sc_.events.size() && sc_.events[next_event].t <= t + 0.5 * dt) {
        apply_event(sc_.events[next_event], t, report);
        ++next_event;
      }
    }

    try {
      state_ = plant_->step(state_, vsi_latch_);
    } catch (const net::BlowUpError& e) {
      report.aborted = true;
      report.abort_reason = e.what();
      report.abort_time = t;
      break;
    }
    const net::MeasurementSet meas = plant_->measure(state_);
    const bool grid_connected = plant_->breaker().closed;

    std::array<ctl::ControlOutputs, 3> outs;
    bool collapse_abort = false;
    for (int s = 0; s < net::kNumInverters; ++s) {
      ctl::ControlInputs in;
      in.v_o = meas.v_o[s];
      in.i_i = meas.i_i[s];
      in.i_o = meas.i_o[s];
      in.grid_connected = grid_connected;
      in.en = enabled_[s];
      in.omega_trim = trims_.omega_trim;
      in.v_trim = trims_.v_trim;
      in.v_dc_v = s < 2 ? pv_[s].v_dc : sc_.battery.v_dc_v;
      in.p_target_pu = s < 2 ? pv_[s].p_target_w() / sc_.base.s_base : 0.0;
      in.t = t;
      outs[s] = ctrl_[s]->step(in);

      if (s < 2 && outs[s].mode != prev_mode[s]) {
        if (outs[s].mode == ctl::Mode::Ccm) {
          pv_[s].on_enter_ccm();
        } else {
          pv_[s].on_enter_vcm();
        }
        prev_mode[s] = outs[s].mode;
      }

      // Power the VSI draws from its DC side (pu dot product, peak system).
      const Vec3 v_vsi =
          outs[s].m_abc * (in.v_dc_v * 0.5 / sc_.base.v_base_phase_peak());
      const double p_ac_w =
          (2.0 / 3.0) * v_vsi.dot(meas.i_i[s].v) * sc_.base.s_base;

      if (s < 2) {
        pv_[s].step_dc(p_ac_w, dt);
        if (pv_[s].collapsed) {
          report.aborted = true;
          report.abort_reason = "DC-link collapse on " + std::string(s == 0 ? "pv1" : "pv2") +
                                " (irradiance insufficient for the commanded power)";
          report.abort_time = t;
          collapse_abort = true;
        }
        vsi_latch_[s] = {outs[s].m_abc, pv_[s].v_dc, enabled_[s]};
      } else {
        const bess::BatteryStepResult br =
            bess::battery_step(bat_state_, p_ac_w, dt, bat_params_);
        bat_state_ = br.state;
        bat_limited_ = br.limited;
        vsi_latch_[s] = {outs[s].m_abc, sc_.battery.v_dc_v, enabled_[s]};
      }
    }
    if (collapse_abort) {
      break;
    }

    const sync::SyncUnit::StepResult sync_out = sync_->step(meas.v_grid_side, meas.v_pcc, t);
    trims_ = sync_out.trims;
    if (sync_out.permit && !plant_->breaker().closed) {
      plant_->set_breaker(true, t);
      sync_->disarm();
      trims_ = {};
      std::ostringstream os;
      os << "t=" << t << "s breaker closed by synchronizer (dtheta="
         << sync_out.status.delta_theta * 180.0 / kPi << " deg, dv=" << sync_out.status.delta_v
         << " pu, df=" << sync_out.status.delta_f << " Hz)";
      report.event_log.push_back(os.str());
    }

    if (k >= 0 && ((k + 1) % decim == 0)) {
      result.telemetry.push_back(
          make_record(static_cast<double>(k + 1) * dt, state_, outs, sync_out));
    }
    ++report.steps;
  }

  if (result.telemetry.size() >= 2) {
    RunReport metrics = summarize(result.telemetry);
    metrics.aborted = report.aborted;
    metrics.abort_reason = report.abort_reason;
    metrics.abort_time = report.abort_time;
    metrics.event_log = report.event_log;
    metrics.steps = report.steps;
    report = std::move(metrics);
  }
  report.wall_clock_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
  result.exit_code = report.aborted ? 2 : 0;
  return result;
}

TelemetryRecord Simulation::make_record(double t, const net::PlantState& state,
                                        const std::array<ctl::ControlOutputs, 3>& outs,
                                        const sync::SyncUnit::StepResult& sync_out) const {
  TelemetryRecord r;
  const double s_kw = sc_.base.s_base / 1e3;
  r.t = t;
  r.f_pv1_hz = outs[0].freq_hz;
  r.f_pv2_hz = outs[1].freq_hz;
  r.f_bat_hz = outs[2].freq_hz;
  r.p_pv1_kw = outs[0].p_avg_pu * s_kw;
  r.q_pv1_kvar = outs[0].q_avg_pu * s_kw;
  r.p_pv2_kw = outs[1].p_avg_pu * s_kw;
  r.q_pv2_kvar = outs[1].q_avg_pu * s_kw;
  r.p_bat_kw = outs[2].p_avg_pu * s_kw;
  r.q_bat_kvar = outs[2].q_avg_pu * s_kw;
  r.soc_bat = bat_state_.soc;
  r.mode_pv1 = outs[0].mode == ctl::Mode::Vcm ? 1 : 0;
  r.mode_pv2 = outs[1].mode == ctl::Mode::Vcm ? 1 : 0;
  r.v_pcc_peak_v = clarke<double>(state.v_pcc).norm() * sc_.base.v_base_phase_peak();
  r.theta_gi_deg = sync_out.status.delta_theta * 180.0 / kPi;
  r.dv_sync_pu = sync_out.status.delta_v;
  r.df_sync_hz = sync_out.status.delta_f;
  r.breaker_closed = plant_->breaker().closed ? 1 : 0;
  r.sync_armed = sync_out.status.armed ? 1 : 0;
  r.sync_in_band = sync_out.status.in_band_since.has_value() ? 1 : 0;
  r.sync_permit = sync_out.permit ? 1 : 0;
  r.p_ref_pv1_kw = outs[0].p_ref_pu * s_kw;
  r.p_ref_pv2_kw = outs[1].p_ref_pu * s_kw;
  r.p_ref_bat_kw = outs[2].p_ref_pu * s_kw;
  r.ang_pv1_deg = outs[0].pll_theta * 180.0 / kPi;
  r.ang_pv2_deg = outs[1].pll_theta * 180.0 / kPi;
  r.ang_bat_deg = outs[2].pll_theta * 180.0 / kPi;
  r.vdc_pv1_v = pv_[0].v_dc;
  r.vdc_pv2_v = pv_[1].v_dc;
  r.v_pv1_pu = outs[0].pll_v_pos_mag;
  r.v_pv2_pu = outs[1].pll_v_pos_mag;
  r.v_bat_pu = outs[2].pll_v_pos_mag;
  r.i_grid_peak_pu = clarke<double>(state.i_grid).norm();

  Vec3 i_load_total = Vec3::Zero();
  const auto& loads = plant_->loads().loads;
  for (std::size_t li = 0; li < loads.size(); ++li) {
    const auto& l = loads[li];
    if (l.x_pu > 0.0) {
      i_load_total += state.i_load[li];
    } else {
      const Vec3 v_bus = l.bus == net::kPcc ? state.v_pcc : state.v_cap[l.bus];
      i_load_total += v_bus / l.r_pu;
    }
  }
  r.i_load_peak_pu = clarke<double>(i_load_total).norm();

  std::uint32_t flags = 0;
  if (outs[0].overmodulated) flags |= kFlagOvermodPv1;
  if (outs[1].overmodulated) flags |= kFlagOvermodPv2;
  if (outs[2].overmodulated) flags |= kFlagOvermodBat;
  if (outs[0].current_saturated) flags |= kFlagSatPv1;
  if (outs[1].current_saturated) flags |= kFlagSatPv2;
  if (outs[2].current_saturated) flags |= kFlagSatBat;
  if (outs[0].pll_out_of_band) flags |= kFlagPllBandPv1;
  if (outs[1].pll_out_of_band) flags |= kFlagPllBandPv2;
  if (outs[2].pll_out_of_band) flags |= kFlagPllBandBat;
  if (outs[0].ride_through) flags |= kFlagRideThroughPv1;
  if (outs[1].ride_through) flags |= kFlagRideThroughPv2;
  if (bat_limited_) flags |= kFlagBatteryLimit;
  r.flags = flags;
  return r;
}

RunResult run_scenario(const Scenario& scenario) { return Simulation(scenario).run(); }

} // namespace fsim::sim
