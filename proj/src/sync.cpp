#include "fsim/sync.hpp"

#include <cmath>

namespace fsim::sync {

void SyncThresholds::validate() const {
  if (!(max_phase_err > 0.0) || !(max_volt_err > 0.0) || !(max_freq_err > 0.0) ||
      !(dwell > 0.0)) {
    throw ConfigError("SyncThresholds: all thresholds must be positive");
  }
}

SyncStatus sync_error(const PllView& grid, const PllView& island) {
  SyncStatus s;
  s.available = grid.in_band && island.in_band;
  s.delta_theta = wrap_angle(island.theta - grid.theta);
  s.delta_v = island.v_mag - grid.v_mag;
  s.delta_f = (island.omega - grid.omega) / kTwoPi;
  return s;
}

SyncTrims sync_adjust(const SyncStatus& status, const SyncGains& gains) {
  SyncTrims t;
  if (!status.armed || !status.available) {
    return t;
  }
  t.omega_trim = -gains.k_theta * status.delta_theta - gains.k_freq * kTwoPi * status.delta_f;
  t.omega_trim = std::clamp(t.omega_trim, -gains.omega_trim_max, gains.omega_trim_max);
  t.v_trim = std::clamp(-gains.k_volt * status.delta_v, -gains.v_trim_max, gains.v_trim_max);
  return t;
}

CloseDecision check_and_close(const SyncStatus& status, const SyncThresholds& thr, double t) {
  CloseDecision d{status, false};
  if (!status.armed || !status.available) {
    d.status.in_band_since.reset();
    return d;
  }
  const bool in_band = std::abs(status.delta_theta) < thr.max_phase_err &&
                       std::abs(status.delta_v) < thr.max_volt_err &&
                       std::abs(status.delta_f) < thr.max_freq_err;
  if (!in_band) {
    d.status.in_band_since.reset();
    return d;
  }
  if (!d.status.in_band_since) {
    d.status.in_band_since = t;
  }
  d.permit = (t - *d.status.in_band_since) >= thr.dwell;
  return d;
}

SyncUnit::SyncUnit(const SyncThresholds& thr, const SyncGains& gains,
                   const ctl::PllParams& pll_params, double dt)
    : thr_(thr), gains_(gains), pll_params_(pll_params), dt_(dt) {
  thr_.validate();
  if (!(gains_.update_hz > 0.0)) {
    throw ConfigError("SyncGains: update rate must be positive");
  }
  decim_ = std::max(1, static_cast<int>(std::lround(1.0 / (gains_.update_hz * dt))));
}

void SyncUnit::seed(double amp, double theta_grid, double theta_island, double omega) {
  ctl::pll_preset(pll_grid_, amp, theta_grid, omega, pll_params_.omega_nom);
  ctl::pll_preset(pll_island_, amp, theta_island, omega, pll_params_.omega_nom);
}

void SyncUnit::arm(double t) {
  status_.armed = true;
  status_.in_band_since.reset();
  (void)t;
}

void SyncUnit::disarm() {
  status_ = SyncStatus{};
  trims_ = SyncTrims{};
  tick_ = 0;
}

SyncUnit::StepResult SyncUnit::step(const ThreePhaseSample& v_grid_side,
                                    const ThreePhaseSample& v_island, double t) {
  const ctl::PllOutput g = ctl::dsogi_pll_step(pll_grid_, v_grid_side, dt_, pll_params_);
  const ctl::PllOutput i = ctl::dsogi_pll_step(pll_island_, v_island, dt_, pll_params_);

  const PllView gv{g.theta_plus, g.omega_hat, g.v_pos_mag, !g.out_of_band};
  const PllView iv{i.theta_plus, i.omega_hat, i.v_pos_mag, !i.out_of_band};
  SyncStatus s = sync_error(gv, iv);
  s.armed = status_.armed;
  s.in_band_since = status_.in_band_since;

  StepResult out;
  if (status_.armed && (tick_++ % decim_) == 0) {
    const CloseDecision d = check_and_close(s, thr_, t);
    status_ = d.status;
    trims_ = sync_adjust(status_, gains_);
    out.permit = d.permit;
  } else {
    status_ = s; // telemetry view refreshes every step, trims hold
  }
  out.trims = trims_;
  out.status = status_;
  return out;
}

} // namespace fsim::sync
