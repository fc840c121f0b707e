#include "fsim/storage.hpp"

#include <cmath>

namespace fsim::bess {

void BatteryParams::validate() const {
  if (!(usable_wh > 0.0) || usable_wh > nominal_wh) {
    throw ConfigError("BatteryParams: need 0 < usable <= nominal capacity");
  }
  if (!(dod_limit > 0.0) || dod_limit > 1.0) {
    throw ConfigError("BatteryParams: DoD limit must be in (0, 1]");
  }
  if (!(efficiency > 0.0) || efficiency > 1.0) {
    throw ConfigError("BatteryParams: efficiency must be in (0, 1]");
  }
}

BatteryStepResult battery_step(const BatteryState& state, double p_ac_w, double dt,
                               const BatteryParams& params) {
  if (!(dt > 0.0)) {
    throw ConfigError("battery_step: dt must be positive");
  }
  BatteryStepResult out;
  double p = p_ac_w;
  bool limited = false;
  if (std::abs(p) > params.p_rate_w) {
    p = std::copysign(params.p_rate_w, p);
    limited = true;
  }
  if (p > 0.0 && state.soc <= params.soc_min()) {
    p = 0.0;
    limited = true;
  } else if (p < 0.0 && state.soc >= 1.0) {
    p = 0.0;
    limited = true;
  }
  // Discharge draws p/eta from the cells; charge stores p*eta.
  const double p_dc = p > 0.0 ? p / params.efficiency : p * params.efficiency;
  const double de = p_dc * dt / 3600.0; // Wh
  out.state.soc = std::clamp(state.soc - de / params.usable_wh, params.soc_min(), 1.0);
  out.state.p_dc_w = p_dc;
  out.p_delivered_w = p;
  out.limited = limited;
  return out;
}

DroopRefs bess_droop_step(const ctl::VsgParams& vsg, double p_avg_pu, double q_avg_pu) {
  FirstOrderLagState passthrough; // t_const = 0: Eq. (3) with the lag removed
  DroopRefs refs;
  refs.omega_ref = ctl::freq_ref_step(vsg, passthrough, p_avg_pu, 1.0);
  refs.v_ref = ctl::volt_ref(vsg, q_avg_pu);
  return refs;
}

} // namespace fsim::bess
