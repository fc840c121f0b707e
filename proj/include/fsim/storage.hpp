#pragma once
// Community battery: coulomb-counting energy model behind a droop-controlled
// VSI without virtual inertia (the inner loops are shared with the control
// module; here only the energy bookkeeping and the static droop live).

#include "fsim/control.hpp"
#include "fsim/simcore.hpp"

namespace fsim::bess {

struct BatteryParams {
  double p_rate_w{30e3};
  double q_rate_var{30e3};
  double usable_wh{50e3};
  double nominal_wh{80e3};
  double dod_limit{0.95};
  double efficiency{0.97};
  double v_dc_min{384.0};
  double v_dc_max{498.0};

  double soc_min() const { return 1.0 - dod_limit; }
  void validate() const;
};

struct BatteryState {
  double soc{0.5};  // fraction of usable capacity
  double p_dc_w{0.0};
};

struct BatteryStepResult {
  BatteryState state;
  double p_delivered_w{0.0}; // after rating and SoC limiting
  bool limited{false};
};

/// Coulomb counting over one step. Positive p_ac discharges. Power is
/// clamped to the rating; at an SoC bound the offending direction is forced
/// to zero and the limit is reported as an event, not a fault.
BatteryStepResult battery_step(const BatteryState& state, double p_ac_w, double dt,
                               const BatteryParams& params);

struct DroopRefs {
  double omega_ref{100.0 * kPi};
  double v_ref{1.0};
};

/// Static droop (t_w = 0): omega responds algebraically, no inertial lag.
DroopRefs bess_droop_step(const ctl::VsgParams& vsg, double p_avg_pu, double q_avg_pu);

} // namespace fsim::bess
