#pragma once
// Resynchronization supervisor: measures grid-vs-island phase, voltage and
// frequency mismatch from two PLL views, derives proportional trims for the
// grid-forming references, and grants breaker closure after the errors have
// stayed inside the tolerance band for a contiguous dwell time.

#include "fsim/control.hpp"
#include "fsim/simcore.hpp"

#include <optional>

namespace fsim::sync {

struct SyncThresholds {
  double max_phase_err{5.0 * kPi / 180.0}; // rad
  double max_volt_err{0.02};               // pu
  double max_freq_err{0.05};               // Hz
  double dwell{0.1};                       // s

  void validate() const;
};

struct SyncGains {
  // k_theta * update period must stay well under 1 or the sampled trim loop
  // limit-cycles instead of settling; k_freq acts through a one-tick delay
  // and must stay below 1 for the same reason.
  double k_theta{40.0}; // rad/s per rad
  double k_freq{0.25};  // rad/s per rad/s
  double k_volt{1.0};   // pu per pu
  double omega_trim_max{kTwoPi * 0.5}; // rad/s (0.5 Hz)
  double v_trim_max{0.05};             // pu
  double update_hz{100.0};
};

/// One PLL view of a bus: angle, frequency, positive-sequence magnitude.
struct PllView {
  double theta{0.0};
  double omega{0.0};
  double v_mag{0.0};
  bool in_band{true};
};

struct SyncStatus {
  double delta_theta{0.0}; // rad, island minus grid, wrapped
  double delta_v{0.0};     // pu, island minus grid
  double delta_f{0.0};     // Hz, island minus grid
  std::optional<double> in_band_since;
  bool armed{false};
  bool available{true}; // false while either PLL is out of band
};

/// Wrapped angle/magnitude/frequency differences between the two views.
SyncStatus sync_error(const PllView& grid, const PllView& island);

struct SyncTrims {
  double omega_trim{0.0}; // rad/s, added to every grid-forming omega_ref
  double v_trim{0.0};     // pu, added to every grid-forming v_ref
};

/// Proportional trims, clamped. Positive delta_theta (island ahead) slows
/// the island down.
SyncTrims sync_adjust(const SyncStatus& status, const SyncGains& gains);

struct CloseDecision {
  SyncStatus status;
  bool permit{false};
};

/// Grants closure only after all errors stay inside the thresholds for a
/// full contiguous dwell; leaving the band restarts the timer.
CloseDecision check_and_close(const SyncStatus& status, const SyncThresholds& thr, double t);

/// Stateful wrapper stepped by the harness: owns the two PLLs and the
/// 100 Hz trim/permission schedule. Trims take effect one step later.
class SyncUnit {
 public:
  SyncUnit(const SyncThresholds& thr, const SyncGains& gains, const ctl::PllParams& pll_params,
           double dt);

  void seed(double amp, double theta_grid, double theta_island, double omega);
  void arm(double t);
  void disarm();
  bool armed() const { return status_.armed; }

  struct StepResult {
    SyncTrims trims;
    SyncStatus status;
    bool permit{false};
  };

  /// Feed the two bus voltages each simulation step; trims and the close
  /// permission refresh on the update_hz schedule.
  StepResult step(const ThreePhaseSample& v_grid_side, const ThreePhaseSample& v_island,
                  double t);

 private:
  SyncThresholds thr_;
  SyncGains gains_;
  ctl::PllParams pll_params_;
  double dt_;
  int decim_{1};
  int tick_{0};
  ctl::DsogiPllState pll_grid_;
  ctl::DsogiPllState pll_island_;
  SyncStatus status_;
  SyncTrims trims_;
};

} // namespace fsim::sync
