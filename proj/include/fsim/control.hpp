#pragma once
// Grid-forming control stack for one inverter: DSOGI-PLL, power averaging,
// virtual-inertia frequency reference, reactive droop voltage reference,
// virtual admittance, decoupled SRF voltage/current loops and the modulation
// stage, plus the CCM (grid-following, MPPT current injection) path and the
// CCM/VCM switching logic with bumpless transfer.

#include "fsim/simcore.hpp"

#include <optional>

namespace fsim::ctl {

// ---------------------------------------------------------------------------
// DSOGI PLL

struct PllParams {
  double omega_nom{100.0 * kPi};
  double k_sogi{1.4142135623730951};
  double kp{0.0};
  double ki{0.0};
  double band_lo{0.8};  // pu of omega_nom
  double band_hi{1.2};

  static PllParams from_bandwidth(double f_bw_hz, double omega_nom = 100.0 * kPi);
};

/// One SOGI quadrature generator: x = (v', qv').
struct SogiState {
  Vec2 x{Vec2::Zero()};
  double prev_u{0.0};
};

struct DsogiPllState {
  SogiState sogi_alpha;
  SogiState sogi_beta;
  double theta_plus{0.0};
  double theta_minus{0.0};
  double omega_hat{100.0 * kPi};
  double loop_int{0.0};
  bool out_of_band{false};
  Vec2 v_pos{Vec2::Zero()}; // positive-sequence alpha/beta estimate
  Vec2 v_neg{Vec2::Zero()};
};

struct PllOutput {
  double theta_plus{0.0};
  double theta_minus{0.0};
  double omega_hat{0.0};
  double v_pos_mag{0.0};
  double v_neg_mag{0.0};
  bool out_of_band{false};
};

/// Seeds the PLL at a balanced steady state (amplitude, angle, frequency).
void pll_preset(DsogiPllState& s, double amp, double theta, double omega,
                double omega_nom = 100.0 * kPi);

PllOutput dsogi_pll_step(DsogiPllState& s, const ThreePhaseSample& v_abc, double dt,
                         const PllParams& p);

// ---------------------------------------------------------------------------
// Outer references

/// Droop / virtual-inertia parameter block shared by the PV and battery
/// controllers. t_w = h/d; the battery uses h = 0 (static droop).
struct VsgParams {
  double omega_nom{100.0 * kPi};
  double k_w{0.02};   // pu frequency per pu power
  double h{2.0};      // inertia constant, s
  double d{40.0};     // damping coefficient
  double p_ref{0.0};  // pu
  double q_ref{0.0};  // pu
  double v_nom{1.0};  // pu
  double n_q{0.05};   // pu voltage per pu reactive power

  double t_w() const { return h / d; }
  void validate() const;
};

struct PowerAverager {
  FirstOrderLagState p_lag;
  FirstOrderLagState q_lag;

  static PowerAverager with_tau(double tau_s);
};

struct AvgPowers {
  double p{0.0};
  double q{0.0};
};

/// Instantaneous pu power from same-frame dq pairs, then lag-filtered.
/// In the peak per-unit system p = vd*id + vq*iq (3/2 factor absorbed).
AvgPowers compute_avg_powers(const DqQuantity& v_dq, const DqQuantity& i_dq,
                             PowerAverager& avg, double dt);

/// omega_ref = omega_nom - lag(k_w * (p_avg - p_ref)), rad/s.
double freq_ref_step(const VsgParams& vsg, FirstOrderLagState& lag, double p_avg, double dt);

/// v_ref = v_nom - n_q * (q_avg - q_ref), memoryless.
double volt_ref(const VsgParams& vsg, double q_avg);

// ---------------------------------------------------------------------------
// Inner loops

struct VirtualAdmittanceParams {
  double r_v{0.05}; // pu
  double x_v{0.25}; // pu
  double omega_base{100.0 * kPi};
};

struct VirtualAdmittanceState {
  Vec2 i{Vec2::Zero()};
  Vec2 prev_v_err{Vec2::Zero()};
};

struct CurrentRef {
  Vec2 i_dq{Vec2::Zero()};
  bool saturated{false};
};

/// Voltage error through the simulated R_v + jX_v admittance, magnitude
/// limited with phase preservation.
CurrentRef virtual_admittance_step(const DqQuantity& v_ref_dq, const DqQuantity& v_meas_dq,
                                   VirtualAdmittanceState& state,
                                   const VirtualAdmittanceParams& p, double omega, double dt,
                                   double i_limit);

struct SrfGains {
  double kp_v{0.0};
  double ki_v{0.0};
  double kp_i{0.0};
  double ki_i{0.0};
  double c_sec{0.0};     // filter capacitance, pu*s
  double l_sec{0.0};     // filter inductance, pu*s
  double v_cmd_limit{1.5};
  double i_axis_limit{1.5};
  // Angle of the output impedance the voltage trim acts through. The error
  // is rotated by -this before integration; without it the two axis
  // integrators couple through the reactive part into a slow, barely damped
  // d/q oscillation.
  double trim_rot{0.0};
};

struct SrfLoopState {
  PiState pi_vd;
  PiState pi_vq;
  PiState pi_id;
  PiState pi_iq;

  static SrfLoopState make(const SrfGains& g);
};

/// Outer voltage regulator with capacitor cross decoupling. Returns a
/// current-reference contribution added to the admittance path; the
/// admittance stays the dynamic output impedance (no load-current
/// feedforward, which would make the bus look stiff), the integral part
/// removes the steady-state sag.
Vec2 srf_voltage_step(const DqQuantity& v_ref_dq, const DqQuantity& v_meas_dq,
                      SrfLoopState& s, const SrfGains& g, double omega, double dt,
                      bool freeze_integrators);

/// Inner current PI with inductor decoupling and measured-voltage
/// feedforward; returns the voltage command in pu.
Vec2 srf_current_step(const Vec2& i_ref_dq, const DqQuantity& i_meas_dq,
                      const DqQuantity& v_meas_dq, SrfLoopState& s, const SrfGains& g,
                      double omega, double dt);

// ---------------------------------------------------------------------------
// Modulation

struct EnableFlag {
  bool en{true};
};

struct ModulationResult {
  Vec3 m_abc{Vec3::Zero()};
  bool overmodulated{false};
  bool tripped{false};
};

/// dq voltage command (pu) -> per-phase modulation index. A min/max
/// zero-sequence injection centers the envelope (three-wire plant, so the
/// common-mode term drives no current) before the [-1, 1] clamp.
ModulationResult modulation(const DqQuantity& v_cmd_pu, double theta, double v_dc_v,
                            const EnableFlag& en, const PerUnitBase& base);

// ---------------------------------------------------------------------------
// Mode switching and the CCM power loop

enum class Mode { Ccm, Vcm };

struct ControlMode {
  Mode mode{Mode::Ccm};
  double transition_time{0.0};
};

/// Grid-connected and enabled -> CCM; islanded and enabled -> VCM. The
/// bumpless state preloading is done by InverterControl when the returned
/// mode differs from the current one.
ControlMode select_mode(bool grid_connected, bool en, const ControlMode& mode, double t);

struct CcmState {
  Vec2 frozen_ref{Vec2::Zero()};
  bool ride_through{false};
  double v_hold_threshold{0.2}; // pu
};

/// d-axis current from the power target, q-axis from q_ref; freezes the
/// references below the ride-through voltage threshold.
Vec2 ccm_power_loop(double p_target_pu, const DqQuantity& v_dq, double q_ref_pu, CcmState& s);

// ---------------------------------------------------------------------------
// Aggregate controller for one inverter

struct ControlConfig {
  VsgParams vsg{};
  VirtualAdmittanceParams adm{};
  double f_bw_current_hz{1000.0};
  double f_bw_voltage_hz{2.0};
  double f_bw_pll_hz{20.0};
  double p_avg_tau_s{0.005};
  double i_limit_pu{0.53};          // 1.2x of the inverter rating
  double lf_pu{0.08};
  double cf_pu{0.05};
  double rf_pu{0.005};
  bool grid_forming_only{false};    // battery: droop VCM in both grid states
  bool capture_p_ref_on_island{true};
  PerUnitBase base{};
  double dt{1e-4};
};

struct ControlInputs {
  ThreePhaseSample v_o;
  ThreePhaseSample i_i;
  ThreePhaseSample i_o;
  bool grid_connected{true};
  bool en{true};
  double omega_trim{0.0}; // rad/s, from the synchronizer
  double v_trim{0.0};     // pu
  double v_dc_v{700.0};
  double p_target_pu{0.0}; // CCM power command
  double t{0.0};
};

struct ControlOutputs {
  Vec3 m_abc{Vec3::Zero()};
  Mode mode{Mode::Ccm};
  double freq_hz{50.0};     // internal frequency (PLL in CCM, omega_ref in VCM)
  double p_avg_pu{0.0};
  double q_avg_pu{0.0};
  double p_ref_pu{0.0};
  double omega_ref{100.0 * kPi};
  double theta_frame{0.0};
  double term_angle{0.0};   // measured terminal (filter bus) voltage angle
  double term_mag_pu{0.0};  // measured terminal voltage magnitude
  double pll_theta{0.0};
  double pll_omega{100.0 * kPi};
  double pll_v_pos_mag{0.0};
  bool pll_out_of_band{false};
  bool overmodulated{false};
  bool current_saturated{false};
  bool ride_through{false};
  bool tripped{false};
};

class InverterControl {
 public:
  explicit InverterControl(const ControlConfig& cfg);

  /// Aligns the PLL and the VCM frame with a bus voltage phasor and parks
  /// the power averagers at an expected operating point; used by the harness
  /// before the settle roll.
  void seed(double v_amp_pu, double theta0, Mode mode, double p0_pu = 0.0, double q0_pu = 0.0);

  ControlOutputs step(const ControlInputs& in);

  const ControlConfig& config() const { return cfg_; }
  Mode mode() const { return mode_.mode; }
  double p_ref() const { return cfg_.vsg.p_ref; }
  void set_p_ref(double p_pu) { cfg_.vsg.p_ref = p_pu; }

 private:
  void enter_vcm(const DqQuantity& v_dq, double t);
  void enter_ccm(double t);

  ControlConfig cfg_;
  PllParams pll_params_;
  DsogiPllState pll_;
  ControlMode mode_;
  FirstOrderLagState freq_lag_;
  PowerAverager averager_;
  VirtualAdmittanceState adm_state_;
  SrfGains srf_gains_;
  SrfLoopState srf_;
  CcmState ccm_;
  double theta_vcm_{0.0};
  Vec2 last_i_ref_{Vec2::Zero()};
  bool last_saturated_{false};
};

} // namespace fsim::ctl
