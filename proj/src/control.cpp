#include "fsim/control.hpp"

#include <cmath>

namespace fsim::ctl {

// ---------------------------------------------------------------------------
// DSOGI PLL

PllParams PllParams::from_bandwidth(double f_bw_hz, double omega_nom) {
  if (!(f_bw_hz > 0.0)) {
    throw ConfigError("PllParams: bandwidth must be positive");
  }
  PllParams p;
  p.omega_nom = omega_nom;
  // Crossover at the requested bandwidth with the PI zero a quarter below:
  // leaves phase margin for the SOGI lag that sits just above crossover.
  const double wn = kTwoPi * f_bw_hz;
  p.kp = wn;
  p.ki = wn * wn / 4.0;
  return p;
}

void pll_preset(DsogiPllState& s, double amp, double theta, double omega, double omega_nom) {
  // Steady SOGI response to alpha = amp*cos(theta), beta = amp*sin(theta):
  // v' equals the input and qv' lags it by 90 degrees.
  s.sogi_alpha.x = Vec2(amp * std::cos(theta), amp * std::sin(theta));
  s.sogi_alpha.prev_u = s.sogi_alpha.x(0);
  s.sogi_beta.x = Vec2(amp * std::sin(theta), -amp * std::cos(theta));
  s.sogi_beta.prev_u = s.sogi_beta.x(0);
  s.theta_plus = wrap_angle(theta);
  s.theta_minus = wrap_angle(-theta);
  s.omega_hat = omega;
  s.loop_int = omega - omega_nom;
  s.out_of_band = false;
  s.v_pos = Vec2(amp * std::cos(theta), amp * std::sin(theta));
  s.v_neg = Vec2::Zero();
}

namespace {

/// Trapezoidal update of one SOGI quadrature generator at frequency omega.
void sogi_step(SogiState& s, double u, double omega, double k, double dt) {
  Eigen::Matrix2d a;
  a << -k * omega, -omega, omega, 0.0;
  const Eigen::Matrix2d lhs = Eigen::Matrix2d::Identity() - (dt / 2.0) * a;
  const Vec2 rhs = (Eigen::Matrix2d::Identity() + (dt / 2.0) * a) * s.x +
                   (dt / 2.0) * k * omega * Vec2(s.prev_u + u, 0.0);
  s.x = lhs.inverse() * rhs;
  s.prev_u = u;
}

} // namespace

PllOutput dsogi_pll_step(DsogiPllState& s, const ThreePhaseSample& v_abc, double dt,
                         const PllParams& p) {
  const Vec2 ab = clarke<double>(v_abc.v);
  const double w = s.omega_hat; // frequency-adaptive SOGI center
  sogi_step(s.sogi_alpha, ab(0), w, p.k_sogi, dt);
  sogi_step(s.sogi_beta, ab(1), w, p.k_sogi, dt);

  const double va = s.sogi_alpha.x(0);
  const double qva = s.sogi_alpha.x(1);
  const double vb = s.sogi_beta.x(0);
  const double qvb = s.sogi_beta.x(1);

  // Instantaneous symmetrical components from the quadrature pairs.
  s.v_pos = 0.5 * Vec2(va - qvb, qva + vb);
  s.v_neg = 0.5 * Vec2(va + qvb, vb - qva);

  const double mag_pos = s.v_pos.norm();
  const Vec2 dq = park<double>(s.v_pos, s.theta_plus);
  const double err = dq(1) / std::max(mag_pos, 0.05); // amplitude-normalized

  const double lo = p.band_lo * p.omega_nom;
  const double hi = p.band_hi * p.omega_nom;
  const double unclamped = p.omega_nom + p.kp * err + s.loop_int;
  const bool clamped = unclamped < lo || unclamped > hi;
  if (!clamped || (unclamped > hi && err < 0.0) || (unclamped < lo && err > 0.0)) {
    s.loop_int += p.ki * err * dt; // hold the integrator while pushing outward
  }
  s.omega_hat = std::clamp(unclamped, lo, hi);
  s.out_of_band = clamped;

  s.theta_plus = wrap_angle(s.theta_plus + s.omega_hat * dt);
  s.theta_minus = wrap_angle(std::atan2(s.v_neg(1), s.v_neg(0)));

  return {s.theta_plus, s.theta_minus, s.omega_hat, mag_pos, s.v_neg.norm(), s.out_of_band};
}

// ---------------------------------------------------------------------------
// Outer references

void VsgParams::validate() const {
  if (!(k_w > 0.0) || !(d > 0.0) || h < 0.0 || n_q < 0.0) {
    throw ConfigError("VsgParams: need k_w > 0, d > 0, h >= 0, n_q >= 0");
  }
}

PowerAverager PowerAverager::with_tau(double tau_s) {
  PowerAverager a;
  a.p_lag.t_const = tau_s;
  a.q_lag.t_const = tau_s;
  return a;
}

AvgPowers compute_avg_powers(const DqQuantity& v_dq, const DqQuantity& i_dq,
                             PowerAverager& avg, double dt) {
  if (std::abs(wrap_angle(v_dq.theta_used - i_dq.theta_used)) > 1e-9) {
    throw FrameError("compute_avg_powers: voltage and current frames differ");
  }
  const double p = v_dq.d * i_dq.d + v_dq.q * i_dq.q;
  const double q = v_dq.q * i_dq.d - v_dq.d * i_dq.q;
  return {lag_step(avg.p_lag, p, dt), lag_step(avg.q_lag, q, dt)};
}

double freq_ref_step(const VsgParams& vsg, FirstOrderLagState& lag, double p_avg, double dt) {
  const double dev = lag_step(lag, vsg.k_w * (p_avg - vsg.p_ref), dt);
  return vsg.omega_nom * (1.0 - dev);
}

double volt_ref(const VsgParams& vsg, double q_avg) {
  return vsg.v_nom - vsg.n_q * (q_avg - vsg.q_ref);
}

// ---------------------------------------------------------------------------
// Inner loops

CurrentRef virtual_admittance_step(const DqQuantity& v_ref_dq, const DqQuantity& v_meas_dq,
                                   VirtualAdmittanceState& state,
                                   const VirtualAdmittanceParams& p, double omega, double dt,
                                   double i_limit) {
  const Vec2 v_err(v_ref_dq.d - v_meas_dq.d, v_ref_dq.q - v_meas_dq.q);
  if (p.x_v <= 0.0) {
    state.i = v_err / p.r_v; // purely resistive admittance is algebraic
  } else {
    const double l_v = p.x_v / p.omega_base;
    Eigen::Matrix2d a;
    a << -p.r_v / l_v, omega, -omega, -p.r_v / l_v;
    const Eigen::Matrix2d lhs = Eigen::Matrix2d::Identity() - (dt / 2.0) * a;
    const Vec2 rhs = (Eigen::Matrix2d::Identity() + (dt / 2.0) * a) * state.i +
                     (dt / (2.0 * l_v)) * (state.prev_v_err + v_err);
    state.i = lhs.inverse() * rhs;
    // Anti-windup: deep voltage dips would otherwise wind the state far past
    // anything the limiter downstream can use.
    const double mag_state = state.i.norm();
    if (mag_state > 2.0 * i_limit) {
      state.i *= 2.0 * i_limit / mag_state;
    }
  }
  state.prev_v_err = v_err;

  CurrentRef out{state.i, false};
  const double mag = out.i_dq.norm();
  if (mag > i_limit) {
    out.i_dq *= i_limit / mag; // clamp magnitude, keep the angle
    out.saturated = true;
  }
  return out;
}

SrfLoopState SrfLoopState::make(const SrfGains& g) {
  SrfLoopState s;
  for (PiState* pi : {&s.pi_vd, &s.pi_vq}) {
    pi->kp = g.kp_v;
    pi->ki = g.ki_v;
    pi->out_min = -g.i_axis_limit;
    pi->out_max = g.i_axis_limit;
  }
  for (PiState* pi : {&s.pi_id, &s.pi_iq}) {
    pi->kp = g.kp_i;
    pi->ki = g.ki_i;
    pi->out_min = -g.v_cmd_limit;
    pi->out_max = g.v_cmd_limit;
  }
  return s;
}

Vec2 srf_voltage_step(const DqQuantity& v_ref_dq, const DqQuantity& v_meas_dq,
                      SrfLoopState& s, const SrfGains& g, double omega, double dt,
                      bool freeze_integrators) {
  const double c = std::cos(g.trim_rot);
  const double sn = std::sin(g.trim_rot);
  const double ed_raw = v_ref_dq.d - v_meas_dq.d;
  const double eq_raw = v_ref_dq.q - v_meas_dq.q;
  const double ed = c * ed_raw + sn * eq_raw;
  const double eq = -sn * ed_raw + c * eq_raw;
  double pid;
  double piq;
  if (freeze_integrators) {
    pid = std::clamp(g.kp_v * ed + s.pi_vd.integ, s.pi_vd.out_min, s.pi_vd.out_max);
    piq = std::clamp(g.kp_v * eq + s.pi_vq.integ, s.pi_vq.out_min, s.pi_vq.out_max);
  } else {
    pid = s.pi_vd.step(ed, dt);
    piq = s.pi_vq.step(eq, dt);
  }
  const double ffd = -omega * g.c_sec * v_meas_dq.q;
  const double ffq = omega * g.c_sec * v_meas_dq.d;
  return {pid + ffd, piq + ffq};
}

Vec2 srf_current_step(const Vec2& i_ref_dq, const DqQuantity& i_meas_dq,
                      const DqQuantity& v_meas_dq, SrfLoopState& s, const SrfGains& g,
                      double omega, double dt) {
  const double ed = i_ref_dq(0) - i_meas_dq.d;
  const double eq = i_ref_dq(1) - i_meas_dq.q;
  const double vd = s.pi_id.step(ed, dt) + v_meas_dq.d - omega * g.l_sec * i_meas_dq.q;
  const double vq = s.pi_iq.step(eq, dt) + v_meas_dq.q + omega * g.l_sec * i_meas_dq.d;
  return {vd, vq};
}

// ---------------------------------------------------------------------------
// Modulation

ModulationResult modulation(const DqQuantity& v_cmd_pu, double theta, double v_dc_v,
                            const EnableFlag& en, const PerUnitBase& base) {
  ModulationResult out;
  if (!en.en) {
    return out;
  }
  if (!(v_dc_v > 0.0)) {
    out.tripped = true;
    return out;
  }
  const ThreePhaseSample v_abc = dq_to_abc(v_cmd_pu, theta);
  const double scale = base.v_base_phase_peak() / (0.5 * v_dc_v);
  Vec3 m = v_abc.v * scale;
  const double mid = 0.5 * (m.maxCoeff() + m.minCoeff());
  m.array() -= mid;
  for (int ph = 0; ph < 3; ++ph) {
    if (std::abs(m(ph)) > 1.0) {
      out.overmodulated = true;
      m(ph) = std::clamp(m(ph), -1.0, 1.0);
    }
  }
  out.m_abc = m;
  return out;
}

// ---------------------------------------------------------------------------
// Mode switching and the CCM power loop

ControlMode select_mode(bool grid_connected, bool en, const ControlMode& mode, double t) {
  if (!en) {
    return mode; // outputs are gated; the mode memory is kept
  }
  const Mode want = grid_connected ? Mode::Ccm : Mode::Vcm;
  if (want == mode.mode) {
    return mode;
  }
  return {want, t};
}

Vec2 ccm_power_loop(double p_target_pu, const DqQuantity& v_dq, double q_ref_pu, CcmState& s) {
  if (v_dq.d < s.v_hold_threshold) {
    s.ride_through = true;
    return s.frozen_ref;
  }
  s.ride_through = false;
  // p = vd*id + vq*iq and q = vq*id - vd*iq with vq ~ 0 in the PLL frame.
  s.frozen_ref = Vec2(p_target_pu / v_dq.d, -q_ref_pu / v_dq.d);
  return s.frozen_ref;
}

// ---------------------------------------------------------------------------
// Aggregate controller

InverterControl::InverterControl(const ControlConfig& cfg)
    : cfg_(cfg),
      pll_params_(PllParams::from_bandwidth(cfg.f_bw_pll_hz, cfg.vsg.omega_nom)),
      averager_(PowerAverager::with_tau(cfg.p_avg_tau_s)) {
  cfg_.vsg.validate();
  freq_lag_.t_const = cfg_.vsg.t_w();
  const double wb = cfg_.base.omega_base();
  srf_gains_.l_sec = cfg_.lf_pu / wb;
  srf_gains_.c_sec = cfg_.cf_pu / wb;
  const double wc_i = kTwoPi * cfg_.f_bw_current_hz;
  const double wc_v = kTwoPi * cfg_.f_bw_voltage_hz;
  srf_gains_.kp_i = wc_i * srf_gains_.l_sec;
  srf_gains_.ki_i = wc_i * cfg_.rf_pu;
  // The voltage path is a pure integral trim riding on the virtual
  // admittance. A proportional term (or a fast trim) makes the bus look
  // stiff at the droop synchronizing frequency, and P-f droop over the
  // R-dominant feeder then sustains a tens-of-Hz power oscillation.
  srf_gains_.kp_v = 0.0;
  srf_gains_.ki_v = wc_v;
  srf_gains_.trim_rot = std::atan2(cfg_.adm.x_v, cfg_.adm.r_v);
  srf_gains_.i_axis_limit = 1.5 * cfg_.i_limit_pu;
  srf_ = SrfLoopState::make(srf_gains_);
  mode_.mode = cfg_.grid_forming_only ? Mode::Vcm : Mode::Ccm;
  ccm_.v_hold_threshold = 0.2;
}

void InverterControl::seed(double v_amp_pu, double theta0, Mode mode, double p0_pu,
                           double q0_pu) {
  pll_preset(pll_, v_amp_pu, theta0, cfg_.vsg.omega_nom, cfg_.vsg.omega_nom);
  theta_vcm_ = wrap_angle(theta0);
  mode_.mode = cfg_.grid_forming_only ? Mode::Vcm : mode;
  averager_.p_lag.preload(p0_pu);
  averager_.q_lag.preload(q0_pu);
  freq_lag_.preload(cfg_.vsg.k_w * (p0_pu - cfg_.vsg.p_ref));
}

void InverterControl::enter_vcm(const DqQuantity& v_dq, double t) {
  theta_vcm_ = pll_.theta_plus;
  // Hold the present PLL frequency through the droop lag so omega_ref is
  // continuous at the switch.
  freq_lag_.preload(1.0 - pll_.omega_hat / cfg_.vsg.omega_nom);
  if (cfg_.capture_p_ref_on_island) {
    cfg_.vsg.p_ref = averager_.p_lag.y;
    cfg_.vsg.q_ref = averager_.q_lag.y;
  }
  // Preload the voltage-trim integrators so the summed current reference is
  // continuous across the switch; the admittance starts relaxed.
  const double omega = pll_.omega_hat;
  const Vec2 ff(-omega * srf_gains_.c_sec * v_dq.q, omega * srf_gains_.c_sec * v_dq.d);
  adm_state_.i.setZero();
  adm_state_.prev_v_err.setZero();
  const Vec2 preload = last_i_ref_ - ff;
  srf_.pi_vd.integ = std::clamp(preload(0), srf_.pi_vd.out_min, srf_.pi_vd.out_max);
  srf_.pi_vq.integ = std::clamp(preload(1), srf_.pi_vq.out_min, srf_.pi_vq.out_max);
  mode_ = {Mode::Vcm, t};
}

void InverterControl::enter_ccm(double t) {
  ccm_.frozen_ref = last_i_ref_;
  mode_ = {Mode::Ccm, t};
}

ControlOutputs InverterControl::step(const ControlInputs& in) {
  const double dt = cfg_.dt;
  ControlOutputs out;

  const PllOutput pll = dsogi_pll_step(pll_, in.v_o, dt, pll_params_);
  out.pll_theta = pll.theta_plus;
  out.pll_omega = pll.omega_hat;
  out.pll_v_pos_mag = pll.v_pos_mag;
  out.pll_out_of_band = pll.out_of_band;

  const bool forced_vcm = cfg_.grid_forming_only;
  const ControlMode want =
      forced_vcm ? ControlMode{Mode::Vcm, mode_.transition_time}
                 : select_mode(in.grid_connected, in.en, mode_, in.t);

  // Measurements in the frame that will drive this step.
  auto in_frame = [&](double theta) {
    struct Frames {
      DqQuantity v_o, i_i, i_o;
    } f;
    f.v_o = abc_to_dq(in.v_o, theta);
    f.i_i = abc_to_dq(in.i_i, theta);
    f.i_o = abc_to_dq(in.i_o, theta);
    return f;
  };

  if (want.mode != mode_.mode) {
    if (want.mode == Mode::Vcm) {
      const auto f = in_frame(pll_.theta_plus);
      enter_vcm(f.v_o, in.t);
    } else {
      enter_ccm(in.t);
    }
  }
  out.mode = mode_.mode;

  if (!in.en) {
    // Gated inverter: everything zeroed, frames keep rotating.
    theta_vcm_ = wrap_angle(theta_vcm_ + cfg_.vsg.omega_nom * dt);
    out.m_abc.setZero();
    out.mode = mode_.mode;
    out.freq_hz = pll.omega_hat / kTwoPi;
    out.p_ref_pu = cfg_.vsg.p_ref;
    return out;
  }

  Vec2 v_cmd;
  double theta_frame;

  if (mode_.mode == Mode::Vcm) {
    // Average powers in the VCM frame (frame-invariant dot products).
    const auto f = in_frame(theta_vcm_);
    const AvgPowers pw = compute_avg_powers(f.v_o, f.i_o, averager_, dt);
    out.p_avg_pu = pw.p;
    out.q_avg_pu = pw.q;

    const double omega_ref = freq_ref_step(cfg_.vsg, freq_lag_, pw.p, dt) + in.omega_trim;
    theta_vcm_ = wrap_angle(theta_vcm_ + omega_ref * dt);
    const double v_ref = volt_ref(cfg_.vsg, pw.q) + in.v_trim;

    const auto f2 = in_frame(theta_vcm_);
    const DqQuantity v_ref_dq{v_ref, 0.0, theta_vcm_};
    const CurrentRef adm = virtual_admittance_step(v_ref_dq, f2.v_o, adm_state_, cfg_.adm,
                                                   omega_ref, dt, cfg_.i_limit_pu);
    const Vec2 trim =
        srf_voltage_step(v_ref_dq, f2.v_o, srf_, srf_gains_, omega_ref, dt, last_saturated_);
    Vec2 i_ref = adm.i_dq + trim;
    const double mag = i_ref.norm();
    bool saturated = adm.saturated;
    if (mag > cfg_.i_limit_pu) {
      i_ref *= cfg_.i_limit_pu / mag;
      saturated = true;
    }
    last_saturated_ = saturated;
    out.current_saturated = saturated;
    last_i_ref_ = i_ref;

    v_cmd = srf_current_step(i_ref, f2.i_i, f2.v_o, srf_, srf_gains_, omega_ref, dt);
    theta_frame = theta_vcm_;
    out.omega_ref = omega_ref;
    out.freq_hz = omega_ref / kTwoPi;
  } else {
    const auto f = in_frame(pll_.theta_plus);
    const AvgPowers pw = compute_avg_powers(f.v_o, f.i_o, averager_, dt);
    out.p_avg_pu = pw.p;
    out.q_avg_pu = pw.q;

    Vec2 i_ref = ccm_power_loop(in.p_target_pu, f.v_o, cfg_.vsg.q_ref, ccm_);
    // Supply the filter capacitor locally so the grid-side current carries
    // only the commanded power.
    i_ref += Vec2(-pll.omega_hat * srf_gains_.c_sec * f.v_o.q,
                  pll.omega_hat * srf_gains_.c_sec * f.v_o.d);
    out.ride_through = ccm_.ride_through;
    const double mag = i_ref.norm();
    if (mag > cfg_.i_limit_pu) {
      i_ref *= cfg_.i_limit_pu / mag;
      out.current_saturated = true;
    }
    last_saturated_ = out.current_saturated;
    last_i_ref_ = i_ref;

    v_cmd = srf_current_step(i_ref, f.i_i, f.v_o, srf_, srf_gains_, pll.omega_hat, dt);
    // Keep the VCM frame parked on the PLL so a later island entry is seamless.
    theta_vcm_ = pll_.theta_plus;
    theta_frame = pll_.theta_plus;
    out.omega_ref = pll.omega_hat;
    out.freq_hz = pll.omega_hat / kTwoPi;
  }

  const DqQuantity v_cmd_dq{v_cmd(0), v_cmd(1), theta_frame};
  const ModulationResult mod = modulation(v_cmd_dq, theta_frame, in.v_dc_v, {in.en}, cfg_.base);
  out.m_abc = mod.m_abc;
  out.overmodulated = mod.overmodulated;
  out.tripped = mod.tripped;
  out.theta_frame = theta_frame;
  const DqQuantity v_term = abc_to_dq(in.v_o, theta_frame);
  out.term_angle = wrap_angle(theta_frame + std::atan2(v_term.q, v_term.d));
  out.term_mag_pu = v_term.magnitude();
  out.p_ref_pu = cfg_.vsg.p_ref;
  return out;
}

} // namespace fsim::ctl
