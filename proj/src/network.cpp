#include "fsim/network.hpp"

#include <cmath>
#include <sstream>

namespace fsim::net {

void validate_filter(const LcFilterParams& p, double dt, double f_base) {
  if (!(p.lf_pu > 0.0) || !(p.cf_pu > 0.0) || !(p.rf_pu > 0.0)) {
    throw ConfigError("LC filter: lf, cf, rf must all be positive");
  }
  const double f_res = f_base / std::sqrt(p.lf_pu * p.cf_pu);
  if (f_res <= 10.0 * f_base || f_res >= 0.5 / dt) {
    std::ostringstream os;
    os << "LC filter resonance " << f_res << " Hz outside (" << 10.0 * f_base
       << ", " << 0.5 / dt << ") Hz";
    throw ConfigError(os.str());
  }
}

BreakerState set_breaker(const BreakerState& state, bool closed, double t) {
  if (state.closed == closed) {
    return state; // idempotent, timestamp untouched
  }
  return {closed, t};
}

double LoadBank::p_at_nominal() const {
  double p = 0.0;
  for (const auto& l : loads) {
    if (l.x_pu == 0.0) {
      p += 1.0 / l.r_pu;
    }
  }
  return p;
}

LoadBank apply_load_step(const LoadBank& loads, double delta_pu, double /*t*/) {
  LoadBank next = loads;
  for (auto& l : next.loads) {
    if (l.bus == kPcc && l.x_pu == 0.0) {
      const double p_new = 1.0 / l.r_pu + delta_pu;
      if (!(p_new > 0.0)) {
        throw ConfigError("apply_load_step: resulting load power must stay positive");
      }
      l.r_pu = 1.0 / p_new;
      return next;
    }
  }
  throw ConfigError("apply_load_step: no resistive PCC load to adjust");
}

Plant::Plant(const PlantParams& params, LoadBank loads, BreakerState breaker)
    : params_(params), loads_(std::move(loads)), breaker_(breaker) {
  if (!(params_.dt > 0.0)) {
    throw ConfigError("Plant: dt must be positive");
  }
  for (int s = 0; s < kNumInverters; ++s) {
    validate_filter(params_.filter[s], params_.dt, params_.base.f_base);
    inv_coeff_[s] = rl_coeff(params_.filter[s].rf_pu, params_.filter[s].lf_pu);
    line_coeff_[s] = rl_coeff(params_.line[s].r_pu, params_.line[s].x_pu);
    const double c_sec = params_.filter[s].cf_pu / params_.base.omega_base();
    g_cap_[s] = 2.0 * c_sec / params_.dt;
  }
  if (!(std::hypot(params_.grid.r_pu, params_.grid.x_pu) > 0.0)) {
    throw ConfigError("Plant: grid Thevenin impedance must be nonzero");
  }
  grid_coeff_ = rl_coeff(params_.grid.r_pu, params_.grid.x_pu);
  for (const auto& l : loads_.loads) {
    if (!(l.r_pu > 0.0)) {
      throw ConfigError("Plant: load resistance must be positive");
    }
  }
}

Plant::RlCoeff Plant::rl_coeff(double r_pu, double x_pu) const {
  const double l_sec = x_pu / params_.base.omega_base();
  if (!(l_sec > 0.0)) {
    // Pure resistance: instantaneous branch, no history current.
    return {1.0 / r_pu, 0.0, false};
  }
  const double alpha = params_.dt / (2.0 * l_sec);
  const double den = 1.0 + alpha * r_pu;
  return {alpha / den, (1.0 - alpha * r_pu) / den, true};
}

void Plant::rebuild_matrix(const std::array<bool, kNumInverters>& connected) const {
  Eigen::Matrix4d g = Eigen::Matrix4d::Zero();
  for (int s = 0; s < kNumInverters; ++s) {
    if (connected[s]) {
      g(s, s) += inv_coeff_[s].g;
    }
    g(s, s) += g_cap_[s];
    g(s, s) += line_coeff_[s].g;
    g(kPcc, kPcc) += line_coeff_[s].g;
    g(s, kPcc) -= line_coeff_[s].g;
    g(kPcc, s) -= line_coeff_[s].g;
  }
  load_coeff_.clear();
  for (const auto& l : loads_.loads) {
    if (l.x_pu > 0.0) {
      load_coeff_.push_back(rl_coeff(l.r_pu, l.x_pu));
      g(l.bus, l.bus) += load_coeff_.back().g;
    } else {
      g(l.bus, l.bus) += 1.0 / l.r_pu;
    }
  }
  if (breaker_.closed) {
    g(kPcc, kPcc) += grid_coeff_.g;
  }
  solver_.compute(g);
  built_connected_ = connected;
  matrix_valid_ = true;
}

void Plant::set_breaker(bool closed, double t) {
  const BreakerState next = net::set_breaker(breaker_, closed, t);
  if (next.closed != breaker_.closed) {
    matrix_valid_ = false;
  }
  breaker_ = next;
}

void Plant::set_loads(const LoadBank& loads) {
  for (const auto& l : loads.loads) {
    if (!(l.r_pu > 0.0)) {
      throw ConfigError("set_loads: load resistance must be positive");
    }
  }
  loads_ = loads;
  matrix_valid_ = false;
}

PlantState Plant::initial_state() const {
  PlantState st;
  for (int s = 0; s < kNumInverters; ++s) {
    st.i_inv[s].setZero();
    st.v_cap[s].setZero();
    st.i_line[s].setZero();
  }
  st.i_load.assign(loads_.loads.size(), Vec3::Zero());
  return st;
}

namespace {

void check_envelope(const char* name, int idx, const Vec3& v) {
  for (int ph = 0; ph < 3; ++ph) {
    if (!std::isfinite(v(ph)) || std::abs(v(ph)) > 100.0) {
      std::ostringstream os;
      os << "plant state diverged: " << name;
      if (idx >= 0) {
        os << "[" << idx << "]";
      }
      os << " phase " << "abc"[ph] << " = " << v(ph) << " pu";
      throw BlowUpError(os.str());
    }
  }
}

} // namespace

PlantState Plant::step(const PlantState& state,
                       const std::array<VsiInput, kNumInverters>& vsi) const {
  std::array<bool, kNumInverters> connected{};
  for (int s = 0; s < kNumInverters; ++s) {
    connected[s] = vsi[s].connected;
  }
  if (!matrix_valid_ || connected != built_connected_) {
    rebuild_matrix(connected);
  }
  if (state.i_load.size() != loads_.loads.size()) {
    throw ConfigError("Plant::step: state/load bank size mismatch");
  }

  const double dt = params_.dt;
  const double omega_grid = kTwoPi * params_.grid.f_hz;
  const double v_base_peak = params_.base.v_base_phase_peak();

  // Grid EMF at both ends of the step (trapezoidal source term).
  const Vec3 e_k = balanced_abc(params_.grid.v_th_pu, state.theta_grid);
  const Vec3 e_k1 = balanced_abc(params_.grid.v_th_pu, state.theta_grid + omega_grid * dt);

  // History currents, one per branch, shared structure across phases.
  std::array<Vec3, kNumInverters> hist_inv{};
  std::array<Vec3, kNumInverters> hist_line{};
  std::array<Vec3, kNumInverters> hist_cap{};
  std::vector<Vec3> hist_load(loads_.loads.size(), Vec3::Zero());
  Vec3 hist_grid = Vec3::Zero();

  Eigen::Matrix<double, 4, 3> rhs = Eigen::Matrix<double, 4, 3>::Zero();

  for (int s = 0; s < kNumInverters; ++s) {
    if (connected[s]) {
      // Modulation is latched over the step: same source value at both ends.
      // Three-wire plant: the zero-sequence part of the bridge voltage drives
      // no current, so it is stripped before stamping.
      Vec3 v_src = vsi[s].m_abc * (vsi[s].v_dc_v * 0.5 / v_base_peak);
      v_src.array() -= v_src.mean();
      hist_inv[s] = inv_coeff_[s].has_l
                        ? Vec3(inv_coeff_[s].beta * state.i_inv[s] +
                               inv_coeff_[s].g * (2.0 * v_src - state.v_cap[s]))
                        : Vec3(inv_coeff_[s].g * v_src);
      rhs.row(s) += hist_inv[s].transpose();
    }
    const Vec3 i_cap = (connected[s] ? state.i_inv[s] : Vec3(Vec3::Zero())) - state.i_line[s];
    hist_cap[s] = g_cap_[s] * state.v_cap[s] + i_cap;
    rhs.row(s) += hist_cap[s].transpose();

    hist_line[s] = line_coeff_[s].has_l
                       ? Vec3(line_coeff_[s].beta * state.i_line[s] +
                              line_coeff_[s].g * (state.v_cap[s] - state.v_pcc))
                       : Vec3(Vec3::Zero());
    rhs.row(s) -= hist_line[s].transpose();
    rhs.row(kPcc) += hist_line[s].transpose();
  }

  std::size_t rl_idx = 0;
  for (std::size_t li = 0; li < loads_.loads.size(); ++li) {
    const auto& l = loads_.loads[li];
    if (l.x_pu > 0.0) {
      const Vec3 v_bus = (l.bus == kPcc) ? state.v_pcc : state.v_cap[l.bus];
      hist_load[li] = load_coeff_[rl_idx].beta * state.i_load[li] +
                      load_coeff_[rl_idx].g * v_bus;
      rhs.row(l.bus) -= hist_load[li].transpose();
      ++rl_idx;
    }
  }

  if (breaker_.closed) {
    hist_grid = grid_coeff_.has_l
                    ? Vec3(grid_coeff_.beta * state.i_grid +
                           grid_coeff_.g * (e_k + e_k1 - state.v_pcc))
                    : Vec3(grid_coeff_.g * e_k1);
    rhs.row(kPcc) += hist_grid.transpose();
  }

  const Eigen::Matrix<double, 4, 3> v = solver_.solve(rhs);

  PlantState next;
  next.i_load.resize(loads_.loads.size());
  next.theta_grid = wrap_angle(state.theta_grid + omega_grid * dt);
  next.v_pcc = v.row(kPcc).transpose();
  for (int s = 0; s < kNumInverters; ++s) {
    next.v_cap[s] = v.row(s).transpose();
    next.i_inv[s] = connected[s] ? Vec3(hist_inv[s] - inv_coeff_[s].g * next.v_cap[s])
                                 : Vec3(Vec3::Zero());
    next.i_line[s] = hist_line[s] + line_coeff_[s].g * (next.v_cap[s] - next.v_pcc);
  }
  rl_idx = 0;
  for (std::size_t li = 0; li < loads_.loads.size(); ++li) {
    const auto& l = loads_.loads[li];
    if (l.x_pu > 0.0) {
      const Vec3 v_bus = (l.bus == kPcc) ? next.v_pcc : next.v_cap[l.bus];
      next.i_load[li] = hist_load[li] + load_coeff_[rl_idx].g * v_bus;
      ++rl_idx;
    } else {
      next.i_load[li].setZero();
    }
  }
  next.i_grid = breaker_.closed ? Vec3(hist_grid - grid_coeff_.g * next.v_pcc)
                                : Vec3(Vec3::Zero());

  for (int s = 0; s < kNumInverters; ++s) {
    check_envelope("i_inv", s, next.i_inv[s]);
    check_envelope("v_cap", s, next.v_cap[s]);
    check_envelope("i_line", s, next.i_line[s]);
  }
  check_envelope("i_grid", -1, next.i_grid);
  check_envelope("v_pcc", -1, next.v_pcc);
  return next;
}

MeasurementSet Plant::measure(const PlantState& state) const {
  MeasurementSet m;
  for (int s = 0; s < kNumInverters; ++s) {
    m.v_o[s] = ThreePhaseSample(state.v_cap[s]);
    m.i_i[s] = ThreePhaseSample(state.i_inv[s]);
    m.i_o[s] = ThreePhaseSample(state.i_line[s]);
  }
  m.v_pcc = ThreePhaseSample(state.v_pcc);
  m.i_grid = ThreePhaseSample(state.i_grid);
  if (breaker_.closed) {
    m.v_grid_side = m.v_pcc;
  } else {
    m.v_grid_side = ThreePhaseSample(balanced_abc(params_.grid.v_th_pu, state.theta_grid));
  }
  return m;
}

} // namespace fsim::net
