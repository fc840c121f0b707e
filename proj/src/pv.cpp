#include "fsim/pv.hpp"

#include <cmath>

namespace fsim::pv {

PvArrayParams PvArrayParams::fit(double i_sc, double v_oc, double v_mp, double i_mp) {
  if (!(0.0 < v_mp && v_mp < v_oc) || !(0.0 < i_mp && i_mp < i_sc)) {
    throw ConfigError("PvArrayParams: anchors must satisfy 0 < v_mp < v_oc and 0 < i_mp < i_sc");
  }
  // One free parameter: the diode voltage scale a. i(0) = i_sc and i(v_oc) = 0
  // hold for any a once i_0 = i_sc / (e^(v_oc/a) - 1); bisect a so the curve
  // also passes through (v_mp, i_mp).
  auto current_at_vmp = [&](double a) {
    const double i0 = i_sc / std::expm1(v_oc / a);
    return i_sc - i0 * std::expm1(v_mp / a);
  };
  double lo = (v_oc - v_mp) / 20.0; // sharp knee: current at v_mp near i_sc
  double hi = v_oc;                 // soft knee: current at v_mp well below i_mp
  if (current_at_vmp(lo) < i_mp || current_at_vmp(hi) > i_mp) {
    throw ConfigError("PvArrayParams: anchor points are not representable by a single-diode curve");
  }
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (current_at_vmp(mid) > i_mp ? lo : hi) = mid;
  }
  PvArrayParams p;
  p.i_sc = i_sc;
  p.v_oc = v_oc;
  p.v_mp = v_mp;
  p.i_mp = i_mp;
  p.a_diode = 0.5 * (lo + hi);
  p.i_0 = i_sc / std::expm1(v_oc / p.a_diode);
  return p;
}

double pv_current(double v_dc, double irradiance, double temperature_c,
                  const PvArrayParams& params) {
  if (v_dc < 0.0) {
    throw ConfigError("pv_current: v_dc must be non-negative");
  }
  const double g = std::max(irradiance, 0.0) / params.g_ref_wm2;
  const double dth = temperature_c - params.tc_ref_c;
  const double i_ph = params.i_sc * g * (1.0 + params.alpha_isc * dth);
  // Diode scale grows with absolute temperature; this moves v_oc with the
  // usual negative coefficient without a second fitted parameter.
  const double a = params.a_diode * (temperature_c + 273.15) / (params.tc_ref_c + 273.15);
  const double i = i_ph - params.i_0 * std::expm1(v_dc / a);
  return std::max(i, 0.0);
}

PvOperatingPoint scan_mpp(const PvArrayParams& params, double irradiance,
                          double temperature_c, double v_step) {
  PvOperatingPoint best;
  best.irradiance = irradiance;
  best.temperature = temperature_c;
  for (double v = v_step; v <= params.v_oc; v += v_step) {
    const double i = pv_current(v, irradiance, temperature_c, params);
    const double p = v * i;
    if (p > best.p) {
      best = {v, i, p, irradiance, temperature_c};
    }
  }
  return best;
}

MpptState mppt_step(const MpptState& state, double p, double v_dc) {
  MpptState next = state;
  if (!state.enabled) {
    return next;
  }
  // Flat delta-p keeps the direction so the tracker never stalls.
  if (p < state.last_p) {
    next.direction = -state.direction;
  }
  next.v_ref = std::clamp(state.v_ref + next.direction * state.step_size,
                          state.v_min, state.v_max);
  next.last_p = p;
  next.last_v = v_dc;
  return next;
}

DcLinkResult dc_link_step(double v_dc, double i_pv, double i_inv, double c_dc, double dt) {
  if (!(c_dc > 0.0)) {
    throw ConfigError("dc_link_step: c_dc must be positive");
  }
  double v = v_dc + dt * (i_pv - i_inv) / c_dc;
  if (v <= 0.0) {
    return {0.0, true};
  }
  return {v, false};
}

} // namespace fsim::pv
