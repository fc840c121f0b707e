#pragma once
// PV array electrical model, perturb-and-observe MPPT and the DC link.
// The array is an explicit single-diode approximation i = iph - i0*(e^(v/a)-1)
// fitted to the four anchor points (i_sc, v_oc, v_mp, i_mp); no implicit
// solve is needed to evaluate it.

#include "fsim/simcore.hpp"

namespace fsim::pv {

/// Fitted curve parameters at standard conditions (1000 W/m2, 25 C).
struct PvArrayParams {
  double i_sc{40.0};     // A
  double v_oc{700.0};    // V
  double v_mp{580.0};    // V
  double i_mp{37.931};   // A
  double a_diode{40.0};  // thermal/ideality voltage scale, V (fitted)
  double i_0{1e-6};      // saturation current, A (fitted)
  double alpha_isc{5e-4};   // 1/K, photocurrent temperature coefficient
  double tc_ref_c{25.0};
  double g_ref_wm2{1000.0};

  double p_mp() const { return v_mp * i_mp; }

  /// Fits a_diode and i_0 so the curve passes through all four anchors.
  static PvArrayParams fit(double i_sc, double v_oc, double v_mp, double i_mp);
};

struct PvOperatingPoint {
  double v_dc{0.0};       // V
  double i_dc{0.0};       // A
  double p{0.0};          // W
  double irradiance{1000.0};   // W/m2
  double temperature{25.0};    // C
};

/// Array current at a DC voltage and ambient condition. Strictly decreasing
/// in v_dc; photocurrent scales linearly with irradiance.
double pv_current(double v_dc, double irradiance, double temperature_c,
                  const PvArrayParams& params);

/// Brute-force scan of v -> v*i(v); the independent MPP oracle used by tests
/// and by the acceptance checks.
PvOperatingPoint scan_mpp(const PvArrayParams& params, double irradiance,
                          double temperature_c, double v_step = 0.1);

/// Perturb-and-observe state. v_ref is the commanded DC-link voltage.
struct MpptState {
  double v_ref{0.0};
  double last_p{0.0};
  double last_v{0.0};
  double step_size{2.0};  // V
  int direction{-1};      // -1 walks down from open circuit toward the MPP
  bool enabled{true};
  double v_min{0.0};      // filled from params: 0.1*v_oc
  double v_max{0.0};      // v_oc
};

/// One decimated P&O update: keep direction while power improves, reverse
/// otherwise; a flat delta keeps the direction.
MpptState mppt_step(const MpptState& state, double p, double v_dc);

struct DcLinkResult {
  double v_dc{0.0};
  bool collapsed{false};
};

/// Explicit-Euler capacitor update; clamps at zero and reports collapse
/// (irradiance insufficient for the commanded power).
DcLinkResult dc_link_step(double v_dc, double i_pv, double i_inv, double c_dc, double dt);

} // namespace fsim::pv
