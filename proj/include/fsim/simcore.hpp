#pragma once
// Shared math core for the feeder simulator: reference-frame transforms,
// the per-unit system and discrete-time first-order blocks.
//
// Conventions, stated once and used everywhere:
//  - Balanced set: x_a = X cos(th), x_b = X cos(th - 2pi/3), x_c = X cos(th + 2pi/3).
//  - Clarke is amplitude invariant: alpha carries the phase-a peak value.
//  - Park: d = alpha*cos + beta*sin, q = -alpha*sin + beta*cos. A transform
//    angle that lags the signal by 90 deg lands the signal on +q, i.e. the
//    q axis leads the d axis.
//  - Reactive power q = vq*id - vd*iq, so inductive consumption is positive.
//  - The per-unit voltage base is the PEAK phase value, v_ll*sqrt(2)/sqrt(3).
//    With the matching current base 2*s_base/(3*v_base), three-phase power in
//    per unit is simply p = vd*id + vq*iq (the 3/2 factor is absorbed).
//  - All continuous-time blocks are discretized with the bilinear rule.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace fsim {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;
inline constexpr double kSqrt3 = 1.7320508075688772;

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;

/// Configuration or parameter-validation failure (bad scenario values,
/// invalid time step, impossible load step, ...).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Non-finite or otherwise corrupt signal handed to a transform.
struct SignalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Two quantities that must share a reference frame do not.
struct FrameError : std::logic_error {
  using std::logic_error::logic_error;
};

/// Wraps an angle to [-pi, pi).
template <typename S>
inline S wrap_angle(S x) {
  return x - kTwoPi * std::floor((x + kPi) / kTwoPi);
}

/// x_a = amp*cos(theta) and the two 120-deg shifted companions.
template <typename S>
inline Eigen::Matrix<S, 3, 1> balanced_abc(S amp, S theta) {
  return {amp * std::cos(theta), amp * std::cos(theta - S(2) * kPi / S(3)),
          amp * std::cos(theta + S(2) * kPi / S(3))};
}

/// Amplitude-invariant Clarke transform (zero sequence discarded).
template <typename S>
inline Eigen::Matrix<S, 2, 1> clarke(const Eigen::Matrix<S, 3, 1>& abc) {
  return {(S(2) * abc(0) - abc(1) - abc(2)) / S(3), (abc(1) - abc(2)) / S(kSqrt3)};
}

template <typename S>
inline Eigen::Matrix<S, 3, 1> inverse_clarke(const Eigen::Matrix<S, 2, 1>& ab) {
  const S a = ab(0);
  const S b = (-ab(0) + S(kSqrt3) * ab(1)) / S(2);
  const S c = (-ab(0) - S(kSqrt3) * ab(1)) / S(2);
  return {a, b, c};
}

template <typename S>
inline Eigen::Matrix<S, 2, 1> park(const Eigen::Matrix<S, 2, 1>& ab, S theta) {
  const S c = std::cos(theta);
  const S s = std::sin(theta);
  return {ab(0) * c + ab(1) * s, -ab(0) * s + ab(1) * c};
}

template <typename S>
inline Eigen::Matrix<S, 2, 1> inverse_park(const Eigen::Matrix<S, 2, 1>& dq, S theta) {
  const S c = std::cos(theta);
  const S s = std::sin(theta);
  return {dq(0) * c - dq(1) * s, dq(0) * s + dq(1) * c};
}

/// Whether a quantity is expressed on the per-unit bases or in SI units.
enum class SignalUnit { PerUnit, Si };

/// One instantaneous three-phase sample (voltage or current).
struct ThreePhaseSample {
  Vec3 v{Vec3::Zero()};
  SignalUnit unit{SignalUnit::PerUnit};

  ThreePhaseSample() = default;
  ThreePhaseSample(double a, double b, double c, SignalUnit u = SignalUnit::PerUnit)
      : v(a, b, c), unit(u) {}
  explicit ThreePhaseSample(const Vec3& abc, SignalUnit u = SignalUnit::PerUnit)
      : v(abc), unit(u) {}

  double a() const { return v(0); }
  double b() const { return v(1); }
  double c() const { return v(2); }
  bool finite() const { return v.allFinite(); }
};

/// A rotating-frame value together with the angle that produced it.
struct DqQuantity {
  double d{0.0};
  double q{0.0};
  double theta_used{0.0};

  Vec2 vec() const { return {d, q}; }
  double magnitude() const { return std::hypot(d, q); }
};

/// Clarke + Park at the given angle. Rejects non-finite samples.
inline DqQuantity abc_to_dq(const ThreePhaseSample& x, double theta) {
  if (!x.finite() || !std::isfinite(theta)) {
    throw SignalError("abc_to_dq: non-finite input sample or angle");
  }
  const Vec2 dq = park<double>(clarke<double>(x.v), theta);
  return {dq(0), dq(1), theta};
}

/// Exact inverse of abc_to_dq under the same angle.
inline ThreePhaseSample dq_to_abc(const DqQuantity& x, double theta) {
  if (!std::isfinite(x.d) || !std::isfinite(x.q) || !std::isfinite(theta)) {
    throw SignalError("dq_to_abc: non-finite input");
  }
  return ThreePhaseSample(inverse_clarke<double>(inverse_park<double>(Vec2(x.d, x.q), theta)));
}

/// Per-unit bases. Voltage base is the peak phase value so that balanced
/// 1.0 pu voltage times 1.0 pu in-phase current is 1.0 pu power.
struct PerUnitBase {
  double s_base{50e3};     // VA
  double v_base_ll{400.0}; // line-line RMS, V
  double f_base{50.0};     // Hz

  double omega_base() const { return kTwoPi * f_base; }
  double v_base_phase_peak() const { return v_base_ll * std::sqrt(2.0 / 3.0); }
  double i_base_phase_peak() const { return 2.0 * s_base / (3.0 * v_base_phase_peak()); }
  double z_base() const { return v_base_ll * v_base_ll / s_base; }

  static PerUnitBase make(double s, double vll, double f) {
    if (!(s > 0.0) || !(vll > 0.0) || !(f > 0.0)) {
      throw ConfigError("PerUnitBase: all bases must be strictly positive");
    }
    return {s, vll, f};
  }
};

enum class PuKind { Voltage, Current, Power, Frequency };

inline double base_for(const PerUnitBase& b, PuKind kind) {
  switch (kind) {
    case PuKind::Voltage: return b.v_base_phase_peak();
    case PuKind::Current: return b.i_base_phase_peak();
    case PuKind::Power: return b.s_base;
    case PuKind::Frequency: return b.omega_base(); // rad/s
  }
  throw ConfigError("per-unit: unknown quantity kind");
}

inline double to_per_unit(double x, const PerUnitBase& b, PuKind kind) {
  return x / base_for(b, kind);
}

inline double from_per_unit(double x, const PerUnitBase& b, PuKind kind) {
  return x * base_for(b, kind);
}

/// First-order lag 1/(T s + 1), bilinear discretization. t_const == 0 is a
/// pure passthrough. prev_u holds the input of the previous step.
struct FirstOrderLagState {
  double y{0.0};
  double t_const{0.0};
  double prev_u{0.0};

  /// Parks the block at a steady operating point.
  void preload(double value) {
    y = value;
    prev_u = value;
  }
};

inline double lag_step(FirstOrderLagState& s, double u, double dt) {
  if (!(dt > 0.0)) {
    throw ConfigError("lag_step: dt must be positive");
  }
  if (s.t_const == 0.0) {
    s.y = u;
    s.prev_u = u;
    return s.y;
  }
  if (s.t_const < 0.0 || dt > s.t_const / 2.0) {
    throw ConfigError("lag_step: need 0 < dt <= t_const/2");
  }
  const double a = (2.0 * s.t_const - dt) / (2.0 * s.t_const + dt);
  const double b = dt / (2.0 * s.t_const + dt);
  s.y = a * s.y + b * (u + s.prev_u);
  s.prev_u = u;
  return s.y;
}

/// Discrete PI with output limiting and back-calculation anti-windup.
/// The integrator itself is clamped to the output limits as well.
struct PiState {
  double integ{0.0};
  double kp{0.0};
  double ki{0.0};
  double out_min{-1e9};
  double out_max{1e9};
  double k_aw{1.0}; // back-calculation gain, 1/s scale folded into ki units

  double step(double err, double dt) {
    const double unsat = kp * err + integ;
    const double sat = std::clamp(unsat, out_min, out_max);
    integ += (ki * err + k_aw * (sat - unsat)) * dt;
    integ = std::clamp(integ, out_min, out_max);
    return sat;
  }
};

} // namespace fsim
