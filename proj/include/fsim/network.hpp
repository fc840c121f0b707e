#pragma once
// Electrical plant: three averaged VSIs behind LC filters, feeder lines to
// the PCC, constant-impedance loads, the grid Thevenin branch and the PCC
// breaker. Everything is balanced three-phase in per unit, stepped with
// trapezoidal companion models and one small nodal solve per step (the three
// phases share the conductance matrix, so the solve carries three RHS).

#include "fsim/simcore.hpp"

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace fsim::net {

inline constexpr int kPv1 = 0;
inline constexpr int kPv2 = 1;
inline constexpr int kBat = 2;
inline constexpr int kPcc = 3;
inline constexpr int kNumBuses = 4;
inline constexpr int kNumInverters = 3;

/// A plant state left the physical envelope; message names the first
/// offending quantity.
struct BlowUpError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct LcFilterParams {
  double lf_pu{0.08};
  double cf_pu{0.05};
  double rf_pu{0.005};
};

/// Resonance must sit between 10x fundamental and the Nyquist rate of dt.
void validate_filter(const LcFilterParams& p, double dt, double f_base);

struct LineParams {
  double r_pu{0.02};
  double x_pu{0.007};
};

struct GridEquivalent {
  double v_th_pu{1.0};
  double r_pu{0.01};
  double x_pu{0.05};
  double f_hz{50.0};
};

struct BreakerState {
  bool closed{true};
  double last_transition_time{0.0};
};

/// Updates the flag and stamps the time; identical commands are no-ops.
BreakerState set_breaker(const BreakerState& state, bool closed, double t);

struct Load {
  int bus{kPcc};
  double r_pu{1.0 / 0.6};
  double x_pu{0.0}; // optional series reactance
};

struct LoadBank {
  std::vector<Load> loads;

  /// Total power drawn at 1.0 pu voltage by purely resistive entries.
  double p_at_nominal() const;
};

/// Re-sizes the PCC load so it draws (previous + delta) pu at 1.0 pu voltage.
LoadBank apply_load_step(const LoadBank& loads, double delta_pu, double t);

/// Modulation index plus DC-link voltage; the averaged VSI terminal voltage
/// is m_abc * v_dc / 2.
struct VsiInput {
  Vec3 m_abc{Vec3::Zero()};
  double v_dc_v{0.0};
  bool connected{true}; // false models a gated-off (diode-blocked) bridge
};

struct PlantParams {
  PerUnitBase base{};
  double dt{1e-4};
  std::array<LcFilterParams, kNumInverters> filter{};
  std::array<LineParams, kNumInverters> line{};
  GridEquivalent grid{};
};

struct PlantState {
  std::array<Vec3, kNumInverters> i_inv{};  // inverter-side inductor currents
  std::array<Vec3, kNumInverters> v_cap{};  // filter capacitor voltages
  std::array<Vec3, kNumInverters> i_line{}; // filter bus -> PCC line currents
  std::vector<Vec3> i_load;                 // one entry per reactive load
  Vec3 i_grid{Vec3::Zero()};                // grid branch current (into PCC)
  Vec3 v_pcc{Vec3::Zero()};                 // PCC solution of the last solve
  double theta_grid{0.0};                   // grid source angle
};

/// The four sensed signal sets per inverter plus PCC-side quantities.
struct MeasurementSet {
  std::array<ThreePhaseSample, kNumInverters> v_o{}; // filter bus voltage
  std::array<ThreePhaseSample, kNumInverters> i_i{}; // inverter current
  std::array<ThreePhaseSample, kNumInverters> i_o{}; // line (grid-side) current
  ThreePhaseSample v_pcc{};
  ThreePhaseSample i_grid{};
  ThreePhaseSample v_grid_side{}; // breaker grid-side terminal voltage
};

class Plant {
 public:
  Plant(const PlantParams& params, LoadBank loads, BreakerState breaker);

  const PlantParams& params() const { return params_; }
  const LoadBank& loads() const { return loads_; }
  const BreakerState& breaker() const { return breaker_; }

  void set_breaker(bool closed, double t);
  void set_loads(const LoadBank& loads);

  /// Fresh all-zero state with the grid angle at zero.
  PlantState initial_state() const;

  /// Advances one fixed step. Throws BlowUpError past 100 pu.
  PlantState step(const PlantState& state, const std::array<VsiInput, kNumInverters>& vsi) const;

  /// Pure read of the sensed quantities.
  MeasurementSet measure(const PlantState& state) const;

 private:
  struct RlCoeff {
    double g{0.0};    // effective conductance
    double beta{0.0}; // history decay
    bool has_l{true}; // false: instantaneous resistive branch
  };
  RlCoeff rl_coeff(double r_pu, double x_pu) const;
  void rebuild_matrix(const std::array<bool, kNumInverters>& connected) const;

  PlantParams params_;
  LoadBank loads_;
  BreakerState breaker_;

  std::array<RlCoeff, kNumInverters> inv_coeff_{};
  std::array<RlCoeff, kNumInverters> line_coeff_{};
  std::array<double, kNumInverters> g_cap_{};
  RlCoeff grid_coeff_{};
  mutable std::vector<RlCoeff> load_coeff_; // only for loads with x > 0

  mutable Eigen::LDLT<Eigen::Matrix4d> solver_;
  mutable std::array<bool, kNumInverters> built_connected_{true, true, true};
  mutable bool matrix_valid_{false};
};

} // namespace fsim::net
