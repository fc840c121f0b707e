#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fsim/network.hpp"

#include <complex>
#include <cstring>

using namespace fsim;
using namespace fsim::net;

namespace {

PlantParams default_params() {
  PlantParams p;
  p.base = PerUnitBase::make(50e3, 400.0, 50.0);
  p.dt = 1e-4;
  p.filter = {LcFilterParams{}, LcFilterParams{}, LcFilterParams{}};
  p.line = {LineParams{0.02, 0.007}, LineParams{0.02, 0.007}, LineParams{0.01, 0.0035}};
  p.grid = GridEquivalent{};
  return p;
}

LoadBank pcc_load(double p_pu) {
  LoadBank b;
  b.loads.push_back({kPcc, 1.0 / p_pu, 0.0});
  return b;
}

std::array<VsiInput, 3> idle_vsi() {
  std::array<VsiInput, 3> v{};
  for (auto& x : v) {
    x.v_dc_v = 700.0;
    x.connected = true;
  }
  return v;
}

/// Fundamental-frequency phasor of a sampled waveform (correlation DFT).
std::complex<double> phasor_at(const std::vector<double>& samples, double dt, double f) {
  std::complex<double> acc{0.0, 0.0};
  for (std::size_t k = 0; k < samples.size(); ++k) {
    const double th = kTwoPi * f * static_cast<double>(k) * dt;
    acc += samples[k] * std::complex<double>(std::cos(th), -std::sin(th));
  }
  return 2.0 * acc / static_cast<double>(samples.size());
}

} // namespace

TEST_CASE("zero drive, zero grid, zero state stays exactly zero") {
  PlantParams p = default_params();
  p.grid.v_th_pu = 0.0;
  Plant plant(p, pcc_load(0.6), BreakerState{true, 0.0});
  PlantState st = plant.initial_state();
  auto vsi = idle_vsi();
  for (auto& v : vsi) {
    v.m_abc.setZero();
  }
  for (int k = 0; k < 100; ++k) {
    st = plant.step(st, vsi);
  }
  for (int s = 0; s < kNumInverters; ++s) {
    CHECK(st.i_inv[s].norm() == 0.0);
    CHECK(st.v_cap[s].norm() == 0.0);
    CHECK(st.i_line[s].norm() == 0.0);
  }
  CHECK(st.i_grid.norm() == 0.0);
  CHECK(st.v_pcc.norm() == 0.0);
}

TEST_CASE("DC step into an R-L loop follows the analytic exponential") {
  // Isolate the grid branch (EMF, r_th, x_th) feeding the PCC load: a single
  // R-L loop. i(t) = V/Rtot * (1 - e^(-t Rtot/L)) is the oracle.
  PlantParams p = default_params();
  p.grid = GridEquivalent{1.0, 0.05, 0.5, 0.0}; // f = 0: constant EMF
  for (auto& line : p.line) {
    line.r_pu = 1e6; // park the inverter branches
    line.x_pu = 1e-3;
  }
  const double r_load = 0.45;
  LoadBank bank;
  bank.loads.push_back({kPcc, r_load, 0.0});
  Plant plant(p, bank, BreakerState{true, 0.0});
  PlantState st = plant.initial_state();
  auto vsi = idle_vsi();
  for (auto& v : vsi) {
    v.m_abc.setZero();
  }

  const double r_tot = p.grid.r_pu + r_load;
  const double l_sec = p.grid.x_pu / p.base.omega_base();
  const double tau = l_sec / r_tot;
  const int n = static_cast<int>(std::lround(tau / p.dt));
  for (int k = 0; k < n; ++k) {
    st = plant.step(st, vsi);
  }
  // Phase a EMF is 1.0 pu (theta = 0, f = 0).
  const double expected = (1.0 / r_tot) * (1.0 - std::exp(-1.0));
  CHECK(st.i_grid(0) == doctest::Approx(expected).epsilon(0.005));
}

TEST_CASE("open breaker forces the grid branch current to exactly zero") {
  PlantParams p = default_params();
  Plant plant(p, pcc_load(0.6), BreakerState{false, 0.0});
  PlantState st = plant.initial_state();
  st.v_cap[0] = balanced_abc(1.0, 0.3); // some non-trivial island state
  auto vsi = idle_vsi();
  for (int k = 0; k < 200; ++k) {
    st = plant.step(st, vsi);
    CHECK(st.i_grid.norm() == 0.0);
  }
}

TEST_CASE("set_breaker is idempotent and stamps transition times") {
  BreakerState b{true, 0.0};
  b = set_breaker(b, true, 1.0); // same command: no-op
  CHECK(b.closed);
  CHECK(b.last_transition_time == 0.0);
  b = set_breaker(b, false, 2.0);
  CHECK_FALSE(b.closed);
  CHECK(b.last_transition_time == 2.0);
  b = set_breaker(b, false, 3.0); // opening an open breaker: timestamp kept
  CHECK(b.last_transition_time == 2.0);
}

TEST_CASE("apply_load_step arithmetic") {
  LoadBank b = pcc_load(0.4);
  const LoadBank stepped = apply_load_step(b, 0.1, 1.0);
  CHECK(stepped.loads[0].r_pu == doctest::Approx(2.0).epsilon(1e-12));
  const LoadBank same = apply_load_step(b, 0.0, 1.0);
  CHECK(same.loads[0].r_pu == doctest::Approx(b.loads[0].r_pu));
  CHECK_THROWS_AS(apply_load_step(b, -0.4, 1.0), ConfigError);
}

TEST_CASE("measure: zero state reads all zeros; open breaker exposes the grid EMF") {
  PlantParams p = default_params();
  Plant plant(p, pcc_load(0.6), BreakerState{false, 0.0});
  const PlantState st = plant.initial_state();
  const MeasurementSet m = plant.measure(st);
  for (int s = 0; s < kNumInverters; ++s) {
    CHECK(m.v_o[s].v.norm() == 0.0);
    CHECK(m.i_i[s].v.norm() == 0.0);
    CHECK(m.i_o[s].v.norm() == 0.0);
  }
  CHECK(m.v_pcc.v.norm() == 0.0);
  // Grid side of the open breaker carries the Thevenin EMF.
  CHECK(m.v_grid_side.v(0) == doctest::Approx(std::cos(st.theta_grid)));
}

TEST_CASE("grid-connected at no load: filter buses sit at 1.0 pu peak phase") {
  PlantParams p = default_params();
  LoadBank tiny;
  tiny.loads.push_back({kPcc, 1e6, 0.0}); // effectively no load
  Plant plant(p, tiny, BreakerState{true, 0.0});
  PlantState st = plant.initial_state();
  auto vsi = idle_vsi();
  for (auto& v : vsi) {
    v.connected = false; // inverters gated off, grid feeds the buses
  }
  const int warm = 20000;
  const int span = 400;
  std::vector<double> vo(span), vp(span);
  for (int k = 0; k < warm + span; ++k) {
    st = plant.step(st, vsi);
    if (k >= warm) {
      vo[k - warm] = st.v_cap[0](0);
      vp[k - warm] = st.v_pcc(0);
    }
  }
  // Fundamental magnitude: 1.0 pu peak phase (326.6 V on the 400 V base),
  // plus a fraction of a percent of capacitive rise at no load.
  CHECK(std::abs(phasor_at(vo, p.dt, 50.0)) == doctest::Approx(1.0).epsilon(0.01));
  CHECK(std::abs(phasor_at(vp, p.dt, 50.0)) == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("islanded single-former: PCC equals the capacitor voltage minus the line drop") {
  // Drive only inverter 1 with a sinusoidal bridge voltage, breaker open.
  // Oracle: the KVL phasor identity V_pcc = V_cap - (r + jx) I_line at the
  // fundamental, with phasors extracted by correlation.
  PlantParams p = default_params();
  Plant plant(p, pcc_load(0.3), BreakerState{false, 0.0});
  PlantState st = plant.initial_state();
  auto vsi = idle_vsi();
  vsi[1].connected = false;
  vsi[2].connected = false;

  const double f0 = 50.0;
  const double scale = p.base.v_base_phase_peak() / (0.5 * 700.0);
  const int warm = 10000; // 1 s to shed the start transient
  const int span = 400;   // exactly two cycles at 50 Hz
  std::vector<double> vc(span), vp(span), il(span);
  for (int k = 0; k < warm + span; ++k) {
    const double th = kTwoPi * f0 * static_cast<double>(k) * p.dt;
    vsi[0].m_abc = balanced_abc(0.95 * scale, th);
    st = plant.step(st, vsi);
    if (k >= warm) {
      vc[k - warm] = st.v_cap[0](0);
      vp[k - warm] = st.v_pcc(0);
      il[k - warm] = st.i_line[0](0);
    }
  }
  const auto v_cap = phasor_at(vc, p.dt, f0);
  const auto v_pcc = phasor_at(vp, p.dt, f0);
  const auto i_line = phasor_at(il, p.dt, f0);
  const std::complex<double> z_line{p.line[0].r_pu, p.line[0].x_pu};
  const std::complex<double> predicted = v_cap - z_line * i_line;
  CHECK(std::abs(predicted - v_pcc) < 2e-3 * std::abs(v_pcc));
}

TEST_CASE("energy accounting closes within 0.1% of throughput") {
  PlantParams p = default_params();
  Plant plant(p, pcc_load(0.6), BreakerState{true, 0.0});
  PlantState st = plant.initial_state();
  auto vsi = idle_vsi();

  const double wb = p.base.omega_base();
  const double scale = p.base.v_base_phase_peak() / (0.5 * 700.0);
  const double r_load = plant.loads().loads[0].r_pu;

  auto field_energy = [&](const PlantState& s) {
    double e = 0.0;
    for (int k = 0; k < kNumInverters; ++k) {
      e += 0.5 * (p.filter[k].lf_pu / wb) * s.i_inv[k].squaredNorm();
      e += 0.5 * (p.filter[k].cf_pu / wb) * s.v_cap[k].squaredNorm();
      e += 0.5 * (p.line[k].x_pu / wb) * s.i_line[k].squaredNorm();
    }
    e += 0.5 * (p.grid.x_pu / wb) * s.i_grid.squaredNorm();
    return (2.0 / 3.0) * e;
  };

  double e_inj = 0.0;
  double e_diss = 0.0;
  const double e0 = field_energy(st);
  const int n = 5000; // 0.5 s
  for (int k = 0; k < n; ++k) {
    const double th = wb * static_cast<double>(k) * p.dt;
    // Slightly detuned drive so the interval is not an exact cycle count.
    std::array<Vec3, 3> v_src;
    for (int s3 = 0; s3 < 3; ++s3) {
      vsi[s3].m_abc = balanced_abc((0.9 + 0.02 * s3) * scale, th + 0.1 * s3);
      v_src[s3] = vsi[s3].m_abc * (0.5 * vsi[s3].v_dc_v / p.base.v_base_phase_peak());
      v_src[s3].array() -= v_src[s3].mean(); // three-wire: zero-sequence inert
    }
    const PlantState prev = st;
    st = plant.step(st, vsi);
    const Vec3 e_emf_prev = balanced_abc(p.grid.v_th_pu, prev.theta_grid);
    const Vec3 e_emf = balanced_abc(p.grid.v_th_pu, st.theta_grid);
    double p_inj_prev = (2.0 / 3.0) * e_emf_prev.dot(prev.i_grid);
    double p_inj_now = (2.0 / 3.0) * e_emf.dot(st.i_grid);
    double p_diss_prev = (2.0 / 3.0) * prev.v_pcc.squaredNorm() / r_load;
    double p_diss_now = (2.0 / 3.0) * st.v_pcc.squaredNorm() / r_load;
    for (int s3 = 0; s3 < 3; ++s3) {
      p_inj_prev += (2.0 / 3.0) * v_src[s3].dot(prev.i_inv[s3]);
      p_inj_now += (2.0 / 3.0) * v_src[s3].dot(st.i_inv[s3]);
      p_diss_prev += (2.0 / 3.0) * (p.filter[s3].rf_pu * prev.i_inv[s3].squaredNorm() +
                                    p.line[s3].r_pu * prev.i_line[s3].squaredNorm());
      p_diss_now += (2.0 / 3.0) * (p.filter[s3].rf_pu * st.i_inv[s3].squaredNorm() +
                                   p.line[s3].r_pu * st.i_line[s3].squaredNorm());
    }
    p_diss_prev += (2.0 / 3.0) * p.grid.r_pu * prev.i_grid.squaredNorm();
    p_diss_now += (2.0 / 3.0) * p.grid.r_pu * st.i_grid.squaredNorm();
    e_inj += 0.5 * (p_inj_prev + p_inj_now) * p.dt;
    e_diss += 0.5 * (p_diss_prev + p_diss_now) * p.dt;
  }
  const double de = field_energy(st) - e0;
  const double residual = e_inj - e_diss - de;
  CHECK(std::abs(residual) < 1e-3 * std::abs(e_inj));
}

TEST_CASE("capacitor voltages are continuous across breaker events") {
  PlantParams p = default_params();
  Plant plant(p, pcc_load(0.6), BreakerState{true, 0.0});
  PlantState st = plant.initial_state();
  auto vsi = idle_vsi();
  vsi[1].connected = false;
  vsi[2].connected = false;
  const double scale = p.base.v_base_phase_peak() / (0.5 * 700.0);
  for (int k = 0; k < 5000; ++k) {
    vsi[0].m_abc = balanced_abc(0.95 * scale, kTwoPi * 50.0 * k * p.dt);
    st = plant.step(st, vsi);
  }
  const Vec3 before = st.v_cap[0];
  plant.set_breaker(false, 0.5);
  vsi[0].m_abc = balanced_abc(0.95 * scale, kTwoPi * 50.0 * 5000 * p.dt);
  st = plant.step(st, vsi);
  // The state carries over: one step may slew at most i_cap*dt/C (about
  // 0.6 pu per pu of current), far below the ~1 pu jump a re-init would show.
  CHECK((st.v_cap[0] - before).cwiseAbs().maxCoeff() < 0.15);
}

TEST_CASE("plant stepping is bit-deterministic") {
  PlantParams p = default_params();
  Plant plant(p, pcc_load(0.6), BreakerState{true, 0.0});
  PlantState st = plant.initial_state();
  auto vsi = idle_vsi();
  const double scale = p.base.v_base_phase_peak() / (0.5 * 700.0);
  for (int k = 0; k < 300; ++k) {
    vsi[0].m_abc = balanced_abc(0.9 * scale, kTwoPi * 50.0 * k * p.dt);
    st = plant.step(st, vsi);
  }
  const PlantState a = plant.step(st, vsi);
  const PlantState b = plant.step(st, vsi);
  CHECK(std::memcmp(a.i_inv[0].data(), b.i_inv[0].data(), sizeof(double) * 3) == 0);
  CHECK(std::memcmp(a.v_pcc.data(), b.v_pcc.data(), sizeof(double) * 3) == 0);
  CHECK(a.theta_grid == b.theta_grid);
}

TEST_CASE("state divergence raises a blow-up error naming the state") {
  PlantParams p = default_params();
  Plant plant(p, pcc_load(0.6), BreakerState{true, 0.0});
  PlantState st = plant.initial_state();
  st.v_cap[1] = balanced_abc(120.0, 0.0); // already outside the envelope
  auto vsi = idle_vsi();
  CHECK_THROWS_AS(plant.step(st, vsi), BlowUpError);
  try {
    plant.step(st, vsi);
  } catch (const BlowUpError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("diverged") != std::string::npos);
    CHECK(msg.find("[1]") != std::string::npos); // names the offending inverter leg
  }
}

TEST_CASE("filter resonance validation") {
  CHECK_THROWS_AS(validate_filter({1e-6, 1e-6, 0.005}, 1e-4, 50.0), ConfigError); // above Nyquist
  CHECK_THROWS_AS(validate_filter({2.0, 2.0, 0.005}, 1e-4, 50.0), ConfigError);   // below 10x f0
  CHECK_NOTHROW(validate_filter({0.08, 0.05, 0.005}, 1e-4, 50.0));
}
