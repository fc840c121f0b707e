#pragma once
// The full-system stepping loop: plant -> measurements -> PLLs/controllers
// (PVs then battery) -> synchronizer -> modulation latch, with event
// scheduling, telemetry decimation and abort handling. Deterministic: the
// same scenario always produces byte-identical telemetry.

#include "fsim/control.hpp"
#include "fsim/network.hpp"
#include "fsim/pv.hpp"
#include "fsim/scenario.hpp"
#include "fsim/storage.hpp"
#include "fsim/sync.hpp"
#include "fsim/telemetry.hpp"

#include <memory>

namespace fsim::sim {

struct RunResult {
  RunReport report;
  std::vector<TelemetryRecord> telemetry;
  int exit_code{0}; // 0 clean, 2 aborted
};

class Simulation {
 public:
  explicit Simulation(const Scenario& scenario);

  RunResult run();

  const Scenario& scenario() const { return sc_; }

 private:
  struct PvSystem {
    pv::PvArrayParams array;
    pv::MpptState mppt;
    double c_dc{0.01};
    double v_dc{580.0};
    double irradiance{1000.0};
    double temperature{25.0};
    double dc_gain{0.5};  // A per V of DC voltage error
    double p_rated_w{22e3};
    int mppt_decim{1000};
    int tick{0};
    bool collapsed{false};

    double p_target_w() const;
    void step_dc(double p_ac_w, double dt);
    void on_enter_ccm();
    void on_enter_vcm();
  };

  void apply_event(const Event& e, double t, RunReport& report);
  TelemetryRecord make_record(double t, const net::PlantState& state,
                              const std::array<ctl::ControlOutputs, 3>& outs,
                              const sync::SyncUnit::StepResult& sync_out) const;

  Scenario sc_;
  std::unique_ptr<net::Plant> plant_;
  net::PlantState state_;
  std::array<std::unique_ptr<ctl::InverterControl>, 3> ctrl_; // pv1, pv2, battery
  std::array<PvSystem, 2> pv_;
  bess::BatteryParams bat_params_;
  bess::BatteryState bat_state_;
  bool bat_limited_{false};
  std::unique_ptr<sync::SyncUnit> sync_;
  std::array<net::VsiInput, 3> vsi_latch_{};
  std::array<bool, 3> enabled_{true, true, true};
  sync::SyncTrims trims_{};
};

/// Convenience wrapper: build and run in one call.
RunResult run_scenario(const Scenario& scenario);

} // namespace fsim::sim
