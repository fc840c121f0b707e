#pragma once
// Telemetry records, the CSV writer (fixed header, 9 significant digits) and
// the post-run summary metrics.

#include "fsim/simcore.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace fsim::sim {

// Flag bits packed into TelemetryRecord::flags.
inline constexpr std::uint32_t kFlagOvermodPv1 = 1u << 0;
inline constexpr std::uint32_t kFlagOvermodPv2 = 1u << 1;
inline constexpr std::uint32_t kFlagOvermodBat = 1u << 2;
inline constexpr std::uint32_t kFlagSatPv1 = 1u << 3;
inline constexpr std::uint32_t kFlagSatPv2 = 1u << 4;
inline constexpr std::uint32_t kFlagSatBat = 1u << 5;
inline constexpr std::uint32_t kFlagPllBandPv1 = 1u << 6;
inline constexpr std::uint32_t kFlagPllBandPv2 = 1u << 7;
inline constexpr std::uint32_t kFlagPllBandBat = 1u << 8;
inline constexpr std::uint32_t kFlagRideThroughPv1 = 1u << 9;
inline constexpr std::uint32_t kFlagRideThroughPv2 = 1u << 10;
inline constexpr std::uint32_t kFlagBatteryLimit = 1u << 11;

struct TelemetryRecord {
  double t{0.0};
  double f_pv1_hz{50.0}, f_pv2_hz{50.0}, f_bat_hz{50.0};
  double p_pv1_kw{0.0}, q_pv1_kvar{0.0};
  double p_pv2_kw{0.0}, q_pv2_kvar{0.0};
  double p_bat_kw{0.0}, q_bat_kvar{0.0};
  double soc_bat{0.0};
  int mode_pv1{0}, mode_pv2{0}; // 0 = CCM, 1 = VCM
  double v_pcc_peak_v{0.0};
  double theta_gi_deg{0.0}; // island minus grid
  double dv_sync_pu{0.0};
  double df_sync_hz{0.0};
  int breaker_closed{1};
  int sync_armed{0}, sync_in_band{0}, sync_permit{0};
  double p_ref_pv1_kw{0.0}, p_ref_pv2_kw{0.0}, p_ref_bat_kw{0.0};
  double ang_pv1_deg{0.0}, ang_pv2_deg{0.0}, ang_bat_deg{0.0};
  double vdc_pv1_v{0.0}, vdc_pv2_v{0.0};
  double v_pv1_pu{0.0}, v_pv2_pu{0.0}, v_bat_pu{0.0}; // positive-seq terminal magnitude
  double i_grid_peak_pu{0.0};
  double i_load_peak_pu{0.0};
  std::uint32_t flags{0};
};

/// The fixed CSV header row (also documented in docs/telemetry_columns.md).
std::string telemetry_csv_header();

/// One CSV row, floats at 9 significant digits.
std::string telemetry_csv_row(const TelemetryRecord& r);

/// Writes header plus one row per record. Throws ConfigError on I/O failure.
void write_telemetry(const std::vector<TelemetryRecord>& records, const std::string& path);

/// Parses a file produced by write_telemetry (used by `summarize <csv>`).
std::vector<TelemetryRecord> parse_telemetry_csv(const std::string& text);

struct TransientMetrics {
  double t{0.0};                // transition time
  double max_freq_dev_hz{0.0};  // within 0.5 s of the transition
  double max_vpcc_dev_rel{0.0};
  double settling_time_s{-1.0}; // -1: did not settle inside the segment
};

struct RunReport {
  bool aborted{false};
  std::string abort_reason;
  double abort_time{0.0};
  double max_rocof_hz_per_s{0.0};
  double f_nadir_hz{0.0};
  double f_zenith_hz{0.0};
  std::vector<TransientMetrics> transitions;
  std::array<double, 3> sharing_ratio{{0.0, 0.0, 0.0}}; // pv1, pv2, battery
  bool has_islanded_span{false};
  std::vector<std::string> event_log;
  double wall_clock_s{0.0};
  std::uint64_t steps{0};
};

/// Metrics computed purely from telemetry. RoCoF is a centered difference
/// of each source frequency over a 20 ms window; sharing ratios are taken
/// over the final 10% of the longest islanded span.
RunReport summarize(const std::vector<TelemetryRecord>& records);

std::string report_to_json(const RunReport& r);
std::string report_to_text(const RunReport& r);

} // namespace fsim::sim
