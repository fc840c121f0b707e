#include "fsim/telemetry.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace fsim::sim {

namespace {

constexpr const char* kHeader =
    "t_s,f_pv1_hz,f_pv2_hz,f_bat_hz,"
    "p_pv1_kw,q_pv1_kvar,p_pv2_kw,q_pv2_kvar,p_bat_kw,q_bat_kvar,soc_bat,"
    "mode_pv1,mode_pv2,v_pcc_peak_v,theta_gi_deg,dv_sync_pu,df_sync_hz,"
    "breaker_closed,sync_armed,sync_in_band,sync_permit,"
    "p_ref_pv1_kw,p_ref_pv2_kw,p_ref_bat_kw,"
    "ang_pv1_deg,ang_pv2_deg,ang_bat_deg,vdc_pv1_v,vdc_pv2_v,"
    "v_pv1_pu,v_pv2_pu,v_bat_pu,"
    "i_grid_peak_pu,i_load_peak_pu,flags";

void put(std::string& row, double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  row += buf;
  row += ',';
}

void put(std::string& row, int v) {
  row += std::to_string(v);
  row += ',';
}

} // namespace

std::string telemetry_csv_header() { return kHeader; }

std::string telemetry_csv_row(const TelemetryRecord& r) {
  std::string row;
  row.reserve(360);
  put(row, r.t);
  put(row, r.f_pv1_hz);
  put(row, r.f_pv2_hz);
  put(row, r.f_bat_hz);
  put(row, r.p_pv1_kw);
  put(row, r.q_pv1_kvar);
  put(row, r.p_pv2_kw);
  put(row, r.q_pv2_kvar);
  put(row, r.p_bat_kw);
  put(row, r.q_bat_kvar);
  put(row, r.soc_bat);
  put(row, r.mode_pv1);
  put(row, r.mode_pv2);
  put(row, r.v_pcc_peak_v);
  put(row, r.theta_gi_deg);
  put(row, r.dv_sync_pu);
  put(row, r.df_sync_hz);
  put(row, r.breaker_closed);
  put(row, r.sync_armed);
  put(row, r.sync_in_band);
  put(row, r.sync_permit);
  put(row, r.p_ref_pv1_kw);
  put(row, r.p_ref_pv2_kw);
  put(row, r.p_ref_bat_kw);
  put(row, r.ang_pv1_deg);
  put(row, r.ang_pv2_deg);
  put(row, r.ang_bat_deg);
  put(row, r.vdc_pv1_v);
  put(row, r.vdc_pv2_v);
  put(row, r.v_pv1_pu);
  put(row, r.v_pv2_pu);
  put(row, r.v_bat_pu);
  put(row, r.i_grid_peak_pu);
  put(row, r.i_load_peak_pu);
  row += std::to_string(r.flags);
  return row;
}

void write_telemetry(const std::vector<TelemetryRecord>& records, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw ConfigError("write_telemetry: cannot open " + path);
  }
  out << kHeader << '\n';
  for (const auto& r : records) {
    out << telemetry_csv_row(r) << '\n';
  }
  if (!out) {
    throw ConfigError("write_telemetry: write failed for " + path);
  }
}

std::vector<TelemetryRecord> parse_telemetry_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kHeader) {
    throw ConfigError("telemetry CSV: unexpected header row");
  }
  std::vector<TelemetryRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) {
      continue;
    }
    std::vector<double> f;
    f.reserve(32);
    std::size_t pos = 0;
    while (pos <= line.size()) {
      const std::size_t comma = line.find(',', pos);
      const std::string tok = line.substr(pos, comma == std::string::npos ? comma : comma - pos);
      f.push_back(std::strtod(tok.c_str(), nullptr));
      if (comma == std::string::npos) {
        break;
      }
      pos = comma + 1;
    }
    if (f.size() != 35) {
      throw ConfigError("telemetry CSV: malformed row");
    }
    TelemetryRecord r;
    int i = 0;
    r.t = f[i++];
    r.f_pv1_hz = f[i++];
    r.f_pv2_hz = f[i++];
    r.f_bat_hz = f[i++];
    r.p_pv1_kw = f[i++];
    r.q_pv1_kvar = f[i++];
    r.p_pv2_kw = f[i++];
    r.q_pv2_kvar = f[i++];
    r.p_bat_kw = f[i++];
    r.q_bat_kvar = f[i++];
    r.soc_bat = f[i++];
    r.mode_pv1 = static_cast<int>(f[i++]);
    r.mode_pv2 = static_cast<int>(f[i++]);
    r.v_pcc_peak_v = f[i++];
    r.theta_gi_deg = f[i++];
    r.dv_sync_pu = f[i++];
    r.df_sync_hz = f[i++];
    r.breaker_closed = static_cast<int>(f[i++]);
    r.sync_armed = static_cast<int>(f[i++]);
    r.sync_in_band = static_cast<int>(f[i++]);
    r.sync_permit = static_cast<int>(f[i++]);
    r.p_ref_pv1_kw = f[i++];
    r.p_ref_pv2_kw = f[i++];
    r.p_ref_bat_kw = f[i++];
    r.ang_pv1_deg = f[i++];
    r.ang_pv2_deg = f[i++];
    r.ang_bat_deg = f[i++];
    r.vdc_pv1_v = f[i++];
    r.vdc_pv2_v = f[i++];
    r.v_pv1_pu = f[i++];
    r.v_pv2_pu = f[i++];
    r.v_bat_pu = f[i++];
    r.i_grid_peak_pu = f[i++];
    r.i_load_peak_pu = f[i++];
    r.flags = static_cast<std::uint32_t>(f[i++]);
    out.push_back(r);
  }
  return out;
}

namespace {

double channel(const TelemetryRecord& r, int c) {
  return c == 0 ? r.f_pv1_hz : c == 1 ? r.f_pv2_hz : r.f_bat_hz;
}

} // namespace

RunReport summarize(const std::vector<TelemetryRecord>& records) {
  RunReport rep;
  if (records.size() < 2) {
    throw ConfigError("summarize: need at least two telemetry records");
  }
  const double dt = records[1].t - records[0].t;

  // RoCoF: centered difference over a 20 ms window for each source channel.
  const int half = std::max(1, static_cast<int>(std::lround(0.01 / dt)));
  double worst = 0.0;
  double nadir = 1e9;
  double zenith = -1e9;
  for (std::size_t k = 0; k < records.size(); ++k) {
    for (int c = 0; c < 3; ++c) {
      const double f = channel(records[k], c);
      nadir = std::min(nadir, f);
      zenith = std::max(zenith, f);
      if (k >= static_cast<std::size_t>(half) && k + half < records.size()) {
        const double d =
            (channel(records[k + half], c) - channel(records[k - half], c)) / (2.0 * half * dt);
        worst = std::max(worst, std::abs(d));
      }
    }
  }
  rep.max_rocof_hz_per_s = worst;
  rep.f_nadir_hz = nadir;
  rep.f_zenith_hz = zenith;

  // Transitions: breaker edges plus PV mode changes.
  std::vector<std::size_t> marks;
  for (std::size_t k = 1; k < records.size(); ++k) {
    if (records[k].breaker_closed != records[k - 1].breaker_closed ||
        records[k].mode_pv1 != records[k - 1].mode_pv1 ||
        records[k].mode_pv2 != records[k - 1].mode_pv2) {
      if (marks.empty() || marks.back() != k) {
        marks.push_back(k);
      }
    }
  }
  for (std::size_t mi = 0; mi < marks.size(); ++mi) {
    const std::size_t k0 = marks[mi];
    const std::size_t kend =
        (mi + 1 < marks.size()) ? marks[mi + 1] : records.size();
    TransientMetrics tm;
    tm.t = records[k0].t;
    const TelemetryRecord& pre = records[k0 - 1];
    const std::size_t kwin =
        std::min(records.size(), k0 + static_cast<std::size_t>(std::lround(0.5 / dt)));
    for (std::size_t k = k0; k < kwin; ++k) {
      for (int c = 0; c < 3; ++c) {
        tm.max_freq_dev_hz =
            std::max(tm.max_freq_dev_hz, std::abs(channel(records[k], c) - channel(pre, c)));
      }
      if (pre.v_pcc_peak_v > 1.0) {
        tm.max_vpcc_dev_rel =
            std::max(tm.max_vpcc_dev_rel,
                     std::abs(records[k].v_pcc_peak_v - pre.v_pcc_peak_v) / pre.v_pcc_peak_v);
      }
    }
    // Settling: last time any channel leaves a 0.02 Hz band around its
    // end-of-segment mean.
    const std::size_t tail = std::max<std::size_t>(1, (kend - k0) / 10);
    double ref[3] = {0.0, 0.0, 0.0};
    for (std::size_t k = kend - tail; k < kend; ++k) {
      for (int c = 0; c < 3; ++c) {
        ref[c] += channel(records[k], c);
      }
    }
    for (double& v : ref) {
      v /= static_cast<double>(tail);
    }
    std::size_t settled_at = k0;
    for (std::size_t k = k0; k < kend; ++k) {
      for (int c = 0; c < 3; ++c) {
        if (std::abs(channel(records[k], c) - ref[c]) > 0.02) {
          settled_at = k + 1;
        }
      }
    }
    tm.settling_time_s =
        settled_at < kend ? records[settled_at].t - records[k0].t : -1.0;
    rep.transitions.push_back(tm);
  }

  // Sharing ratios over the final 10% of the longest islanded span.
  std::size_t best_len = 0;
  std::size_t best_end = 0;
  std::size_t run_start = 0;
  for (std::size_t k = 0; k <= records.size(); ++k) {
    const bool open = k < records.size() && records[k].breaker_closed == 0;
    if (open && (k == 0 || records[k - 1].breaker_closed != 0)) {
      run_start = k;
    }
    if (!open && k > 0 && records[k - 1].breaker_closed == 0) {
      if (k - run_start > best_len) {
        best_len = k - run_start;
        best_end = k;
      }
    }
  }
  if (best_len > 10) {
    rep.has_islanded_span = true;
    const std::size_t tail = std::max<std::size_t>(1, best_len / 10);
    double p[3] = {0.0, 0.0, 0.0};
    for (std::size_t k = best_end - tail; k < best_end; ++k) {
      p[0] += records[k].p_pv1_kw;
      p[1] += records[k].p_pv2_kw;
      p[2] += records[k].p_bat_kw;
    }
    const double total = p[0] + p[1] + p[2];
    if (std::abs(total) > 1e-9) {
      for (int c = 0; c < 3; ++c) {
        rep.sharing_ratio[c] = p[c] / total;
      }
    }
  }
  return rep;
}

std::string report_to_json(const RunReport& r) {
  nlohmann::json j;
  j["aborted"] = r.aborted;
  if (r.aborted) {
    j["abort_reason"] = r.abort_reason;
    j["abort_time_s"] = r.abort_time;
  }
  j["max_rocof_hz_per_s"] = r.max_rocof_hz_per_s;
  j["f_nadir_hz"] = r.f_nadir_hz;
  j["f_zenith_hz"] = r.f_zenith_hz;
  j["sharing_ratio"] = {r.sharing_ratio[0], r.sharing_ratio[1], r.sharing_ratio[2]};
  j["has_islanded_span"] = r.has_islanded_span;
  j["transitions"] = nlohmann::json::array();
  for (const auto& t : r.transitions) {
    j["transitions"].push_back({{"t_s", t.t},
                                {"max_freq_dev_hz", t.max_freq_dev_hz},
                                {"max_vpcc_dev_rel", t.max_vpcc_dev_rel},
                                {"settling_time_s", t.settling_time_s}});
  }
  j["event_log"] = r.event_log;
  j["wall_clock_s"] = r.wall_clock_s;
  j["steps"] = r.steps;
  return j.dump(2);
}

std::string report_to_text(const RunReport& r) {
  std::ostringstream os;
  if (r.aborted) {
    os << "RUN ABORTED at t=" << r.abort_time << " s: " << r.abort_reason << "\n";
  }
  os << "max |RoCoF|      : " << r.max_rocof_hz_per_s << " Hz/s\n";
  os << "frequency nadir  : " << r.f_nadir_hz << " Hz\n";
  os << "frequency zenith : " << r.f_zenith_hz << " Hz\n";
  if (r.has_islanded_span) {
    os << "islanded sharing : pv1 " << r.sharing_ratio[0] << ", pv2 " << r.sharing_ratio[1]
       << ", battery " << r.sharing_ratio[2] << "\n";
  }
  for (const auto& t : r.transitions) {
    os << "transition t=" << t.t << " s: max df " << t.max_freq_dev_hz << " Hz, max dVpcc "
       << 100.0 * t.max_vpcc_dev_rel << " %, settle ";
    if (t.settling_time_s < 0.0) {
      os << "n/a\n";
    } else {
      os << t.settling_time_s << " s\n";
    }
  }
  for (const auto& e : r.event_log) {
    os << "event: " << e << "\n";
  }
  if (r.steps > 0) {
    os << "steps: " << r.steps << " in " << r.wall_clock_s << " s wall clock\n";
  }
  return os.str();
}

} // namespace fsim::sim
