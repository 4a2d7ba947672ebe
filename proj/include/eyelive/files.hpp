#pragma once

// File loaders shared by the command-line tools.

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <cmath>

#include "json.hpp"

#include "eyelive/aoi.hpp"
#include "eyelive/csv.hpp"
#include "eyelive/serialize.hpp"
#include "eyelive/session.hpp"

namespace eyelive {

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw error(errc::io_error, "cannot open " + p.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& p, std::string_view data) {
  std::ofstream os(p, std::ios::binary | std::ios::trunc);
  os.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!os) throw error(errc::io_error, "cannot write " + p.string());
}

inline LayoutManifest load_manifest(const std::filesystem::path& p) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(p));
  } catch (const nlohmann::json::exception& e) {
    throw error(errc::parse_error, p.string() + ": " + e.what());
  }
  try {
    auto m = manifest_from(j);
    validate(m);
    (void)WordHitIndex(m);  // same checks the mapper applies
    return m;
  } catch (const error& e) {
    throw error(e.code(), p.string() + ": " + e.what());
  }
}

inline std::string manifest_json(const LayoutManifest& m) { return manifest_fields(m).dump(2) + "\n"; }

inline GazeLog load_gaze_log(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw error(errc::io_error, "cannot open " + p.string());
  try {
    return read_gaze_log(is);
  } catch (const error& e) {
    throw error(e.code(), p.string() + ": " + e.what());
  }
}

inline MetricsTable load_metrics_csv(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw error(errc::io_error, "cannot open " + p.string());
  try {
    return read_metrics_csv(is);
  } catch (const error& e) {
    throw error(e.code(), p.string() + ": " + e.what());
  }
}

// Config file: any subset of
//   {"threshold_dps", "window_samples", "min_fixation_us", "max_gap_us",
//    "first_pass_mode", "flush_interval_s", "flush_on_state_change",
//    "screen": {"width_px", "height_px", "width_mm", "height_mm", "eye_distance_mm"}}
inline void apply_config_json(SessionConfig& c, const nlohmann::json& j) {
  if (!j.is_object()) throw error(errc::parse_error, "config must be a JSON object");
  try {
    for (const auto& [k, v] : j.items()) {
      if (k == "threshold_dps") c.ivt.threshold_dps = v.get<double>();
      else if (k == "window_samples") c.ivt.window_samples = v.get<int>();
      else if (k == "min_fixation_us") c.ivt.min_fixation_us = v.get<std::int64_t>();
      else if (k == "max_gap_us") c.ivt.max_gap_us = v.get<std::int64_t>();
      else if (k == "first_pass_mode") c.first_pass_mode = parse_first_pass_mode(v.get<std::string>());
      else if (k == "flush_interval_s") c.flush.interval_us = std::llround(v.get<double>() * 1e6);
      else if (k == "flush_on_state_change") c.flush.flush_on_state_change = v.get<bool>();
      else if (k == "screen") {
        for (const auto& [sk, sv] : v.items()) {
          const double d = sv.get<double>();
          if (sk == "width_px") c.screen.width_px = d;
          else if (sk == "height_px") c.screen.height_px = d;
          else if (sk == "width_mm") c.screen.width_mm = d;
          else if (sk == "height_mm") c.screen.height_mm = d;
          else if (sk == "eye_distance_mm") c.screen.eye_distance_mm = d;
          else throw error(errc::parse_error, "unknown screen key '" + sk + "'");
        }
      } else {
        throw error(errc::parse_error, "unknown config key '" + k + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw error(errc::parse_error, std::string("config: ") + e.what());
  }
}

inline SessionConfig load_config(const std::filesystem::path& p, SessionConfig base = {}) {
  try {
    apply_config_json(base, nlohmann::json::parse(read_file(p)));
  } catch (const nlohmann::json::exception& e) {
    throw error(errc::parse_error, p.string() + ": " + e.what());
  }
  return base;
}

inline void check_config(const SessionConfig& c) {
  c.ivt.check();
  if (!c.screen.valid()) throw error(errc::parse_error, "screen model fields must be > 0");
  if (c.flush.interval_us <= 0) throw error(errc::parse_error, "flush interval must be > 0");
}

}  // namespace eyelive
