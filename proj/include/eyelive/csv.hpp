#pragma once

// CSV formats: the per-word metrics export and the raw gaze log.

#include <array>
#include <charconv>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "eyelive/error.hpp"
#include "eyelive/model.hpp"

namespace eyelive {

inline constexpr std::array<std::string_view, 19> kMetricsHeader = {
    "word_index", "text", "char_index", "sentence_index", "TFD", "AFD", "MiFD",
    "MaFD", "F_count", "TFF_ts", "TTFF", "FFD", "FpFFD", "Fp_group", "FpR",
    "FpD", "RPD", "sRPD", "RRD"};

inline constexpr std::array<std::string_view, 10> kGazeLogHeader = {
    "t_us", "sx", "sy", "ox", "oy", "oz", "px", "py", "pz", "valid"};

namespace csv {

// Integer microseconds as milliseconds with exactly three decimals.
inline std::string format_ms(std::int64_t us) {
  const bool neg = us < 0;
  const std::uint64_t a = neg ? static_cast<std::uint64_t>(-(us + 1)) + 1 : static_cast<std::uint64_t>(us);
  std::string frac = std::to_string(a % 1000);
  frac.insert(0, 3 - frac.size(), '0');
  return (neg ? "-" : "") + std::to_string(a / 1000) + "." + frac;
}

// Mean duration rounded half-up to the microsecond.
inline std::int64_t rounded_mean_us(std::int64_t total_us, int count) {
  return (2 * total_us + count) / (2 * static_cast<std::int64_t>(count));
}

inline std::string format_double(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline std::string quote(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

// Splits one CSV record (RFC 4180 quoting). Quoted fields may not span lines.
inline std::vector<std::string> split(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  bool in_quotes = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      in_quotes = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  if (in_quotes) throw error(errc::parse_error, "unterminated quoted field");
  out.push_back(std::move(cur));
  return out;
}

template <class T>
T parse_number(std::string_view s, const char* what) {
  T v{};
  auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw error(errc::parse_error, std::string("bad ") + what + " '" + std::string(s) + "'");
  }
  return v;
}

}  // namespace csv

// Text columns for a metrics row.
struct WordLabel {
  std::string text;
  int char_index = 0;
  int sentence_index = 0;
};

// Labels for word indices, newest manifest first.
inline std::vector<WordLabel> word_labels(const std::vector<LayoutManifest>& history, std::size_t n_words) {
  std::vector<WordLabel> out(n_words);
  std::vector<bool> set(n_words, false);
  for (auto it = history.rbegin(); it != history.rend(); ++it) {
    for (const auto& w : it->words) {
      auto i = static_cast<std::size_t>(w.word_index);
      if (i < n_words && !set[i]) {
        out[i] = {w.text, w.char_index, w.sentence_index};
        set[i] = true;
      }
    }
  }
  return out;
}

inline void write_metrics_csv(std::ostream& os, const std::vector<WordMetrics>& rows,
                              const std::vector<WordLabel>& labels) {
  for (std::size_t i = 0; i < kMetricsHeader.size(); ++i) os << (i ? "," : "") << kMetricsHeader[i];
  os << '\n';
  auto ms = [](const std::optional<std::int64_t>& v) { return v ? csv::format_ms(*v) : std::string(); };
  for (const auto& m : rows) {
    const auto i = static_cast<std::size_t>(m.word_index);
    const WordLabel lbl = i < labels.size() ? labels[i] : WordLabel{};
    os << m.word_index << ',' << csv::quote(lbl.text) << ',' << lbl.char_index << ',' << lbl.sentence_index << ','
       << csv::format_ms(m.tfd_us) << ','
       << (m.fixation_count > 0 ? csv::format_ms(csv::rounded_mean_us(m.tfd_us, m.fixation_count)) : "") << ','
       << ms(m.min_us) << ',' << ms(m.max_us) << ',' << m.fixation_count << ',' << ms(m.tff_us) << ','
       << ms(m.ttff_us) << ',' << ms(m.ffd_us) << ',' << ms(m.fp_ffd_us) << ','
       << (m.fp_group ? std::to_string(*m.fp_group) : "") << ','
       << (m.fp_regression ? (*m.fp_regression ? "1" : "0") : "") << ',' << ms(m.fp_duration_us) << ','
       << ms(m.rpd_us) << ',' << ms(m.srpd_us) << ',' << csv::format_ms(m.rrd_us) << '\n';
  }
}

// A parsed metrics export: numeric cells per word, empty cells absent.
struct MetricsTable {
  struct Row {
    std::string text;
    std::map<std::string, std::optional<double>, std::less<>> values;
  };
  std::map<int, Row> rows;
};

inline MetricsTable read_metrics_csv(std::istream& is) {
  MetricsTable t;
  std::string line;
  if (!std::getline(is, line)) throw error(errc::parse_error, "metrics CSV: missing header");
  const auto header = csv::split(line);
  std::map<std::string, std::size_t, std::less<>> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  for (auto name : kMetricsHeader) {
    if (!col.contains(name)) throw error(errc::parse_error, "metrics CSV: missing column " + std::string(name));
  }
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    std::vector<std::string> cells;
    try {
      cells = csv::split(line);
      if (cells.size() != header.size()) throw error(errc::parse_error, "wrong column count");
      MetricsTable::Row row;
      row.text = cells[col.at("text")];
      for (std::size_t k = 4; k < kMetricsHeader.size(); ++k) {
        const auto& cell = cells[col.find(kMetricsHeader[k])->second];
        row.values[std::string(kMetricsHeader[k])] =
            cell.empty() ? std::nullopt : std::optional<double>(csv::parse_number<double>(cell, "number"));
      }
      const int wi = csv::parse_number<int>(cells[col.at("word_index")], "word_index");
      t.rows[wi] = std::move(row);
    } catch (const error& e) {
      throw error(errc::parse_error, "metrics CSV line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return t;
}

// ---- gaze log ---------------------------------------------------------------

struct GazeLog {
  std::vector<GazeSample> samples;
};

inline GazeLog read_gaze_log(std::istream& is) {
  GazeLog log;
  std::string line;
  if (!std::getline(is, line)) throw error(errc::parse_error, "gaze log line 1: missing header");
  const auto header = csv::split(line);
  if (header.size() != kGazeLogHeader.size()) throw error(errc::parse_error, "gaze log line 1: bad header");
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] != kGazeLogHeader[i]) throw error(errc::parse_error, "gaze log line 1: bad header");
  }
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    try {
      const auto c = csv::split(line);
      if (c.size() != kGazeLogHeader.size()) throw error(errc::parse_error, "wrong column count");
      GazeSample s;
      s.t_us = csv::parse_number<std::int64_t>(c[0], "t_us");
      s.screen_x = csv::parse_number<double>(c[1], "sx");
      s.screen_y = csv::parse_number<double>(c[2], "sy");
      auto vec = [&](std::size_t k) -> std::optional<Vec3> {
        if (c[k].empty() && c[k + 1].empty() && c[k + 2].empty()) return std::nullopt;
        return Vec3{csv::parse_number<double>(c[k], "coordinate"), csv::parse_number<double>(c[k + 1], "coordinate"),
                    csv::parse_number<double>(c[k + 2], "coordinate")};
      };
      s.origin_3d = vec(3);
      s.pos_3d = vec(6);
      if (c[9] == "1" || c[9] == "true") {
        s.valid = true;
      } else if (c[9] == "0" || c[9] == "false") {
        s.valid = false;
      } else {
        throw error(errc::parse_error, "bad valid flag '" + c[9] + "'");
      }
      if (!log.samples.empty() && s.t_us < log.samples.back().t_us) {
        throw error(errc::parse_error, "t_us decreases");
      }
      log.samples.push_back(s);
    } catch (const error& e) {
      throw error(errc::parse_error, "gaze log line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return log;
}

inline void write_gaze_log(std::ostream& os, const GazeLog& log) {
  for (std::size_t i = 0; i < kGazeLogHeader.size(); ++i) os << (i ? "," : "") << kGazeLogHeader[i];
  os << '\n';
  for (const auto& s : log.samples) {
    os << s.t_us << ',' << csv::format_double(s.screen_x) << ',' << csv::format_double(s.screen_y);
    for (const auto* v : {&s.origin_3d, &s.pos_3d}) {
      if (*v) {
        os << ',' << csv::format_double((*v)->x) << ',' << csv::format_double((*v)->y) << ','
           << csv::format_double((*v)->z);
      } else {
        os << ",,,";
      }
    }
    os << ',' << (s.valid ? 1 : 0) << '\n';
  }
}

}  // namespace eyelive
