#pragma once

// JSON mapping of the domain types (wire protocol and session files).
// Output uses ordered_json so field order is stable across runs; doubles are
// written in shortest round-trip form.

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>

#include "json.hpp"

#include "eyelive/error.hpp"
#include "eyelive/model.hpp"

namespace eyelive {

using ojson = nlohmann::ordered_json;

namespace detail {

template <class J>
const J& require(const J& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw error(errc::parse_error, std::string("missing field '") + key + "'");
  return *it;
}

template <class T, class J>
T get_as(const J& j, const char* key) {
  try {
    return require(j, key).template get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw error(errc::parse_error, std::string("field '") + key + "': " + e.what());
  }
}

template <class T, class J>
std::optional<T> get_opt(const J& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  try {
    return it->template get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw error(errc::parse_error, std::string("field '") + key + "': " + e.what());
  }
}

template <class J>
double num(const J& j) {
  if (!j.is_number()) throw error(errc::parse_error, "expected a number");
  return j.template get<double>();
}

template <class J>
Rect rect_from(const J& j) {
  if (!j.is_array() || j.size() != 4) throw error(errc::parse_error, "box must be [x,y,w,h]");
  return {num(j[0]), num(j[1]), num(j[2]), num(j[3])};
}

template <class J>
Vec3 vec3_from(const J& j) {
  if (!j.is_array() || j.size() != 3) throw error(errc::parse_error, "expected a 3-vector");
  return {num(j[0]), num(j[1]), num(j[2])};
}

template <class J>
Point point_from(const J& j) {
  if (!j.is_array() || j.size() != 2) throw error(errc::parse_error, "expected a 2-vector");
  return {num(j[0]), num(j[1])};
}

inline ojson to_j(const Rect& r) { return ojson::array({r.x, r.y, r.w, r.h}); }
inline ojson to_j(const Vec3& v) { return ojson::array({v.x, v.y, v.z}); }
inline ojson to_j(const Point& p) { return ojson::array({p.x, p.y}); }

template <class T>
ojson opt_j(const std::optional<T>& v) {
  if (!v) return nullptr;
  if constexpr (std::is_same_v<T, Rect> || std::is_same_v<T, Point> || std::is_same_v<T, Vec3>) {
    return to_j(*v);
  } else {
    return *v;
  }
}

inline ojson ms_j(const std::optional<std::int64_t>& us) {
  if (!us) return nullptr;
  return static_cast<double>(*us) / 1000.0;
}

template <class J>
std::optional<std::int64_t> us_from_ms(const J& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return std::llround(num(*it) * 1000.0);
}

}  // namespace detail

// ---- manifest ---------------------------------------------------------------

inline ojson manifest_fields(const LayoutManifest& m) {
  ojson j = ojson::object();
  j["url"] = m.url;
  j["page_text"] = m.page_text;
  ojson words = ojson::array();
  for (const auto& w : m.words) {
    ojson wj = ojson::object();
    wj["i"] = w.word_index;
    wj["char"] = w.char_index;
    wj["sent"] = w.sentence_index;
    wj["para"] = w.paragraph_id;
    wj["text"] = w.text;
    wj["box"] = detail::to_j(w.box);
    words.push_back(std::move(wj));
  }
  j["words"] = std::move(words);
  ojson paras = ojson::array();
  for (const auto& p : m.paragraphs) paras.push_back({{"id", p.paragraph_id}, {"box", detail::to_j(p.box)}});
  j["paragraphs"] = std::move(paras);
  ojson media = ojson::array();
  for (const auto& md : m.media) {
    media.push_back({{"id", md.media_id}, {"kind", md.kind}, {"box", detail::to_j(md.box)}});
  }
  j["media"] = std::move(media);
  return j;
}

template <class J>
LayoutManifest manifest_from(const J& j) {
  using detail::get_as;
  LayoutManifest m;
  m.url = get_as<std::string>(j, "url");
  m.page_text = get_as<std::string>(j, "page_text");
  for (const auto& wj : detail::require(j, "words")) {
    WordAoi w;
    w.word_index = get_as<int>(wj, "i");
    w.char_index = get_as<int>(wj, "char");
    w.sentence_index = get_as<int>(wj, "sent");
    w.paragraph_id = get_as<int>(wj, "para");
    w.text = get_as<std::string>(wj, "text");
    w.box = detail::rect_from(detail::require(wj, "box"));
    m.words.push_back(std::move(w));
  }
  for (const auto& pj : detail::require(j, "paragraphs")) {
    m.paragraphs.push_back({get_as<int>(pj, "id"), detail::rect_from(detail::require(pj, "box"))});
  }
  if (auto it = j.find("media"); it != j.end()) {
    for (const auto& mj : *it) {
      m.media.push_back({get_as<int>(mj, "id"), get_as<std::string>(mj, "kind"),
                         detail::rect_from(detail::require(mj, "box"))});
    }
  }
  return m;
}

// ---- gaze / viewport ------------------------------------------------------

inline ojson sample_fields(const GazeSample& s) {
  ojson j = ojson::object();
  j["t_us"] = s.t_us;
  j["sx"] = s.screen_x;
  j["sy"] = s.screen_y;
  if (s.origin_3d) j["origin"] = detail::to_j(*s.origin_3d);
  if (s.pos_3d) j["pos"] = detail::to_j(*s.pos_3d);
  j["valid"] = s.valid;
  return j;
}

template <class J>
GazeSample sample_from(const J& j) {
  GazeSample s;
  s.t_us = detail::get_as<std::int64_t>(j, "t_us");
  s.screen_x = detail::num(detail::require(j, "sx"));
  s.screen_y = detail::num(detail::require(j, "sy"));
  if (auto it = j.find("origin"); it != j.end() && !it->is_null()) s.origin_3d = detail::vec3_from(*it);
  if (auto it = j.find("pos"); it != j.end() && !it->is_null()) s.pos_3d = detail::vec3_from(*it);
  s.valid = detail::get_as<bool>(j, "valid");
  return s;
}

inline ojson viewport_fields(const ViewportState& v) {
  ojson j = ojson::object();
  j["t_us"] = v.t_us;
  j["win_x"] = v.win_x;
  j["win_y"] = v.win_y;
  j["scroll_x"] = v.scroll_x;
  j["scroll_y"] = v.scroll_y;
  j["dpr"] = v.dpr;
  return j;
}

template <class J>
ViewportState viewport_from(const J& j) {
  ViewportState v;
  v.t_us = detail::get_as<std::int64_t>(j, "t_us");
  v.win_x = detail::num(detail::require(j, "win_x"));
  v.win_y = detail::num(detail::require(j, "win_y"));
  v.scroll_x = detail::num(detail::require(j, "scroll_x"));
  v.scroll_y = detail::num(detail::require(j, "scroll_y"));
  v.dpr = detail::num(detail::require(j, "dpr"));
  if (!(v.dpr > 0)) throw error(errc::parse_error, "dpr must be > 0");
  return v;
}

// ---- events ---------------------------------------------------------------

inline ojson fixation_fields(const Fixation& f) {
  ojson j = ojson::object();
  j["start_us"] = f.start_us;
  j["end_us"] = f.end_us;
  j["duration_us"] = f.duration_us();
  j["centroid"] = detail::opt_j(f.centroid);
  j["sample_count"] = f.sample_count;
  j["word_index"] = detail::opt_j(f.word_index);
  j["media_id"] = detail::opt_j(f.media_id);
  j["aoi_box"] = detail::opt_j(f.aoi_box);
  j["fixation_group"] = f.fixation_group;
  return j;
}

template <class J>
Fixation fixation_from(const J& j) {
  using detail::get_as;
  Fixation f;
  f.start_us = get_as<std::int64_t>(j, "start_us");
  f.end_us = get_as<std::int64_t>(j, "end_us");
  if (auto it = j.find("centroid"); it != j.end() && !it->is_null()) f.centroid = detail::point_from(*it);
  f.sample_count = get_as<int>(j, "sample_count");
  f.word_index = detail::get_opt<int>(j, "word_index");
  f.media_id = detail::get_opt<int>(j, "media_id");
  if (auto it = j.find("aoi_box"); it != j.end() && !it->is_null()) f.aoi_box = detail::rect_from(*it);
  f.fixation_group = get_as<int>(j, "fixation_group");
  return f;
}

inline ojson saccade_fields(const Saccade& s) {
  ojson j = ojson::object();
  j["start_us"] = s.start_us;
  j["end_us"] = s.end_us;
  j["duration_us"] = s.duration_us();
  j["start_pt"] = detail::opt_j(s.start_pt);
  j["end_pt"] = detail::opt_j(s.end_pt);
  j["start_dir"] = detail::to_j(s.start_dir);
  j["end_dir"] = detail::to_j(s.end_dir);
  j["sample_count"] = s.sample_count;
  j["seq_index"] = s.seq_index;
  j["aoi_seq_index"] = detail::opt_j(s.aoi_seq_index);
  j["paragraph_id"] = detail::opt_j(s.paragraph_id);
  j["length_px"] = s.length_px;
  j["amplitude_deg"] = s.amplitude_deg;
  j["peak_velocity_dps"] = s.peak_velocity_dps;
  j["direction"] = detail::to_j(s.direction);
  j["degenerate"] = s.degenerate;
  return j;
}

template <class J>
Saccade saccade_from(const J& j) {
  using detail::get_as;
  Saccade s;
  s.start_us = get_as<std::int64_t>(j, "start_us");
  s.end_us = get_as<std::int64_t>(j, "end_us");
  if (auto it = j.find("start_pt"); it != j.end() && !it->is_null()) s.start_pt = detail::point_from(*it);
  if (auto it = j.find("end_pt"); it != j.end() && !it->is_null()) s.end_pt = detail::point_from(*it);
  s.start_dir = detail::vec3_from(detail::require(j, "start_dir"));
  s.end_dir = detail::vec3_from(detail::require(j, "end_dir"));
  s.sample_count = get_as<int>(j, "sample_count");
  s.seq_index = get_as<std::int64_t>(j, "seq_index");
  s.aoi_seq_index = detail::get_opt<int>(j, "aoi_seq_index");
  s.paragraph_id = detail::get_opt<int>(j, "paragraph_id");
  s.length_px = detail::num(detail::require(j, "length_px"));
  s.amplitude_deg = detail::num(detail::require(j, "amplitude_deg"));
  s.peak_velocity_dps = detail::num(detail::require(j, "peak_velocity_dps"));
  s.direction = detail::point_from(detail::require(j, "direction"));
  s.degenerate = get_as<bool>(j, "degenerate");
  return s;
}

// ---- metrics --------------------------------------------------------------

inline ojson metrics_fields(const WordMetrics& m) {
  ojson j = ojson::object();
  j["word_index"] = m.word_index;
  j["TFD"] = static_cast<double>(m.tfd_us) / 1000.0;
  if (auto afd = m.afd_us()) {
    j["AFD"] = *afd / 1000.0;
  } else {
    j["AFD"] = nullptr;
  }
  j["MiFD"] = detail::ms_j(m.min_us);
  j["MaFD"] = detail::ms_j(m.max_us);
  j["F_count"] = m.fixation_count;
  j["TFF_ts"] = detail::ms_j(m.tff_us);
  j["TTFF"] = detail::ms_j(m.ttff_us);
  j["FFD"] = detail::ms_j(m.ffd_us);
  j["FpFFD"] = detail::ms_j(m.fp_ffd_us);
  j["Fp_group"] = detail::opt_j(m.fp_group);
  j["FpR"] = detail::opt_j(m.fp_regression);
  j["FpD"] = detail::ms_j(m.fp_duration_us);
  j["RPD"] = detail::ms_j(m.rpd_us);
  j["sRPD"] = detail::ms_j(m.srpd_us);
  j["RRD"] = static_cast<double>(m.rrd_us) / 1000.0;
  return j;
}

template <class J>
WordMetrics metrics_from(const J& j) {
  WordMetrics m;
  m.word_index = detail::get_as<int>(j, "word_index");
  m.tfd_us = std::llround(detail::num(detail::require(j, "TFD")) * 1000.0);
  m.fixation_count = detail::get_as<int>(j, "F_count");
  m.min_us = detail::us_from_ms(j, "MiFD");
  m.max_us = detail::us_from_ms(j, "MaFD");
  m.tff_us = detail::us_from_ms(j, "TFF_ts");
  m.ttff_us = detail::us_from_ms(j, "TTFF");
  m.ffd_us = detail::us_from_ms(j, "FFD");
  m.fp_ffd_us = detail::us_from_ms(j, "FpFFD");
  m.fp_group = detail::get_opt<int>(j, "Fp_group");
  m.fp_regression = detail::get_opt<bool>(j, "FpR");
  m.fp_duration_us = detail::us_from_ms(j, "FpD");
  m.rpd_us = detail::us_from_ms(j, "RPD");
  m.srpd_us = detail::us_from_ms(j, "sRPD");
  m.rrd_us = std::llround(detail::num(detail::require(j, "RRD")) * 1000.0);
  return m;
}

}  // namespace eyelive
