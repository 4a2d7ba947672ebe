#pragma once

// Domain types shared by the whole engine.
//
// Coordinates: all AOI geometry and every mapped point live in page CSS
// pixels. Raw samples arrive in device (screen) pixels and are converted with
// the latest ViewportState. Timestamps are integer microseconds taken from
// the gaze source clock; durations are exported as milliseconds.

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "eyelive/error.hpp"

namespace eyelive {

struct Point {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
};

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend bool operator==(const Vec3&, const Vec3&) = default;

  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  double norm() const { return std::sqrt(dot(*this)); }
};

struct Rect {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  friend bool operator==(const Rect&, const Rect&) = default;

  double left() const { return x; }
  double right() const { return x + w; }
  double top() const { return y; }
  double bottom() const { return y + h; }

  // Closed containment.
  bool contains(Point p) const {
    return p.x >= left() && p.x <= right() && p.y >= top() && p.y <= bottom();
  }
  bool contains(const Rect& r) const {
    return r.left() >= left() && r.right() <= right() && r.top() >= top() &&
           r.bottom() <= bottom();
  }
};

struct GazeSample {
  std::int64_t t_us = 0;
  double screen_x = 0.0;
  double screen_y = 0.0;
  std::optional<Vec3> origin_3d;
  std::optional<Vec3> pos_3d;
  bool valid = true;

  friend bool operator==(const GazeSample&, const GazeSample&) = default;
};

struct ViewportState {
  std::int64_t t_us = 0;
  double win_x = 0.0;
  double win_y = 0.0;
  double scroll_x = 0.0;
  double scroll_y = 0.0;
  double dpr = 1.0;

  friend bool operator==(const ViewportState&, const ViewportState&) = default;
};

inline Point screen_to_page(Point screen, const ViewportState& v) {
  return {(screen.x - v.win_x) / v.dpr + v.scroll_x,
          (screen.y - v.win_y) / v.dpr + v.scroll_y};
}

inline Point page_to_screen(Point page, const ViewportState& v) {
  return {(page.x - v.scroll_x) * v.dpr + v.win_x,
          (page.y - v.scroll_y) * v.dpr + v.win_y};
}

struct ScreenModel {
  double width_px = 1920.0;
  double height_px = 1080.0;
  double width_mm = 527.0;
  double height_mm = 296.0;
  double eye_distance_mm = 650.0;

  friend bool operator==(const ScreenModel&, const ScreenModel&) = default;

  bool valid() const {
    return width_px > 0 && height_px > 0 && width_mm > 0 && height_mm > 0 &&
           eye_distance_mm > 0;
  }
};

struct WordAoi {
  int word_index = 0;
  int char_index = 0;
  int sentence_index = 0;
  int paragraph_id = 0;
  std::string text;
  Rect box;

  friend bool operator==(const WordAoi&, const WordAoi&) = default;
};

struct ParagraphAoi {
  int paragraph_id = 0;
  Rect box;

  friend bool operator==(const ParagraphAoi&, const ParagraphAoi&) = default;
};

struct MediaAoi {
  int media_id = 0;
  std::string kind;  // "image" | "video"
  Rect box;

  friend bool operator==(const MediaAoi&, const MediaAoi&) = default;
};

struct LayoutManifest {
  std::string url;
  std::string page_text;
  std::vector<WordAoi> words;
  std::vector<ParagraphAoi> paragraphs;
  std::vector<MediaAoi> media;

  friend bool operator==(const LayoutManifest&, const LayoutManifest&) = default;
};

namespace detail {

// Byte offsets of every code point start in a UTF-8 string, plus the end.
inline std::vector<std::size_t> code_point_offsets(std::string_view s) {
  std::vector<std::size_t> out;
  out.reserve(s.size() + 1);
  for (std::size_t i = 0; i < s.size(); ++i) {
    if ((static_cast<unsigned char>(s[i]) & 0xC0) != 0x80) out.push_back(i);
  }
  out.push_back(s.size());
  return out;
}

inline bool box_ok(const Rect& r) {
  return std::isfinite(r.x) && std::isfinite(r.y) && std::isfinite(r.w) &&
         std::isfinite(r.h) && r.w >= 0 && r.h >= 0;
}

}  // namespace detail

// Checks the structural invariants of a manifest. char_index counts Unicode
// code points into page_text. Throws error(errc::manifest_invalid).
inline void validate(const LayoutManifest& m) {
  auto fail = [](const std::string& why) { throw error(errc::manifest_invalid, why); };

  std::vector<int> para_ids;
  for (const auto& p : m.paragraphs) {
    if (!detail::box_ok(p.box)) fail("paragraph " + std::to_string(p.paragraph_id) + " has a bad box");
    para_ids.push_back(p.paragraph_id);
  }
  for (const auto& md : m.media) {
    if (!detail::box_ok(md.box)) fail("media " + std::to_string(md.media_id) + " has a bad box");
  }

  const auto cps = detail::code_point_offsets(m.page_text);
  const auto n_cp = static_cast<long>(cps.size()) - 1;
  for (std::size_t i = 0; i < m.words.size(); ++i) {
    const auto& w = m.words[i];
    if (w.word_index != static_cast<int>(i)) fail("word_index not contiguous at position " + std::to_string(i));
    if (!detail::box_ok(w.box)) fail("word " + std::to_string(i) + " has a bad box");
    bool found = false;
    for (int id : para_ids) found = found || id == w.paragraph_id;
    if (!found) fail("word " + std::to_string(i) + " references unknown paragraph");
    if (w.char_index < 0 || w.char_index > n_cp) fail("word " + std::to_string(i) + " char_index out of range");
    const auto begin = cps[static_cast<std::size_t>(w.char_index)];
    if (m.page_text.compare(begin, w.text.size(), w.text) != 0) {
      fail("word " + std::to_string(i) + " text does not match page_text at char_index");
    }
  }
}

struct Fixation {
  std::int64_t start_us = 0;
  std::int64_t end_us = 0;
  std::optional<Point> centroid;
  int sample_count = 0;
  std::optional<int> word_index;
  std::optional<int> media_id;
  std::optional<Rect> aoi_box;
  int fixation_group = 0;

  std::int64_t duration_us() const { return end_us - start_us; }

  friend bool operator==(const Fixation&, const Fixation&) = default;
};

struct Saccade {
  std::int64_t start_us = 0;
  std::int64_t end_us = 0;
  std::optional<Point> start_pt;
  std::optional<Point> end_pt;
  // Gaze directions at the onset and landing samples.
  Vec3 start_dir;
  Vec3 end_dir;
  int sample_count = 0;
  std::int64_t seq_index = 0;
  std::optional<int> aoi_seq_index;
  std::optional<int> paragraph_id;
  double length_px = 0.0;
  double amplitude_deg = 0.0;
  double peak_velocity_dps = 0.0;
  Point direction;
  bool degenerate = false;

  std::int64_t duration_us() const { return end_us - start_us; }

  friend bool operator==(const Saccade&, const Saccade&) = default;
};

enum class FirstPassMode { strict, first_visit };

inline const char* to_string(FirstPassMode m) {
  return m == FirstPassMode::strict ? "strict" : "first_visit";
}

inline FirstPassMode parse_first_pass_mode(std::string_view s) {
  if (s == "strict") return FirstPassMode::strict;
  if (s == "first_visit") return FirstPassMode::first_visit;
  throw error(errc::parse_error, "unknown first-pass mode '" + std::string(s) + "'");
}

// Per-word metrics snapshot. Durations are integer microseconds; the export
// layer renders them as milliseconds with three decimals.
struct WordMetrics {
  int word_index = 0;
  std::int64_t tfd_us = 0;
  int fixation_count = 0;
  std::optional<std::int64_t> min_us;
  std::optional<std::int64_t> max_us;
  std::optional<std::int64_t> tff_us;   // first fixation start, relative to session start
  std::optional<std::int64_t> ttff_us;  // first fixation start, relative to stimulus onset
  std::optional<std::int64_t> ffd_us;
  std::optional<std::int64_t> fp_ffd_us;
  std::optional<int> fp_group;
  std::optional<bool> fp_regression;
  std::optional<std::int64_t> fp_duration_us;
  std::optional<std::int64_t> rpd_us;
  std::optional<std::int64_t> srpd_us;
  std::int64_t rrd_us = 0;

  // Mean fixation duration; absent for never-fixated words.
  std::optional<double> afd_us() const {
    if (fixation_count == 0) return std::nullopt;
    return static_cast<double>(tfd_us) / fixation_count;
  }

  friend bool operator==(const WordMetrics&, const WordMetrics&) = default;
};

}  // namespace eyelive
