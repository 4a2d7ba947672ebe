#pragma once

// Synthetic reading gaze and synthetic page layouts.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "eyelive/csv.hpp"
#include "eyelive/model.hpp"

namespace eyelive::sim {

struct ReadingProfile {
  double rate_hz = 300.0;
  double fix_mean_ms = 220.0;
  double fix_sd_ms = 60.0;
  double fix_min_ms = 80.0;
  double saccade_ms = 20.0;
  double p_skip = 0.0;
  double p_regress = 0.0;
  // Word after which a regression is always made (in addition to p_regress).
  std::optional<int> regress_after;
  int regress_words = 1;  // maximum regression distance in words
  double p_refixate = 0.0;
  double noise_px = 0.0;
  std::uint64_t seed = 1;
  bool with_3d = false;
  std::int64_t start_us = 0;
};

// One planned fixation: target word and duration.
struct PlannedFixation {
  int word_index;
  std::int64_t duration_us;
  bool refixation = false;
};

struct Simulation {
  GazeLog log;
  std::vector<PlannedFixation> plan;
};

inline Point word_center(const WordAoi& w) { return {w.box.x + w.box.w / 2.0, w.box.y + w.box.h / 2.0}; }

// Eye at the origin looking at the screen centre, as the 2D fallback model.
inline std::pair<Vec3, Vec3> eye_geometry(Point screen, const ScreenModel& m) {
  const double x_mm = (screen.x - m.width_px / 2.0) * m.width_mm / m.width_px;
  const double y_mm = (screen.y - m.height_px / 2.0) * m.height_mm / m.height_px;
  return {Vec3{0, 0, 0}, Vec3{x_mm, y_mm, m.eye_distance_mm}};
}

// Reading order: sequential with optional skips, refixations and regressions.
inline std::vector<PlannedFixation> plan_reading(const LayoutManifest& layout, const ReadingProfile& p,
                                                 std::mt19937_64& rng) {
  std::vector<PlannedFixation> plan;
  const int n = static_cast<int>(layout.words.size());
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> dur(p.fix_mean_ms, p.fix_sd_ms);
  auto duration = [&] {
    const double ms = std::max(p.fix_min_ms, p.fix_sd_ms > 0 ? dur(rng) : p.fix_mean_ms);
    return static_cast<std::int64_t>(std::llround(ms * 1000.0));
  };
  std::vector<bool> regressed(static_cast<std::size_t>(n), false);
  int w = 0;
  while (w < n) {
    if (w > 0 && w < n - 1 && p.p_skip > 0 && u(rng) < p.p_skip) {
      ++w;
      continue;
    }
    plan.push_back({w, duration()});
    if (p.p_refixate > 0 && u(rng) < p.p_refixate) plan.push_back({w, duration(), true});
    const bool forced = p.regress_after && *p.regress_after == w && !regressed[static_cast<std::size_t>(w)];
    if (w > 0 && (forced || (p.p_regress > 0 && u(rng) < p.p_regress))) {
      regressed[static_cast<std::size_t>(w)] = true;
      std::uniform_int_distribution<int> back(1, std::max(1, p.regress_words));
      const int target = std::max(0, w - back(rng));
      plan.push_back({target, duration()});
    }
    ++w;
  }
  return plan;
}

// Samples at rate_hz: each fixation dwells on its word centre, each saccade
// interpolates linearly between centres.
inline Simulation simulate(const LayoutManifest& layout, const ReadingProfile& p,
                           const ScreenModel& screen = {}) {
  Simulation sim;
  std::mt19937_64 rng(p.seed);
  sim.plan = plan_reading(layout, p, rng);
  std::normal_distribution<double> noise(0.0, p.noise_px > 0 ? p.noise_px : 1.0);
  const double period_us = 1e6 / p.rate_hz;
  std::int64_t k = 0;
  auto emit = [&](Point at) {
    GazeSample s;
    s.t_us = p.start_us + static_cast<std::int64_t>(std::llround(static_cast<double>(k++) * period_us));
    if (p.noise_px > 0) {
      at.x += noise(rng);
      at.y += noise(rng);
    }
    s.screen_x = at.x;
    s.screen_y = at.y;
    if (p.with_3d) {
      auto [o, q] = eye_geometry(at, screen);
      s.origin_3d = o;
      s.pos_3d = q;
    }
    sim.log.samples.push_back(s);
  };
  const auto sac_samples = std::max<std::int64_t>(1, std::llround(p.saccade_ms * 1000.0 / period_us));
  std::optional<Point> prev;
  for (const auto& f : sim.plan) {
    const auto& word = layout.words[static_cast<std::size_t>(f.word_index)];
    Point c = word_center(word);
    // A refixation lands a quarter word right of centre in a one-sample jump.
    if (f.refixation) c.x += word.box.w / 4.0;
    const std::int64_t steps = f.refixation ? 1 : sac_samples;
    if (prev) {
      for (std::int64_t i = 1; i <= steps; ++i) {
        const double a = static_cast<double>(i) / static_cast<double>(steps + 1);
        emit({prev->x + (c.x - prev->x) * a, prev->y + (c.y - prev->y) * a});
      }
    }
    const auto n = std::max<std::int64_t>(2, std::llround(static_cast<double>(f.duration_us) / period_us));
    for (std::int64_t i = 0; i < n; ++i) emit(c);
    prev = c;
  }
  return sim;
}

struct TextLayoutStyle {
  double left = 100.0;
  double top = 100.0;
  double line_width = 900.0;
  double char_w = 9.0;
  double space_w = 9.0;
  double word_h = 18.0;
  double line_h = 28.0;
  double paragraph_gap = 28.0;
  std::string url = "about:synthetic";
};

inline std::size_t code_points(std::string_view s) { return detail::code_point_offsets(s).size() - 1; }

// Lays text out in fixed-pitch lines. Blank lines separate paragraphs; a
// sentence ends at a word ending in '.', '!' or '?'.
inline LayoutManifest layout_from_text(std::string_view text, const TextLayoutStyle& st = {}) {
  std::vector<std::vector<std::string>> paras;
  {
    std::istringstream is{std::string(text)};
    std::string line;
    std::vector<std::string> cur;
    while (std::getline(is, line)) {
      std::istringstream ls(line);
      std::string word;
      bool any = false;
      while (ls >> word) {
        cur.push_back(word);
        any = true;
      }
      if (!any && !cur.empty()) {
        paras.push_back(std::move(cur));
        cur.clear();
      }
    }
    if (!cur.empty()) paras.push_back(std::move(cur));
  }

  LayoutManifest m;
  m.url = st.url;
  double y = st.top;
  int sentence = 0;
  std::size_t cp = 0;
  for (std::size_t pi = 0; pi < paras.size(); ++pi) {
    if (pi > 0) {
      m.page_text += "\n\n";
      cp += 2;
      y += st.paragraph_gap;
    }
    const double para_top = y;
    double x = st.left;
    double max_right = st.left;
    for (std::size_t wi = 0; wi < paras[pi].size(); ++wi) {
      const auto& word = paras[pi][wi];
      const double w = static_cast<double>(code_points(word)) * st.char_w;
      if (wi > 0) {
        m.page_text += ' ';
        ++cp;
        if (x + st.space_w + w > st.left + st.line_width) {
          x = st.left;
          y += st.line_h;
        } else {
          x += st.space_w;
        }
      }
      WordAoi a;
      a.word_index = static_cast<int>(m.words.size());
      a.char_index = static_cast<int>(cp);
      a.sentence_index = sentence;
      a.paragraph_id = static_cast<int>(pi);
      a.text = word;
      a.box = {x, y, w, st.word_h};
      m.words.push_back(a);
      m.page_text += word;
      cp += code_points(word);
      x += w;
      max_right = std::max(max_right, x);
      const char last = word.back();
      if (last == '.' || last == '!' || last == '?') ++sentence;
    }
    m.paragraphs.push_back({static_cast<int>(pi), Rect{st.left, para_top, max_right - st.left, y + st.word_h - para_top}});
    y += st.line_h;
  }
  return m;
}

// Deterministic filler text of n words split into paragraphs.
inline std::string filler_text(int n_words, int n_paragraphs, std::uint64_t seed = 7) {
  static const char* kWords[] = {"the",   "reader", "moves",  "across", "a",      "line",    "of",     "text",
                                 "while", "gaze",   "data",   "arrives", "from",  "tracker", "and",    "each",
                                 "word",  "is",     "mapped", "to",     "its",    "box",     "quickly", "again"};
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, std::size(kWords) - 1);
  std::uniform_int_distribution<int> sentence_len(6, 16);
  std::string out;
  const int per_para = std::max(1, n_words / std::max(1, n_paragraphs));
  int in_sentence = 0, target = sentence_len(rng);
  for (int i = 0; i < n_words; ++i) {
    if (i > 0) out += (i % per_para == 0 && i / per_para < n_paragraphs) ? "\n\n" : " ";
    out += kWords[pick(rng)];
    if (++in_sentence == target || i == n_words - 1) {
      out += '.';
      in_sentence = 0;
      target = sentence_len(rng);
    }
  }
  out += '\n';
  return out;
}

}  // namespace eyelive::sim
