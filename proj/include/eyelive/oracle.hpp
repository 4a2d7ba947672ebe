#pragma once

// Offline reference implementation. Classifies a whole recorded stream in
// one pass over arrays, maps with a brute-force word scan, and derives every
// metric by rescanning the fixation list per word. It shares only the
// geometry primitives and the export format with the streaming engine.

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <vector>

#include "eyelive/csv.hpp"
#include "eyelive/ivt.hpp"
#include "eyelive/model.hpp"
#include "eyelive/session.hpp"

namespace eyelive::oracle {

struct Input {
  std::vector<GazeSample> samples;
  LayoutManifest manifest;
  std::vector<ViewportState> viewports;  // empty: identity transform
  IvtConfig ivt;
  ScreenModel screen;
  FirstPassMode first_pass_mode = FirstPassMode::strict;
};

struct Result {
  std::vector<Fixation> fixations;
  std::vector<Saccade> saccades;
  std::vector<WordMetrics> metrics;
  std::optional<std::int64_t> session_start_us;
};

namespace detail {

struct S {
  std::int64_t t;
  std::optional<Point> page;
  Vec3 dir;
};

inline std::optional<Point> page_point(const GazeSample& g, const std::vector<ViewportState>& vps) {
  if (vps.empty()) return Point{g.screen_x, g.screen_y};
  const ViewportState* best = nullptr;
  for (const auto& v : vps) {
    if (v.t_us <= g.t_us && (!best || v.t_us >= best->t_us)) best = &v;
  }
  if (!best) {
    best = &vps.front();
    for (const auto& v : vps) {
      if (v.t_us < best->t_us) best = &v;
    }
  }
  return screen_to_page({g.screen_x, g.screen_y}, *best);
}

// Events of one gap-free segment.
inline void classify_segment(const std::vector<S>& seg, const IvtConfig& cfg, std::vector<GazeEvent>& out,
                             std::int64_t& seq) {
  const std::size_t n = seg.size();
  if (n < 2) return;
  std::vector<double> vel(n, 0.0);
  std::vector<bool> sac(n, false);
  for (std::size_t i = 1; i < n; ++i) {
    const std::size_t back = static_cast<std::size_t>(cfg.window_samples - 1);
    const std::size_t ref = i >= back ? i - back : 0;
    vel[i] = angular_velocity(seg[ref].dir, seg[i].dir, seg[i].t - seg[ref].t);
    sac[i] = !(vel[i] < cfg.threshold_dps);
  }

  // Label runs over indices 1..n-1; a fixation run starting at 1 also owns
  // the unlabeled first sample.
  struct Run {
    bool saccade;
    std::size_t a, b;  // inclusive member range
  };
  std::vector<Run> runs;
  for (std::size_t i = 1; i < n; ++i) {
    if (!runs.empty() && runs.back().saccade == sac[i]) {
      runs.back().b = i;
    } else {
      runs.push_back({sac[i], i, i});
    }
  }
  if (!runs.front().saccade) runs.front().a = 0;

  const std::int64_t min_span = std::max<std::int64_t>(cfg.min_fixation_us, 1);
  auto fix_ok = [&](const Run& r) { return !r.saccade && seg[r.b].t - seg[r.a].t >= min_span; };

  std::size_t k = 0;
  while (k < runs.size()) {
    if (fix_ok(runs[k])) {
      const Run& r = runs[k];
      Fixation f;
      f.start_us = seg[r.a].t;
      f.end_us = seg[r.b].t;
      f.sample_count = static_cast<int>(r.b - r.a + 1);
      double sx = 0, sy = 0;
      int np = 0;
      for (std::size_t i = r.a; i <= r.b; ++i) {
        if (seg[i].page) {
          sx += seg[i].page->x;
          sy += seg[i].page->y;
          ++np;
        }
      }
      if (np > 0) f.centroid = Point{sx / np, sy / np};
      out.emplace_back(f);
      ++k;
      continue;
    }
    // Maximal group of saccade runs and too-short fixation runs.
    std::size_t e = k;
    bool has_saccade = false;
    while (e < runs.size() && !fix_ok(runs[e])) {
      has_saccade = has_saccade || runs[e].saccade;
      ++e;
    }
    if (has_saccade) {
      const std::size_t first = runs[k].a;
      const std::size_t last = runs[e - 1].b;
      const std::size_t start = runs[k].saccade ? first - 1 : first;
      Saccade s;
      s.start_us = seg[start].t;
      s.end_us = seg[last].t;
      s.start_pt = seg[start].page;
      s.end_pt = seg[last].page;
      s.start_dir = seg[start].dir;
      s.end_dir = seg[last].dir;
      s.sample_count = static_cast<int>(last - first + 1);
      double peak = 0.0;
      for (std::size_t i = std::max<std::size_t>(first, 1); i <= last; ++i) peak = std::max(peak, vel[i]);
      s.peak_velocity_dps = peak;
      s.seq_index = seq++;
      out.emplace_back(s);
    }
    k = e;
  }
}

struct LineOf {
  int line_rank;  // document-order rank of the line (its smallest word index)
  double top, bottom, left, right;
  bool closed_right;
};

inline std::vector<LineOf> extended_boxes(const LayoutManifest& m) {
  const std::size_t n = m.words.size();
  // Union-find over vertically overlapping words of the same paragraph.
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const auto& a = m.words[i];
      const auto& b = m.words[j];
      if (a.paragraph_id != b.paragraph_id) continue;
      if (a.box.top() <= b.box.bottom() && b.box.top() <= a.box.bottom()) parent[find(i)] = find(j);
    }
  }
  std::vector<LineOf> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& w = m.words[i].box;
    double top = w.top(), bottom = w.bottom();
    int rank = static_cast<int>(i);
    const WordAoi* prev = nullptr;
    const WordAoi* next = nullptr;
    for (std::size_t j = 0; j < n; ++j) {
      if (find(j) != find(i)) continue;
      const auto& o = m.words[j];
      top = std::min(top, o.box.top());
      bottom = std::max(bottom, o.box.bottom());
      rank = std::min(rank, static_cast<int>(j));
      if (j == i) continue;
      if (o.box.left() < w.left() || (o.box.left() == w.left() && j < i)) {
        if (!prev || o.box.left() > prev->box.left() ||
            (o.box.left() == prev->box.left() && o.word_index > prev->word_index)) {
          prev = &o;
        }
      } else {
        if (!next || o.box.left() < next->box.left() ||
            (o.box.left() == next->box.left() && o.word_index < next->word_index)) {
          next = &o;
        }
      }
    }
    LineOf l{rank, top, bottom, w.left(), w.right(), next == nullptr};
    if (prev) l.left = prev->box.right() + (w.left() - prev->box.right()) / 3.0;
    if (next) l.right = w.right() + (next->box.left() - w.right()) / 3.0;
    out[i] = l;
  }
  return out;
}

inline std::optional<int> word_at(const std::vector<LineOf>& ext, Point p) {
  std::optional<int> best;
  int best_rank = 0;
  for (std::size_t i = 0; i < ext.size(); ++i) {
    const auto& e = ext[i];
    const bool in_x = p.x >= e.left && (p.x < e.right || (e.closed_right && p.x == e.right));
    if (!in_x || p.y < e.top || p.y > e.bottom) continue;
    if (!best || e.line_rank < best_rank) {
      best = static_cast<int>(i);
      best_rank = e.line_rank;
    }
  }
  return best;
}

}  // namespace detail

// Fixation groups and per-word metrics from a chronological fixation list.
// Word indices of the fixations are taken as given.
inline std::vector<WordMetrics> metrics_from_fixations(std::vector<Fixation>& fixations, std::size_t n_words,
                                                       FirstPassMode mode, std::optional<std::int64_t> start_us,
                                                       std::optional<std::int64_t> onset_us) {
  int group = 0;
  for (std::size_t i = 0; i < fixations.size(); ++i) {
    const bool same = i > 0 && fixations[i].word_index && fixations[i - 1].word_index == fixations[i].word_index;
    if (!same) ++group;
    fixations[i].fixation_group = group;
  }
  struct M {
    int word;
    std::int64_t start, dur;
    int group;
  };
  std::vector<M> seq;
  for (const auto& f : fixations) {
    if (f.word_index) seq.push_back({*f.word_index, f.start_us, f.duration_us(), f.fixation_group});
  }
  for (const auto& m : seq) n_words = std::max(n_words, static_cast<std::size_t>(m.word) + 1);

  std::vector<WordMetrics> out;
  for (std::size_t wi = 0; wi < n_words; ++wi) {
    const int w = static_cast<int>(wi);
    WordMetrics r;
    r.word_index = w;
    std::optional<std::size_t> first;
    for (std::size_t i = 0; i < seq.size(); ++i) {
      if (seq[i].word != w) continue;
      if (!first) first = i;
      r.tfd_us += seq[i].dur;
      ++r.fixation_count;
      r.min_us = r.min_us ? std::min(*r.min_us, seq[i].dur) : seq[i].dur;
      r.max_us = r.max_us ? std::max(*r.max_us, seq[i].dur) : seq[i].dur;
    }
    if (!first) {
      r.rrd_us = 0;
      out.push_back(r);
      continue;
    }
    const auto& f0 = seq[*first];
    r.ffd_us = f0.dur;
    if (start_us) r.tff_us = f0.start - *start_us;
    if (onset_us) r.ttff_us = f0.start - *onset_us;

    bool valid = true;
    if (mode == FirstPassMode::strict) {
      for (std::size_t i = 0; i < *first; ++i) valid = valid && seq[i].word < w;
    }
    if (!valid) {
      r.rrd_us = r.tfd_us;
      out.push_back(r);
      continue;
    }
    std::size_t j = *first;
    std::int64_t fpd = 0;
    while (j < seq.size() && seq[j].word == w) fpd += seq[j++].dur;
    r.fp_duration_us = fpd;
    r.fp_ffd_us = f0.dur;
    r.fp_group = f0.group;
    r.fp_regression = j < seq.size() && seq[j].word < w;
    std::int64_t rpd = 0, srpd = 0;
    for (std::size_t i = *first; i < seq.size() && seq[i].word <= w; ++i) {
      rpd += seq[i].dur;
      if (seq[i].word == w) srpd += seq[i].dur;
    }
    r.rpd_us = rpd;
    r.srpd_us = srpd;
    r.rrd_us = r.tfd_us - fpd;
    out.push_back(r);
  }
  return out;
}

inline Result run(const Input& in) {
  Result res;
  // Accepted samples: strictly increasing timestamps; then valid geometry.
  std::vector<detail::S> valid;
  std::optional<std::int64_t> last;
  for (const auto& g : in.samples) {
    if (last && g.t_us <= *last) continue;
    last = g.t_us;
    if (!res.session_start_us) res.session_start_us = g.t_us;
    if (!g.valid) continue;
    Vec3 dir;
    try {
      dir = gaze_direction(g, in.screen);
    } catch (const error&) {
      continue;
    }
    valid.push_back({g.t_us, detail::page_point(g, in.viewports), dir});
  }

  std::vector<GazeEvent> events;
  std::int64_t seq = 0;
  std::size_t a = 0;
  for (std::size_t i = 1; i <= valid.size(); ++i) {
    if (i == valid.size() || valid[i].t - valid[i - 1].t > in.ivt.max_gap_us) {
      std::vector<detail::S> seg(valid.begin() + static_cast<std::ptrdiff_t>(a),
                                 valid.begin() + static_cast<std::ptrdiff_t>(i));
      detail::classify_segment(seg, in.ivt, events, seq);
      a = i;
    }
  }

  const auto ext = detail::extended_boxes(in.manifest);
  std::map<int, int> para_count;
  for (auto& ev : events) {
    if (auto* f = std::get_if<Fixation>(&ev)) {
      if (f->centroid) {
        if (auto w = detail::word_at(ext, *f->centroid)) {
          f->word_index = w;
          f->aoi_box = in.manifest.words[static_cast<std::size_t>(*w)].box;
        } else {
          for (const auto& md : in.manifest.media) {
            if (md.box.contains(*f->centroid)) {
              f->media_id = md.media_id;
              f->aoi_box = md.box;
              break;
            }
          }
        }
      }
      res.fixations.push_back(*f);
    } else {
      auto s = std::get<Saccade>(ev);
      if (s.start_pt && s.end_pt) {
        for (const auto& p : in.manifest.paragraphs) {
          if (p.box.contains(*s.start_pt) && p.box.contains(*s.end_pt)) {
            s.paragraph_id = p.paragraph_id;
            s.aoi_seq_index = ++para_count[p.paragraph_id];
            break;
          }
        }
      }
      res.saccades.push_back(s);
    }
  }

  res.metrics = metrics_from_fixations(res.fixations, in.manifest.words.size(), in.first_pass_mode,
                                       res.session_start_us, res.session_start_us);
  return res;
}

inline void write_csv(std::ostream& os, const std::vector<WordMetrics>& metrics,
                      const std::vector<LayoutManifest>& manifests) {
  write_metrics_csv(os, metrics, word_labels(manifests, metrics.size()));
}

// Metrics of a recorded session, rescanned from its fixation records (word
// assignments as recorded). Refuses when the recording was made with a
// different configuration than `expected`.
inline std::vector<WordMetrics> from_session(const LoadedSession& s, const std::optional<SessionConfig>& expected) {
  if (expected && s.config && !(*expected == *s.config)) {
    throw error(errc::config_mismatch, "session was recorded with a different configuration");
  }
  std::size_t n = 0;
  for (const auto& m : s.manifests) n = std::max(n, m.words.size());
  auto fx = s.fixations;
  const auto mode = s.config ? s.config->first_pass_mode : FirstPassMode::strict;
  return metrics_from_fixations(fx, n, mode, s.info.start_us, s.info.onset_us);
}

}  // namespace eyelive::oracle
