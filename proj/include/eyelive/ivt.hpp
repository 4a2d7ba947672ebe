#pragma once

// Streaming velocity-threshold (I-VT) classification.
//
// Each accepted sample after the first of a segment is labeled by the
// angular velocity between it and a reference sample window_samples-1 back:
// below the threshold is Fixation, at or above is Saccade. Runs of equal
// labels become events with these rules:
//   - the first sample of a segment is Unknown and joins a fixation run that
//     starts right after it, or serves as onset of a saccade that does;
//   - a saccade starts at the sample preceding its first saccade sample;
//   - a fixation run must span at least max(min_fixation_us, 1 us), otherwise
//     it is absorbed into the neighbouring saccade (or dropped when there is
//     none), which keeps fixation and saccade events strictly alternating;
//   - a gap above max_gap_us between valid samples closes the segment.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <variant>
#include <vector>

#include "eyelive/error.hpp"
#include "eyelive/model.hpp"

namespace eyelive {

struct IvtConfig {
  double threshold_dps = 30.0;
  int window_samples = 2;
  std::int64_t min_fixation_us = 0;
  std::int64_t max_gap_us = 100'000;

  friend bool operator==(const IvtConfig&, const IvtConfig&) = default;

  void check() const {
    if (!(threshold_dps > 0)) throw error(errc::parse_error, "threshold must be > 0");
    if (window_samples < 2) throw error(errc::parse_error, "window must be >= 2 samples");
    if (min_fixation_us < 0 || max_gap_us <= 0) throw error(errc::parse_error, "bad duration filter");
  }
};

enum class Label { Unknown, Fixation, Saccade };

struct SampleLabel {
  std::int64_t t_us = 0;
  Label label = Label::Unknown;
  double velocity_dps = 0.0;
};

using GazeEvent = std::variant<Fixation, Saccade>;

// Unit gaze direction for a sample. Uses the 3D origin/position pair when
// present, otherwise a virtual eye eye_distance_mm in front of the screen
// centre looking at the sample's physical screen location.
inline Vec3 gaze_direction(const GazeSample& s, const ScreenModel& m) {
  Vec3 d;
  if (s.origin_3d && s.pos_3d) {
    d = *s.pos_3d - *s.origin_3d;
    if (d.x == 0.0 && d.y == 0.0 && d.z == 0.0) {
      throw error(errc::degenerate_geometry, "gaze origin equals gaze position");
    }
  } else {
    d = {(s.screen_x - m.width_px / 2.0) * (m.width_mm / m.width_px),
         (s.screen_y - m.height_px / 2.0) * (m.height_mm / m.height_px), m.eye_distance_mm};
  }
  const double n = d.norm();
  return {d.x / n, d.y / n, d.z / n};
}

// Same angle as acos(clamp(a.b)) for unit vectors, without its loss of
// precision near 0 and 180 degrees.
inline double angle_deg(const Vec3& a, const Vec3& b) {
  const Vec3 c{a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
  return std::atan2(c.norm(), a.dot(b)) * (180.0 / std::numbers::pi);
}

inline double angular_velocity(const Vec3& d_prev, const Vec3& d_cur, std::int64_t dt_us) {
  if (dt_us <= 0) throw error(errc::timestamp_order, "non-positive sample interval");
  return angle_deg(d_prev, d_cur) / (static_cast<double>(dt_us) / 1e6);
}

class IvtClassifier {
 public:
  enum class Status { accepted, invalid, degenerate, out_of_order };

  struct Result {
    Status status = Status::accepted;
    std::optional<SampleLabel> label;
  };

  explicit IvtClassifier(IvtConfig cfg = {}, ScreenModel screen = {})
      : cfg_(cfg), screen_(screen) {
    cfg_.check();
    ring_.resize(static_cast<std::size_t>(cfg_.window_samples));
  }

  const IvtConfig& config() const { return cfg_; }
  const ScreenModel& screen() const { return screen_; }
  std::int64_t rejected_count() const { return rejected_; }
  std::int64_t skipped_count() const { return skipped_; }

  // Feeds one sample; finalized events are appended to `out`. `page` is the
  // sample's page-coordinate point, absent while no viewport is known.
  Result classify(const GazeSample& s, std::optional<Point> page, std::vector<GazeEvent>& out) {
    if (last_t_ && s.t_us <= *last_t_) {
      ++rejected_;
      return {Status::out_of_order, std::nullopt};
    }
    last_t_ = s.t_us;
    if (!s.valid) {
      ++skipped_;
      return {Status::invalid, std::nullopt};
    }
    Vec3 dir;
    try {
      dir = gaze_direction(s, screen_);
    } catch (const error&) {
      ++skipped_;
      return {Status::degenerate, std::nullopt};
    }

    if (seg_len_ > 0 && s.t_us - newest().t > cfg_.max_gap_us) end_segment(out);

    const Pt cur{s.t_us, page, dir, 0.0};
    if (seg_len_ == 0) {
      push(cur);
      head_ = cur;
      return {Status::accepted, SampleLabel{s.t_us, Label::Unknown, 0.0}};
    }

    const Pt& ref = reference();
    const double v = angular_velocity(ref.dir, dir, s.t_us - ref.t);
    const Pt prev = newest();
    Pt p = cur;
    p.vel = v;
    push(p);

    const Label label = v < cfg_.threshold_dps ? Label::Fixation : Label::Saccade;
    if (label == Label::Fixation) {
      on_fixation_sample(p, out);
    } else {
      on_saccade_sample(p, prev, out);
    }
    return {Status::accepted, SampleLabel{s.t_us, label, v}};
  }

  // Closes whatever is pending at the last accepted sample.
  void finalize_stream(std::vector<GazeEvent>& out) { end_segment(out); }

 private:
  struct Pt {
    std::int64_t t = 0;
    std::optional<Point> page;
    Vec3 dir;
    double vel = 0.0;
  };

  struct FixRun {
    Pt first;
    Pt last;
    double sum_x = 0.0;
    double sum_y = 0.0;
    int n_pts = 0;
    int count = 0;
    double max_vel = 0.0;

    void add(const Pt& p) {
      if (count == 0) first = p;
      last = p;
      ++count;
      max_vel = std::max(max_vel, p.vel);
      if (p.page) {
        sum_x += p.page->x;
        sum_y += p.page->y;
        ++n_pts;
      }
    }
  };

  struct SacGroup {
    Pt start;
    Pt end;
    int count = 0;
    double peak = 0.0;

    void add(const Pt& p) {
      end = p;
      ++count;
      peak = std::max(peak, p.vel);
    }
    void absorb(const FixRun& f) {
      end = f.last;
      count += f.count;
      peak = std::max(peak, f.max_vel);
    }
  };

  bool qualifies(const FixRun& f) const {
    return f.last.t - f.first.t >= std::max<std::int64_t>(cfg_.min_fixation_us, 1);
  }

  void on_fixation_sample(const Pt& p, std::vector<GazeEvent>& out) {
    if (auto* fix = std::get_if<FixRun>(&run_)) {
      fix->add(p);
    } else {
      FixRun fresh;
      if (auto* sac = std::get_if<SacGroup>(&run_)) {
        held_ = *sac;
      } else {
        fresh.add(*head_);
      }
      fresh.add(p);
      run_ = fresh;
    }
    if (held_ && qualifies(std::get<FixRun>(run_))) {
      emit(*held_, out);
      held_.reset();
    }
  }

  void on_saccade_sample(const Pt& p, const Pt& prev, std::vector<GazeEvent>& out) {
    if (auto* fix = std::get_if<FixRun>(&run_)) {
      SacGroup g;
      if (qualifies(*fix)) {
        emit(*fix, out);
        g.start = prev;
      } else if (held_) {
        g = *held_;
        g.absorb(*fix);
        held_.reset();
      } else {
        g.start = fix->first;
        g.absorb(*fix);
      }
      g.add(p);
      run_ = g;
    } else if (auto* sac = std::get_if<SacGroup>(&run_)) {
      sac->add(p);
    } else {
      SacGroup g;
      g.start = *head_;
      g.add(p);
      run_ = g;
    }
  }

  void end_segment(std::vector<GazeEvent>& out) {
    if (auto* fix = std::get_if<FixRun>(&run_)) {
      if (qualifies(*fix)) {
        emit(*fix, out);
      } else if (held_) {
        held_->absorb(*fix);
        emit(*held_, out);
      }
    } else if (auto* sac = std::get_if<SacGroup>(&run_)) {
      emit(*sac, out);
    }
    held_.reset();
    run_ = std::monostate{};
    head_.reset();
    seg_len_ = 0;
    ring_pos_ = 0;
  }

  void emit(const FixRun& f, std::vector<GazeEvent>& out) {
    Fixation fx;
    fx.start_us = f.first.t;
    fx.end_us = f.last.t;
    fx.sample_count = f.count;
    if (f.n_pts > 0) fx.centroid = Point{f.sum_x / f.n_pts, f.sum_y / f.n_pts};
    out.emplace_back(fx);
  }

  void emit(const SacGroup& g, std::vector<GazeEvent>& out) {
    Saccade sc;
    sc.start_us = g.start.t;
    sc.end_us = g.end.t;
    sc.start_pt = g.start.page;
    sc.end_pt = g.end.page;
    sc.start_dir = g.start.dir;
    sc.end_dir = g.end.dir;
    sc.sample_count = g.count;
    sc.peak_velocity_dps = g.peak;
    sc.seq_index = next_seq_++;
    out.emplace_back(sc);
  }

  // Ring of the last window_samples accepted samples of the segment.
  void push(const Pt& p) {
    ring_[ring_pos_ % ring_.size()] = p;
    ++ring_pos_;
    ++seg_len_;
  }
  const Pt& newest() const { return ring_[(ring_pos_ - 1) % ring_.size()]; }
  // Sample window_samples-1 back from the newest, clamped to the segment start.
  // Called before the newest sample is pushed.
  const Pt& reference() const {
    const std::size_t back = std::min<std::size_t>(ring_.size() - 1, seg_len_);
    return ring_[(ring_pos_ - back) % ring_.size()];
  }

  IvtConfig cfg_;
  ScreenModel screen_;
  std::vector<Pt> ring_;
  std::size_t ring_pos_ = 0;
  std::size_t seg_len_ = 0;
  std::optional<Pt> head_;
  std::variant<std::monostate, FixRun, SacGroup> run_;
  std::optional<SacGroup> held_;
  std::optional<std::int64_t> last_t_;
  std::int64_t next_seq_ = 0;
  std::int64_t rejected_ = 0;
  std::int64_t skipped_ = 0;
};

}  // namespace eyelive
