#pragma once

// Incremental fixation, saccade and reading metrics.
//
// Reading measures are defined over the subsequence of word-mapped
// fixations; unmapped fixations only consume a fixation group number.
//   visit        maximal run of consecutive mapped fixations on one word
//   first pass   the word's first visit; in strict mode only if no word
//                with a higher index was fixated before it
//   FpR          first pass left towards a lower index (false while open)
//   RPD / sRPD   time from first-pass onset until the first fixation on a
//                higher index (all words / the word itself)
//   RRD          TFD - FpD, or TFD when there is no first pass

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "eyelive/error.hpp"
#include "eyelive/ivt.hpp"
#include "eyelive/model.hpp"

namespace eyelive {

class MetricsEngine {
 public:
  explicit MetricsEngine(FirstPassMode mode = FirstPassMode::strict) : mode_(mode) {}

  FirstPassMode mode() const { return mode_; }

  void set_session_start(std::int64_t t_us) { origin_us_ = t_us; }
  void set_stimulus_onset(std::int64_t t_us) { onset_us_ = t_us; }
  std::optional<std::int64_t> session_start() const { return origin_us_; }
  std::optional<std::int64_t> stimulus_onset() const { return onset_us_; }

  // Known word count; grows, never shrinks.
  void ensure_words(std::size_t n) {
    if (words_.size() < n) words_.resize(n);
  }
  std::size_t word_count() const { return words_.size(); }

  // Assigns f.fixation_group and updates every affected word. Returns the
  // word indices whose metrics changed.
  std::vector<int> on_fixation(Fixation& f) {
    if (f.end_us <= f.start_us) throw error(errc::timestamp_order, "fixation with non-positive duration");
    if (last_end_us_ && f.start_us < *last_end_us_) {
      throw error(errc::timestamp_order, "fixation starts before the previous one ended");
    }
    last_end_us_ = f.end_us;

    if (!(f.word_index && prev_word_ == f.word_index)) ++group_;
    f.fixation_group = group_;
    prev_word_ = f.word_index;

    std::vector<int> touched;
    if (!f.word_index) return touched;

    const int w = *f.word_index;
    if (w < 0) throw error(errc::unknown_word, "negative word index");
    ensure_words(static_cast<std::size_t>(w) + 1);
    const std::int64_t d = f.duration_us();
    WordState& ws = words_[static_cast<std::size_t>(w)];
    const bool first_ever = ws.count == 0;

    ws.tfd += d;
    ++ws.count;
    ws.min = first_ever ? d : std::min(ws.min, d);
    ws.max = first_ever ? d : std::max(ws.max, d);
    if (first_ever) {
      ws.first_start = f.start_us;
      ws.ffd = d;
    }
    touched.push_back(w);

    // Leaving an open first pass.
    if (open_fp_ && *open_fp_ != w) {
      WordState& prev = words_[static_cast<std::size_t>(*open_fp_)];
      prev.fp = FirstPass::closed;
      prev.fpr = w < *open_fp_;
      touched.push_back(*open_fp_);
      open_fp_.reset();
    }

    // Go-past windows close on any fixation further along the text.
    std::erase_if(windows_, [&](int u) {
      if (u < w) {
        touched.push_back(u);
        return true;
      }
      return false;
    });

    if (first_ever) {
      const bool valid = mode_ == FirstPassMode::first_visit || max_fixated_ < w;
      if (valid) {
        ws.fp = FirstPass::open;
        ws.fp_ffd = d;
        ws.fp_dur = 0;
        ws.fp_group = group_;
        ws.fpr = false;
        ws.rpd = 0;
        ws.srpd = 0;
        open_fp_ = w;
        windows_.push_back(w);
      } else {
        ws.fp = FirstPass::invalid;
      }
    }
    if (ws.fp == FirstPass::open) ws.fp_dur += d;

    for (int u : windows_) {
      WordState& us = words_[static_cast<std::size_t>(u)];
      us.rpd += d;
      if (u == w) us.srpd += d;
      touched.push_back(u);
    }

    max_fixated_ = std::max(max_fixated_, w);

    std::sort(touched.begin(), touched.end());
    touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
    return touched;
  }

  // Fills length, direction and amplitude, then stores the record.
  const Saccade& on_saccade(Saccade s) {
    if (s.start_pt && s.end_pt) {
      const double dx = s.end_pt->x - s.start_pt->x;
      const double dy = s.end_pt->y - s.start_pt->y;
      s.length_px = std::hypot(dx, dy);
      if (s.length_px > 0) {
        s.direction = {dx / s.length_px, dy / s.length_px};
        s.degenerate = false;
      } else {
        s.direction = {0.0, 0.0};
        s.degenerate = true;
      }
    } else {
      s.length_px = 0.0;
      s.direction = {0.0, 0.0};
      s.degenerate = true;
    }
    s.amplitude_deg = angle_deg(s.start_dir, s.end_dir);
    saccades_.push_back(s);
    return saccades_.back();
  }

  const std::vector<Saccade>& saccades() const { return saccades_; }

  WordMetrics word_metrics(int word_index) const {
    if (word_index < 0 || static_cast<std::size_t>(word_index) >= words_.size()) {
      throw error(errc::unknown_word, "word " + std::to_string(word_index));
    }
    const WordState& ws = words_[static_cast<std::size_t>(word_index)];
    WordMetrics m;
    m.word_index = word_index;
    m.tfd_us = ws.tfd;
    m.fixation_count = ws.count;
    if (ws.count > 0) {
      m.min_us = ws.min;
      m.max_us = ws.max;
      m.ffd_us = ws.ffd;
      if (origin_us_) m.tff_us = ws.first_start - *origin_us_;
      if (onset_us_) m.ttff_us = ws.first_start - *onset_us_;
    }
    if (ws.fp == FirstPass::open || ws.fp == FirstPass::closed) {
      m.fp_ffd_us = ws.fp_ffd;
      m.fp_duration_us = ws.fp_dur;
      m.fp_group = ws.fp_group;
      m.fp_regression = ws.fpr;
      m.rpd_us = ws.rpd;
      m.srpd_us = ws.srpd;
      m.rrd_us = ws.tfd - ws.fp_dur;
    } else {
      m.rrd_us = ws.tfd;
    }
    return m;
  }

  std::vector<WordMetrics> snapshot() const {
    std::vector<WordMetrics> out;
    out.reserve(words_.size());
    for (std::size_t i = 0; i < words_.size(); ++i) out.push_back(word_metrics(static_cast<int>(i)));
    return out;
  }

 private:
  enum class FirstPass { none, open, closed, invalid };

  struct WordState {
    std::int64_t tfd = 0;
    int count = 0;
    std::int64_t min = 0;
    std::int64_t max = 0;
    std::int64_t first_start = 0;
    std::int64_t ffd = 0;
    FirstPass fp = FirstPass::none;
    std::int64_t fp_ffd = 0;
    std::int64_t fp_dur = 0;
    int fp_group = 0;
    bool fpr = false;
    std::int64_t rpd = 0;
    std::int64_t srpd = 0;
  };

  FirstPassMode mode_;
  std::vector<WordState> words_;
  std::vector<Saccade> saccades_;
  std::vector<int> windows_;
  std::optional<int> open_fp_;
  std::optional<int> prev_word_;
  std::optional<std::int64_t> last_end_us_;
  std::optional<std::int64_t> origin_us_;
  std::optional<std::int64_t> onset_us_;
  int max_fixated_ = -1;
  int group_ = 0;
};

}  // namespace eyelive
