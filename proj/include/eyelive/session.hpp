#pragma once

// Per-session processing: viewport transform -> I-VT -> AOI mapping ->
// metrics, with an append-only JSON Lines record of everything needed to
// rebuild the metrics later.
//
// Session file records ("rec" field):
//   manifest   a layout manifest as received
//   viewport   a viewport state as received
//   fixation   a finalized, mapped fixation
//   saccade    a finalized, mapped saccade with its measures
//   flush      cadence marker: session metadata, config, changed metrics
//   end        session end

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "eyelive/aoi.hpp"
#include "eyelive/csv.hpp"
#include "eyelive/error.hpp"
#include "eyelive/ivt.hpp"
#include "eyelive/metrics.hpp"
#include "eyelive/model.hpp"
#include "eyelive/protocol.hpp"
#include "eyelive/serialize.hpp"

namespace eyelive {

struct FlushPolicy {
  std::int64_t interval_us = 5'000'000;
  bool flush_on_state_change = true;

  friend bool operator==(const FlushPolicy&, const FlushPolicy&) = default;
};

struct SessionConfig {
  IvtConfig ivt;
  FirstPassMode first_pass_mode = FirstPassMode::strict;
  ScreenModel screen;
  FlushPolicy flush;

  friend bool operator==(const SessionConfig&, const SessionConfig&) = default;
};

inline ojson config_fields(const SessionConfig& c) {
  ojson j = ojson::object();
  j["threshold_dps"] = c.ivt.threshold_dps;
  j["window_samples"] = c.ivt.window_samples;
  j["min_fixation_us"] = c.ivt.min_fixation_us;
  j["max_gap_us"] = c.ivt.max_gap_us;
  j["first_pass_mode"] = to_string(c.first_pass_mode);
  j["screen"] = {{"width_px", c.screen.width_px},
                 {"height_px", c.screen.height_px},
                 {"width_mm", c.screen.width_mm},
                 {"height_mm", c.screen.height_mm},
                 {"eye_distance_mm", c.screen.eye_distance_mm}};
  j["flush_interval_us"] = c.flush.interval_us;
  j["flush_on_state_change"] = c.flush.flush_on_state_change;
  return j;
}

template <class J>
SessionConfig config_from(const J& j) {
  using detail::get_as;
  SessionConfig c;
  c.ivt.threshold_dps = get_as<double>(j, "threshold_dps");
  c.ivt.window_samples = get_as<int>(j, "window_samples");
  c.ivt.min_fixation_us = get_as<std::int64_t>(j, "min_fixation_us");
  c.ivt.max_gap_us = get_as<std::int64_t>(j, "max_gap_us");
  c.first_pass_mode = parse_first_pass_mode(get_as<std::string>(j, "first_pass_mode"));
  const auto& s = detail::require(j, "screen");
  c.screen = {get_as<double>(s, "width_px"), get_as<double>(s, "height_px"), get_as<double>(s, "width_mm"),
              get_as<double>(s, "height_mm"), get_as<double>(s, "eye_distance_mm")};
  c.flush.interval_us = get_as<std::int64_t>(j, "flush_interval_us");
  c.flush.flush_on_state_change = get_as<bool>(j, "flush_on_state_change");
  return c;
}

// Destination of serialized session records. append() either stores the
// whole chunk or reports failure.
class RecordSink {
 public:
  virtual ~RecordSink() = default;
  virtual bool append(std::string_view chunk) = 0;
};

class FileSink : public RecordSink {
 public:
  explicit FileSink(std::filesystem::path path) : path_(std::move(path)) {}

  bool append(std::string_view chunk) override {
    std::ofstream os(path_, std::ios::binary | std::ios::app);
    if (!os) return false;
    os.write(chunk.data(), static_cast<std::streamsize>(chunk.size()));
    os.flush();
    return static_cast<bool>(os);
  }

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

class MemorySink : public RecordSink {
 public:
  bool append(std::string_view chunk) override {
    if (fail_next_ > 0) {
      --fail_next_;
      return false;
    }
    data_.append(chunk);
    ++writes_;
    return true;
  }
  const std::string& data() const { return data_; }
  int writes() const { return writes_; }
  void fail_next(int n) { fail_next_ = n; }

 private:
  std::string data_;
  int writes_ = 0;
  int fail_next_ = 0;
};

// Receives live output; the server's viewer hub implements it.
class SessionListener {
 public:
  virtual ~SessionListener() = default;
  // False when nobody is listening, so the session can skip building messages.
  virtual bool active() const = 0;
  virtual void on_fixation(const Fixation&) = 0;
  virtual void on_saccade(const Saccade&) = 0;
  virtual void on_metrics(const WordMetrics&) = 0;
};

struct SessionInfo {
  std::string session_id;
  std::string participant_id;
  std::string stimulus_url;
  std::optional<std::int64_t> start_us;
  std::optional<std::int64_t> onset_us;
  std::optional<std::int64_t> end_us;
};

struct SessionCounters {
  std::int64_t samples = 0;
  std::int64_t malformed = 0;
  std::int64_t unknown_types = 0;
  std::int64_t rejected_manifests = 0;
  std::int64_t flush_failures = 0;
};

using WallClock = std::function<std::int64_t()>;

inline std::int64_t steady_now_us() {
  return std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

class Session {
 public:
  // FlushClock::sample drives the flush cadence from sample timestamps, so
  // a replay at any speed writes the same file.
  enum class FlushClock { wall, sample };

  Session(SessionInfo info, SessionConfig cfg, std::unique_ptr<RecordSink> sink = nullptr,
          FlushClock flush_clock = FlushClock::wall, WallClock wall = {})
      : info_(std::move(info)),
        cfg_(cfg),
        classifier_(cfg.ivt, cfg.screen),
        metrics_(cfg.first_pass_mode),
        sink_(std::move(sink)),
        flush_clock_(flush_clock),
        wall_(wall ? std::move(wall) : WallClock(steady_now_us)) {
    if (!cfg_.screen.valid()) throw error(errc::parse_error, "screen model fields must be > 0");
    if (cfg_.flush.interval_us <= 0) throw error(errc::parse_error, "flush interval must be > 0");
    if (flush_clock_ == FlushClock::wall) last_flush_at_ = wall_();
  }

  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  void set_listener(SessionListener* l) { listener_ = l; }
  void set_metrics_csv_path(std::filesystem::path p) { csv_path_ = std::move(p); }

  const SessionInfo& info() const { return info_; }
  const SessionConfig& config() const { return cfg_; }
  const SessionCounters& counters() const { return counters_; }
  const std::vector<Fixation>& fixations() const { return fixations_; }
  const std::vector<Saccade>& saccades() const { return metrics_.saccades(); }
  const std::vector<LayoutManifest>& manifests() const { return manifests_; }
  const MetricsEngine& metrics() const { return metrics_; }
  const IvtClassifier& classifier() const { return classifier_; }
  bool ended() const { return ended_; }
  std::int64_t flush_count() const { return flush_seq_; }

  // Per-sample processing times in nanoseconds (gaze messages only).
  const std::vector<std::int64_t>& latencies_ns() const { return latencies_ns_; }

  // Parses and applies one wire message, timing gaze messages from parse
  // start to the end of metric updates. Returns the parsed message, or
  // nullopt if it was malformed.
  std::optional<proto::Message> ingest_text(std::string_view text) {
    const auto t0 = std::chrono::steady_clock::now();
    std::optional<proto::Message> msg;
    try {
      msg = proto::parse(text);
    } catch (const error&) {
      ++counters_.malformed;
      return std::nullopt;
    }
    ingest(*msg);
    if (std::holds_alternative<proto::Gaze>(*msg)) {
      latencies_ns_.push_back(
          std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - t0).count());
    }
    return msg;
  }

  void ingest(const proto::Message& msg) {
    std::visit(
        [&](const auto& m) {
          using T = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<T, proto::Gaze>) {
            on_sample(m.sample);
          } else if constexpr (std::is_same_v<T, proto::Layout>) {
            try {
              on_layout(m.manifest);
            } catch (const error&) {
              ++counters_.rejected_manifests;
            }
          } else if constexpr (std::is_same_v<T, proto::Viewport>) {
            on_viewport(m.state);
          } else if constexpr (std::is_same_v<T, proto::Tab>) {
            on_tab_state(m.state);
          } else if constexpr (std::is_same_v<T, proto::End>) {
            end();
          } else if constexpr (std::is_same_v<T, proto::Hello>) {
            // Handled by the connection layer.
          } else {
            ++counters_.unknown_types;
          }
        },
        msg);
  }

  void on_layout(LayoutManifest m) {
    ensure_open();
    mapper_.set_layout(m);  // validates
    metrics_.ensure_words(m.words.size());
    info_.stimulus_url = m.url;
    if (manifests_.empty()) onset_pending_ = true;
    manifests_.push_back(std::move(m));
    pending_.push_back(ManifestRec{manifests_.size() - 1});
  }

  void on_viewport(const ViewportState& v) {
    ensure_open();
    if (!(v.dpr > 0)) throw error(errc::parse_error, "dpr must be > 0");
    auto it = std::upper_bound(viewports_.begin(), viewports_.end(), v.t_us,
                               [](std::int64_t t, const ViewportState& s) { return t < s.t_us; });
    viewports_.insert(it, v);
    pending_.push_back(v);
  }

  void on_sample(const GazeSample& s) {
    ensure_open();
    ++counters_.samples;
    std::optional<Point> page;
    if (const ViewportState* vp = viewport_at(s.t_us)) page = screen_to_page({s.screen_x, s.screen_y}, *vp);
    events_.clear();
    const auto r = classifier_.classify(s, page, events_);
    if (r.status != IvtClassifier::Status::out_of_order) {
      last_sample_us_ = s.t_us;
      if (!info_.start_us) {
        info_.start_us = s.t_us;
        metrics_.set_session_start(s.t_us);
      }
      if (onset_pending_) {
        info_.onset_us = s.t_us;
        metrics_.set_stimulus_onset(s.t_us);
        onset_pending_ = false;
      }
    }
    handle_events();
    maybe_flush();
  }

  void on_tab_state(proto::TabState) {
    ensure_open();
    if (cfg_.flush.flush_on_state_change) flush();
  }

  // Timer entry point: flushes when the cadence interval has elapsed.
  void maybe_flush() {
    const auto now = now_us();
    if (!now) return;
    if (!last_flush_at_) last_flush_at_ = now;
    if (*now - *last_flush_at_ >= cfg_.flush.interval_us) flush();
  }

  // Writes everything not yet persisted plus a flush marker. Writes nothing
  // when nothing changed. On sink failure the data stays queued.
  void flush() {
    if (auto now = now_us()) last_flush_at_ = now;
    if (pending_.empty() && dirty_.empty()) return;
    if (!sink_) {
      pending_.clear();
      dirty_.clear();
      ++flush_seq_;
      return;
    }
    std::string chunk;
    for (const auto& rec : pending_) {
      chunk += record_line(rec);
      chunk += '\n';
    }
    ojson marker = ojson::object();
    marker["rec"] = "flush";
    marker["seq"] = flush_seq_;
    marker["t_us"] = last_sample_us_ ? ojson(*last_sample_us_) : ojson(nullptr);
    marker["session"] = info_fields();
    ojson changed = ojson::array();
    for (int w : dirty_) changed.push_back(metrics_fields(metrics_.word_metrics(w)));
    marker["metrics"] = std::move(changed);
    chunk += marker.dump();
    chunk += '\n';
    if (!sink_->append(chunk)) {
      ++counters_.flush_failures;
      return;
    }
    pending_.clear();
    dirty_.clear();
    ++flush_seq_;
  }

  // Flushes pending classifier state, persists, and writes the metrics CSV.
  // A second call does nothing.
  void end() {
    if (ended_) return;
    events_.clear();
    classifier_.finalize_stream(events_);
    handle_events();
    info_.end_us = last_sample_us_ ? *last_sample_us_ : info_.start_us.value_or(0);
    flush();
    ojson endrec = ojson::object();
    endrec["rec"] = "end";
    endrec["end_us"] = *info_.end_us;
    if (sink_ && !sink_->append(endrec.dump() + "\n")) ++counters_.flush_failures;
    ended_ = true;
    if (csv_path_) {
      std::ofstream os(*csv_path_, std::ios::binary | std::ios::trunc);
      export_metrics_csv(os);
      if (!os) throw error(errc::io_error, "cannot write " + csv_path_->string());
    }
  }

  void export_metrics_csv(std::ostream& os) const {
    const auto rows = metrics_.snapshot();
    write_metrics_csv(os, rows, word_labels(manifests_, rows.size()));
  }

  std::string metrics_csv() const {
    std::ostringstream os;
    export_metrics_csv(os);
    return os.str();
  }

  proto::Snapshot snapshot() const {
    proto::Snapshot s;
    if (!manifests_.empty()) s.manifest = manifests_.back();
    s.metrics = metrics_.snapshot();
    return s;
  }

  ojson info_fields() const {
    ojson j = ojson::object();
    j["session_id"] = info_.session_id;
    j["participant_id"] = info_.participant_id;
    j["stimulus_url"] = info_.stimulus_url;
    j["start_us"] = detail::opt_j(info_.start_us);
    j["onset_us"] = detail::opt_j(info_.onset_us);
    j["config"] = config_fields(cfg_);
    return j;
  }

 private:
  struct ManifestRec {
    std::size_t index;
  };
  struct FixationRec {
    std::size_t index;
  };
  struct SaccadeRec {
    std::size_t index;
  };
  using PendingRecord = std::variant<ManifestRec, ViewportState, FixationRec, SaccadeRec>;

  std::optional<std::int64_t> now_us() const {
    if (flush_clock_ == FlushClock::sample) return last_sample_us_;
    return wall_();
  }

  void ensure_open() const {
    if (ended_) throw error(errc::session_closed, "session " + info_.session_id + " has ended");
  }

  const ViewportState* viewport_at(std::int64_t t) const {
    auto it = std::upper_bound(viewports_.begin(), viewports_.end(), t,
                               [](std::int64_t tt, const ViewportState& s) { return tt < s.t_us; });
    if (it == viewports_.begin()) return viewports_.empty() ? nullptr : &viewports_.front();
    return &*std::prev(it);
  }

  void handle_events() {
    for (auto& ev : events_) {
      if (auto* f = std::get_if<Fixation>(&ev)) {
        mapper_.map_fixation(*f);
        const auto touched = metrics_.on_fixation(*f);
        fixations_.push_back(*f);
        pending_.push_back(FixationRec{fixations_.size() - 1});
        dirty_.insert(touched.begin(), touched.end());
        if (listener_ && listener_->active()) {
          listener_->on_fixation(*f);
          for (int w : touched) listener_->on_metrics(metrics_.word_metrics(w));
        }
      } else {
        auto& s = std::get<Saccade>(ev);
        mapper_.map_saccade(s);
        const Saccade& stored = metrics_.on_saccade(s);
        pending_.push_back(SaccadeRec{metrics_.saccades().size() - 1});
        if (listener_ && listener_->active()) listener_->on_saccade(stored);
      }
    }
    events_.clear();
  }

  std::string record_line(const PendingRecord& rec) const {
    return std::visit(
        [&](const auto& r) {
          using T = std::decay_t<decltype(r)>;
          ojson j = ojson::object();
          if constexpr (std::is_same_v<T, ManifestRec>) {
            j["rec"] = "manifest";
            j["manifest"] = manifest_fields(manifests_[r.index]);
          } else if constexpr (std::is_same_v<T, ViewportState>) {
            j["rec"] = "viewport";
            j.update(viewport_fields(r));
          } else if constexpr (std::is_same_v<T, FixationRec>) {
            j["rec"] = "fixation";
            j.update(fixation_fields(fixations_[r.index]));
          } else {
            j["rec"] = "saccade";
            j.update(saccade_fields(metrics_.saccades()[r.index]));
          }
          return j.dump();
        },
        rec);
  }

  SessionInfo info_;
  SessionConfig cfg_;
  IvtClassifier classifier_;
  AoiMapper mapper_;
  MetricsEngine metrics_;
  std::unique_ptr<RecordSink> sink_;
  FlushClock flush_clock_;
  WallClock wall_;
  SessionListener* listener_ = nullptr;
  std::optional<std::filesystem::path> csv_path_;

  std::vector<LayoutManifest> manifests_;
  std::vector<ViewportState> viewports_;
  std::vector<Fixation> fixations_;
  std::vector<GazeEvent> events_;
  std::vector<PendingRecord> pending_;
  std::set<int> dirty_;
  std::vector<std::int64_t> latencies_ns_;
  SessionCounters counters_;

  std::optional<std::int64_t> last_sample_us_;
  std::optional<std::int64_t> last_flush_at_;
  std::int64_t flush_seq_ = 0;
  bool onset_pending_ = false;
  bool ended_ = false;
};

// ---- reload -------------------------------------------------------------------

struct LoadedSession {
  SessionInfo info;
  std::optional<SessionConfig> config;
  std::vector<LayoutManifest> manifests;
  std::vector<ViewportState> viewports;
  std::vector<Fixation> fixations;
  std::vector<Saccade> saccades;
  bool ended = false;
  // Lines that failed to parse; a torn final line after a crash lands here.
  std::int64_t bad_lines = 0;
};

inline LoadedSession load_session(std::istream& is) {
  LoadedSession s;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      ++s.bad_lines;
      continue;
    }
    try {
      const auto rec = detail::get_as<std::string>(j, "rec");
      if (rec == "manifest") {
        s.manifests.push_back(manifest_from(detail::require(j, "manifest")));
      } else if (rec == "viewport") {
        s.viewports.push_back(viewport_from(j));
      } else if (rec == "fixation") {
        s.fixations.push_back(fixation_from(j));
      } else if (rec == "saccade") {
        s.saccades.push_back(saccade_from(j));
      } else if (rec == "flush") {
        const auto& meta = detail::require(j, "session");
        s.info.session_id = detail::get_as<std::string>(meta, "session_id");
        s.info.participant_id = detail::get_as<std::string>(meta, "participant_id");
        s.info.stimulus_url = detail::get_as<std::string>(meta, "stimulus_url");
        s.info.start_us = detail::get_opt<std::int64_t>(meta, "start_us");
        s.info.onset_us = detail::get_opt<std::int64_t>(meta, "onset_us");
        s.config = config_from(detail::require(meta, "config"));
      } else if (rec == "end") {
        s.info.end_us = detail::get_as<std::int64_t>(j, "end_us");
        s.ended = true;
      } else {
        ++s.bad_lines;
      }
    } catch (const error&) {
      ++s.bad_lines;
    }
  }
  return s;
}

inline LoadedSession load_session_file(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw error(errc::io_error, "cannot open " + p.string());
  return load_session(is);
}

// Rebuilds the metrics of a loaded session from its recorded fixations.
inline MetricsEngine rebuild_metrics(const LoadedSession& s) {
  MetricsEngine m(s.config ? s.config->first_pass_mode : FirstPassMode::strict);
  if (s.info.start_us) m.set_session_start(*s.info.start_us);
  if (s.info.onset_us) m.set_stimulus_onset(*s.info.onset_us);
  for (const auto& lm : s.manifests) m.ensure_words(lm.words.size());
  for (auto f : s.fixations) m.on_fixation(f);
  return m;
}

inline void export_metrics_csv(std::ostream& os, const LoadedSession& s) {
  const auto rows = rebuild_metrics(s).snapshot();
  write_metrics_csv(os, rows, word_labels(s.manifests, rows.size()));
}

}  // namespace eyelive
