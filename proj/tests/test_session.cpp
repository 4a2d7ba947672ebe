#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "eyelive/replay.hpp"
#include "eyelive/session.hpp"
#include "eyelive/simulate.hpp"
#include "helpers.hpp"

using namespace eyelive;

namespace {

struct Harness {
  MemorySink* sink = nullptr;
  std::unique_ptr<Session> session;

  explicit Harness(SessionConfig cfg = {}, Session::FlushClock clock = Session::FlushClock::sample) {
    auto s = std::make_unique<MemorySink>();
    sink = s.get();
    session = std::make_unique<Session>(SessionInfo{"S1", "P1", "", {}, {}, {}}, cfg, std::move(s), clock);
  }
};

GazeSample screen_sample(std::int64_t t, double x, double y) {
  GazeSample g;
  g.t_us = t;
  g.screen_x = x;
  g.screen_y = y;
  return g;
}

int count_recs(const std::string& data, const std::string& rec) {
  int n = 0;
  std::istringstream is(data);
  std::string line;
  while (std::getline(is, line)) n += line.find("{\"rec\":\"" + rec + "\"") == 0;
  return n;
}

LayoutManifest page() { return sim::layout_from_text(sim::filler_text(60, 3, 5)); }

// Layout plus an identity viewport.
void open_page(Session& s, const LayoutManifest& m = test::ab_manifest()) {
  s.ingest(proto::Layout{m});
  s.ingest(proto::Viewport{ViewportState{0, 0, 0, 0, 0, 1}});
}

}  // namespace

TEST(Session, EmptySessionExportsHeaderOnly) {
  Harness h;
  h.session->end();
  EXPECT_TRUE(h.session->fixations().empty());
  EXPECT_EQ(h.session->metrics_csv(),
            "word_index,text,char_index,sentence_index,TFD,AFD,MiFD,MaFD,F_count,TFF_ts,TTFF,FFD,FpFFD,Fp_group,FpR,"
            "FpD,RPD,sRPD,RRD\n");
  EXPECT_EQ(count_recs(h.sink->data(), "end"), 1);
}

TEST(Session, LayoutAndStationaryGazeGivesOneFixation) {
  Harness h;
  open_page(*h.session);
  for (int k = 0; k < 60; ++k) h.session->ingest(proto::Gaze{screen_sample(test::t300(k), 120, 110)});
  h.session->end();
  ASSERT_EQ(h.session->fixations().size(), 1u);
  EXPECT_EQ(h.session->fixations()[0].word_index, 0);
  EXPECT_EQ(count_recs(h.sink->data(), "fixation"), 1);
  const auto loaded = [&] {
    std::istringstream is(h.sink->data());
    return load_session(is);
  }();
  ASSERT_EQ(loaded.fixations.size(), 1u);
  EXPECT_EQ(loaded.fixations[0], h.session->fixations()[0]);
}

TEST(Session, FlushIsIdempotent) {
  Harness h;
  h.session->ingest(proto::Layout{test::ab_manifest()});
  h.session->flush();
  const auto writes = h.sink->writes();
  const auto bytes = h.sink->data().size();
  h.session->flush();
  EXPECT_EQ(h.sink->writes(), writes);
  EXPECT_EQ(h.sink->data().size(), bytes);
}

TEST(Session, TabStateTriggersFlush) {
  Harness h;
  h.session->ingest(proto::Layout{test::ab_manifest()});
  EXPECT_EQ(h.sink->writes(), 0);
  h.session->ingest(proto::Tab{proto::TabState::hidden});
  EXPECT_EQ(h.sink->writes(), 1);
  EXPECT_EQ(count_recs(h.sink->data(), "manifest"), 1);
}

TEST(Session, TabStateFlushCanBeDisabled) {
  SessionConfig cfg;
  cfg.flush.flush_on_state_change = false;
  Harness h(cfg);
  h.session->ingest(proto::Layout{test::ab_manifest()});
  h.session->ingest(proto::Tab{proto::TabState::closed});
  EXPECT_EQ(h.sink->writes(), 0);
}

TEST(Session, FailedWriteIsRetriedWithoutDuplicates) {
  Harness h;
  h.session->ingest(proto::Layout{test::ab_manifest()});
  for (int k = 0; k < 60; ++k) h.session->ingest(proto::Gaze{screen_sample(test::t300(k), 120, 110)});
  for (int k = 60; k < 63; ++k) h.session->ingest(proto::Gaze{screen_sample(test::t300(k), 120 + (k - 59) * 20, 110)});
  h.sink->fail_next(1);
  h.session->flush();
  EXPECT_EQ(h.sink->writes(), 0);
  EXPECT_EQ(h.session->counters().flush_failures, 1);
  h.session->flush();
  EXPECT_EQ(h.sink->writes(), 1);
  EXPECT_EQ(count_recs(h.sink->data(), "manifest"), 1);
  EXPECT_EQ(count_recs(h.sink->data(), "fixation"), 1);
  h.session->end();
  EXPECT_EQ(count_recs(h.sink->data(), "fixation"), static_cast<int>(h.session->fixations().size()));
  EXPECT_EQ(count_recs(h.sink->data(), "saccade"), static_cast<int>(h.session->saccades().size()));
}

TEST(Session, CadenceFollowsSampleClock) {
  Harness h;
  h.session->ingest(proto::Layout{test::ab_manifest()});
  // 12 s of gaze at 300 Hz, hopping every second so each interval has new
  // fixations: flushes at 5 s and 10 s, one more at end.
  for (int k = 0; k < 3600; ++k) {
    h.session->ingest(proto::Gaze{screen_sample(test::t300(k), (k / 300) % 2 ? 180 : 120, 110)});
  }
  EXPECT_EQ(h.session->flush_count(), 2);
  h.session->end();
  EXPECT_EQ(count_recs(h.sink->data(), "flush"), 3);
}

TEST(Session, WallClockCadence) {
  std::int64_t now = 0;
  auto sink = std::make_unique<MemorySink>();
  auto* raw = sink.get();
  Session s({"S", "P", "", {}, {}, {}}, {}, std::move(sink), Session::FlushClock::wall, [&] { return now; });
  s.ingest(proto::Layout{test::ab_manifest()});
  now = 4'999'999;
  s.maybe_flush();
  EXPECT_EQ(raw->writes(), 0);
  now = 5'000'000;
  s.maybe_flush();
  EXPECT_EQ(raw->writes(), 1);
}

TEST(Session, DoubleEndIsNoOp) {
  Harness h;
  h.session->ingest(proto::Layout{test::ab_manifest()});
  for (int k = 0; k < 30; ++k) h.session->ingest(proto::Gaze{screen_sample(test::t300(k), 120, 110)});
  h.session->end();
  const auto data = h.sink->data();
  const auto csv = h.session->metrics_csv();
  h.session->end();
  h.session->ingest(proto::End{});
  EXPECT_EQ(h.sink->data(), data);
  EXPECT_EQ(h.session->metrics_csv(), csv);
}

TEST(Session, PendingFixationIncludedAtEnd) {
  Harness h;
  open_page(*h.session);
  for (int k = 0; k < 30; ++k) h.session->ingest(proto::Gaze{screen_sample(test::t300(k), 180, 110)});
  EXPECT_TRUE(h.session->fixations().empty());
  h.session->end();
  ASSERT_EQ(h.session->fixations().size(), 1u);
  EXPECT_EQ(h.session->metrics().word_metrics(1).fixation_count, 1);
}

TEST(Session, ClosedSessionRejectsInput) {
  Harness h;
  h.session->end();
  try {
    h.session->ingest(proto::Gaze{screen_sample(1, 1, 1)});
    FAIL();
  } catch (const error& e) {
    EXPECT_EQ(e.code(), errc::session_closed);
  }
}

TEST(Session, MalformedAndUnknownMessagesCounted) {
  Harness h;
  EXPECT_FALSE(h.session->ingest_text("{nope"));
  EXPECT_TRUE(h.session->ingest_text(R"({"type":"telemetry"})"));
  EXPECT_EQ(h.session->counters().malformed, 1);
  EXPECT_EQ(h.session->counters().unknown_types, 1);
  auto bad = test::ab_manifest();
  bad.words[0].paragraph_id = 7;
  h.session->ingest(proto::Layout{bad});
  EXPECT_EQ(h.session->counters().rejected_manifests, 1);
  EXPECT_TRUE(h.session->manifests().empty());
}

TEST(Session, ViewportTransformApplied) {
  Harness h;
  h.session->ingest(proto::Layout{test::ab_manifest()});
  // The page is scrolled by 400; word A sits at screen y 110 - 400 + 50 offset.
  h.session->ingest(proto::Viewport{ViewportState{0, 0, 50, 0, 400, 1}});
  for (int k = 0; k < 30; ++k) h.session->ingest(proto::Gaze{screen_sample(test::t300(k), 120, 110 - 400 + 50)});
  h.session->end();
  ASSERT_EQ(h.session->fixations().size(), 1u);
  EXPECT_EQ(h.session->fixations()[0].centroid, (Point{120, 110}));
  EXPECT_EQ(h.session->fixations()[0].word_index, 0);
}

TEST(Session, NoViewportMeansUnmapped) {
  Harness h;
  h.session->ingest(proto::Layout{test::ab_manifest()});
  for (int k = 0; k < 30; ++k) h.session->ingest(proto::Gaze{screen_sample(test::t300(k), 120, 110)});
  h.session->end();
  ASSERT_EQ(h.session->fixations().size(), 1u);
  EXPECT_EQ(h.session->fixations()[0].centroid, std::nullopt);
  EXPECT_EQ(h.session->fixations()[0].word_index, std::nullopt);
}

TEST(Session, EarlySamplesUseFirstViewport) {
  Harness h;
  h.session->ingest(proto::Layout{test::ab_manifest()});
  h.session->ingest(proto::Viewport{ViewportState{50'000, 0, 0, 0, 0, 1}});
  for (int k = 0; k < 30; ++k) h.session->ingest(proto::Gaze{screen_sample(test::t300(k), 120, 110)});
  h.session->end();
  EXPECT_EQ(h.session->fixations()[0].word_index, 0);
}

TEST(Session, LatencyRecordedPerGazeMessage) {
  Harness h;
  h.session->ingest_text(proto::serialize(proto::Layout{test::ab_manifest()}));
  for (int k = 0; k < 100; ++k) h.session->ingest_text(proto::serialize(proto::Gaze{screen_sample(test::t300(k), 1, 1)}));
  EXPECT_EQ(h.session->latencies_ns().size(), 100u);
}

TEST(Session, StimulusOnsetIsFirstSampleAfterLayout) {
  Harness h;
  h.session->ingest(proto::Gaze{screen_sample(1000, 1, 1)});
  h.session->ingest(proto::Gaze{screen_sample(2000, 1, 1)});
  h.session->ingest(proto::Layout{test::ab_manifest()});
  h.session->ingest(proto::Gaze{screen_sample(3000, 1, 1)});
  EXPECT_EQ(h.session->info().start_us, 1000);
  EXPECT_EQ(h.session->info().onset_us, 3000);
}

namespace {

struct Recorder : SessionListener {
  bool on = true;
  std::vector<std::string> log;
  bool active() const override { return on; }
  void on_fixation(const Fixation& f) override { log.push_back("F" + std::to_string(f.word_index.value_or(-1))); }
  void on_saccade(const Saccade&) override { log.push_back("S"); }
  void on_metrics(const WordMetrics& m) override { log.push_back("M" + std::to_string(m.word_index)); }
};

}  // namespace

TEST(Session, ListenerSeesEventsThenMetrics) {
  Harness h;
  Recorder r;
  h.session->set_listener(&r);
  h.session->ingest(proto::Layout{test::ab_manifest()});
  h.session->ingest(proto::Viewport{ViewportState{0, 0, 0, 0, 0, 1}});
  int k = 0;
  for (int i = 0; i < 30; ++i) h.session->ingest(proto::Gaze{screen_sample(test::t300(k++), 125, 110)});
  for (int i = 1; i <= 2; ++i) h.session->ingest(proto::Gaze{screen_sample(test::t300(k++), 125 + 20 * i, 110)});
  for (int i = 0; i < 30; ++i) h.session->ingest(proto::Gaze{screen_sample(test::t300(k++), 185, 110)});
  h.session->end();
  EXPECT_EQ(r.log, (std::vector<std::string>{"F0", "M0", "S", "F1", "M0", "M1"}));
}

TEST(Session, ReloadReexportIsByteIdentical) {
  const auto m = page();
  sim::ReadingProfile p;
  p.p_regress = 0.3;
  p.p_skip = 0.2;
  p.noise_px = 2;
  p.seed = 9;
  const auto simu = sim::simulate(m, p);
  auto sink = std::make_unique<MemorySink>();
  auto* raw = sink.get();
  const auto s = run_offline(replay_messages({m, simu.log, {}, "R", "P"}), {}, std::move(sink));
  std::istringstream is(raw->data());
  const auto loaded = load_session(is);
  EXPECT_TRUE(loaded.ended);
  EXPECT_EQ(loaded.bad_lines, 0);
  EXPECT_EQ(loaded.fixations, s->fixations());
  EXPECT_EQ(loaded.saccades, s->saccades());
  EXPECT_EQ(loaded.config, s->config());
  std::ostringstream os;
  export_metrics_csv(os, loaded);
  EXPECT_EQ(os.str(), s->metrics_csv());
  EXPECT_GT(s->fixations().size(), 40u);
}

TEST(Session, CrashLosesAtMostOneInterval) {
  const auto m = page();
  sim::ReadingProfile p;
  p.seed = 3;
  const auto simu = sim::simulate(m, p);
  const auto msgs = replay_messages({m, simu.log, {}, "K", "P"});
  std::size_t persisted_total = 0;
  for (std::size_t kill : {msgs.size() / 3, msgs.size() / 2, msgs.size() - 10}) {
    auto sink = std::make_unique<MemorySink>();
    auto* raw = sink.get();
    Session s({"K", "P", "", {}, {}, {}}, {}, std::move(sink), Session::FlushClock::sample);
    std::int64_t last_t = 0;
    for (std::size_t i = 1; i < kill; ++i) {
      if (auto msg = s.ingest_text(msgs[i].text); msg && std::holds_alternative<proto::Gaze>(*msg)) {
        last_t = std::get<proto::Gaze>(*msg).sample.t_us;
      }
    }
    // Torn final write.
    std::string data = raw->data() + R"({"rec":"fixation","start_us":)";
    std::istringstream is(data);
    const auto loaded = load_session(is);
    EXPECT_EQ(loaded.bad_lines, 1);
    // An unpersisted fixation was finalized after the last flush, which
    // happened less than 5 s of sample time before the kill. Finalization
    // comes one sample after the fixation's last sample.
    for (const auto& f : s.fixations()) {
      const bool persisted = std::find(loaded.fixations.begin(), loaded.fixations.end(), f) != loaded.fixations.end();
      if (!persisted) EXPECT_GE(f.end_us + 3334, last_t - 5'000'000);
    }
    ASSERT_LE(loaded.fixations.size(), s.fixations().size());
    EXPECT_TRUE(std::equal(loaded.fixations.begin(), loaded.fixations.end(), s.fixations().begin()));
    persisted_total += loaded.fixations.size();
  }
  EXPECT_GT(persisted_total, 0u);
}

TEST(Session, FileSinkAndCsvPath) {
  const auto dir = test::temp_dir("session");
  auto sink = std::make_unique<FileSink>(dir / "S.jsonl");
  Session s({"S", "P", "", {}, {}, {}}, {}, std::move(sink));
  s.set_metrics_csv_path(dir / "S.metrics.csv");
  s.ingest(proto::Layout{test::ab_manifest()});
  for (int k = 0; k < 30; ++k) s.ingest(proto::Gaze{screen_sample(test::t300(k), 120, 110)});
  s.end();
  std::ifstream csv(dir / "S.metrics.csv");
  std::stringstream buf;
  buf << csv.rdbuf();
  EXPECT_EQ(buf.str(), s.metrics_csv());
  const auto loaded = load_session_file(dir / "S.jsonl");
  EXPECT_TRUE(loaded.ended);
  EXPECT_EQ(loaded.info.session_id, "S");
  std::filesystem::remove_all(dir);
}
