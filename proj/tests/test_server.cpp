#include <gtest/gtest.h>

#include <fstream>
#include <sstream>
#include <thread>

#include "eyelive/bench.hpp"
#include "eyelive/replay.hpp"
#include "eyelive/server.hpp"
#include "eyelive/simulate.hpp"
#include "helpers.hpp"
#include "ws_client.hpp"

using namespace eyelive;
using namespace std::chrono_literals;

namespace {

template <class F>
bool wait_for(F pred, std::chrono::milliseconds timeout = 5s) {
  const auto end = std::chrono::steady_clock::now() + timeout;
  while (std::chrono::steady_clock::now() < end) {
    if (pred()) return true;
    std::this_thread::sleep_for(2ms);
  }
  return pred();
}

bool session_ended(Server& srv, const std::string& id) {
  auto e = srv.session(id);
  if (!e) return false;
  std::lock_guard lk(e->mu);
  return e->session && e->session->ended();
}

std::int64_t samples_seen(Server& srv, const std::string& id) {
  auto e = srv.session(id);
  if (!e) return 0;
  std::lock_guard lk(e->mu);
  return e->session ? e->session->counters().samples : 0;
}

GazeSample at(std::int64_t t, double x, double y) {
  GazeSample g;
  g.t_us = t;
  g.screen_x = x;
  g.screen_y = y;
  return g;
}

// Fixation on A, then on B, then end.
void read_ab(test::WsClient& c, int from = 0, int to = 120) {
  for (int k = from; k < to; ++k) c.send(proto::Gaze{at(test::t300(k), k < 60 ? 120 : 180, 110)});
}

void open(test::WsClient& c, const std::string& session) {
  c.send(proto::Hello{proto::Role::source, session, "P"});
  c.send(proto::Layout{test::ab_manifest()});
  c.send(proto::Viewport{ViewportState{0, 0, 0, 0, 0, 1}});
}

class FakeOutbox : public Outbox {
 public:
  explicit FakeOutbox(std::size_t cap) : cap_(cap) {}
  bool push(std::shared_ptr<const std::string> t) override {
    if (got.size() >= cap_) return false;
    got.push_back(*t);
    return true;
  }
  void disconnect() override { disconnected = true; }
  std::vector<std::string> got;
  bool disconnected = false;

 private:
  std::size_t cap_;
};

}  // namespace

TEST(ViewerHub, InactiveWithoutViewers) {
  ViewerHub hub;
  EXPECT_FALSE(hub.active());
  hub.on_fixation(Fixation{});  // no-op
  EXPECT_EQ(hub.dropped(), 0);
}

TEST(ViewerHub, FullViewerIsDroppedOthersKeepReceiving) {
  ViewerHub hub;
  auto slow = std::make_shared<FakeOutbox>(2);
  auto fast = std::make_shared<FakeOutbox>(100);
  hub.add(slow, "snap");
  hub.add(fast, "snap");
  for (int i = 0; i < 5; ++i) {
    Fixation f;
    f.start_us = i;
    hub.on_fixation(f);
  }
  EXPECT_TRUE(slow->disconnected);
  EXPECT_EQ(slow->got.size(), 2u);
  EXPECT_FALSE(fast->disconnected);
  EXPECT_EQ(fast->got.size(), 6u);
  EXPECT_EQ(hub.size(), 1u);
  EXPECT_EQ(hub.dropped(), 1);
  // Emission order preserved.
  for (int i = 0; i < 5; ++i) {
    const auto m = proto::parse(fast->got[static_cast<std::size_t>(i) + 1]);
    EXPECT_EQ(std::get<proto::FixationEnd>(m).fixation.start_us, i);
  }
}

TEST(ViewerHub, LaneKeepsJoinOrder) {
  boost::asio::io_context lane;
  ViewerHub hub(lane.get_executor());
  auto early = std::make_shared<FakeOutbox>(100);
  hub.add(early, "snap");
  Fixation f;
  f.start_us = 1;
  hub.on_fixation(f);
  auto late = std::make_shared<FakeOutbox>(100);
  hub.add(late, "snap");  // its snapshot already covers the first fixation
  f.start_us = 2;
  hub.on_fixation(f);
  auto gone = std::make_shared<FakeOutbox>(100);
  hub.add(gone, "snap");
  hub.remove(gone.get());
  EXPECT_TRUE(early->got.empty());  // nothing runs on the ingest side
  lane.run();
  ASSERT_EQ(early->got.size(), 3u);
  ASSERT_EQ(late->got.size(), 2u);
  EXPECT_EQ(late->got[0], "snap");
  EXPECT_EQ(std::get<proto::FixationEnd>(proto::parse(late->got[1])).fixation.start_us, 2);
  EXPECT_TRUE(gone->got.empty());
  EXPECT_EQ(hub.size(), 2u);
}

TEST(ViewerHub, LaneOverflowDropsEveryViewer) {
  boost::asio::io_context lane;
  ViewerHub hub(lane.get_executor(), 4);
  auto v = std::make_shared<FakeOutbox>(100);
  hub.add(v, "snap");
  for (int i = 0; i < 10; ++i) hub.on_fixation(Fixation{});
  lane.run();
  EXPECT_TRUE(v->disconnected);
  EXPECT_EQ(hub.size(), 0u);
  EXPECT_EQ(hub.dropped(), 1);
}

TEST(Server, RoutesSourceToSession) {
  Server srv({});
  const auto port = srv.start();
  test::WsClient c(port);
  open(c, "S");
  read_ab(c);
  c.send(proto::End{});
  ASSERT_TRUE(wait_for([&] { return session_ended(srv, "S"); }));
  auto e = srv.session("S");
  std::lock_guard lk(e->mu);
  EXPECT_EQ(e->session->counters().samples, 120);
  ASSERT_EQ(e->session->fixations().size(), 2u);
  EXPECT_EQ(e->session->fixations()[0].word_index, 0);
  EXPECT_EQ(e->session->fixations()[1].word_index, 1);
  EXPECT_EQ(e->session->info().participant_id, "P");
}

TEST(Server, SecondSourceRefused) {
  Server srv({});
  const auto port = srv.start();
  test::WsClient a(port);
  open(a, "S");
  ASSERT_TRUE(wait_for([&] { return srv.session("S") != nullptr; }));
  a.send(proto::Gaze{at(0, 120, 110)});
  ASSERT_TRUE(wait_for([&] { return samples_seen(srv, "S") == 1; }));
  test::WsClient b(port);
  b.send(proto::Hello{proto::Role::source, "S", "P2"});
  const auto reply = b.recv_msg();
  ASSERT_TRUE(reply);
  ASSERT_TRUE(std::holds_alternative<proto::Error>(*reply));
  EXPECT_FALSE(b.recv());  // then closed
  EXPECT_EQ(srv.counters().refused, 1);
  // The first source is unaffected.
  read_ab(a, 1, 120);
  ASSERT_TRUE(wait_for([&] { return samples_seen(srv, "S") == 120; }));
}

TEST(Server, NewSourceAfterEndRefused) {
  Server srv({});
  const auto port = srv.start();
  {
    test::WsClient a(port);
    open(a, "S");
    a.send(proto::End{});
    a.close();
  }
  ASSERT_TRUE(wait_for([&] { return session_ended(srv, "S"); }));
  test::WsClient b(port);
  b.send(proto::Hello{proto::Role::source, "S", "P"});
  const auto reply = b.recv_msg();
  ASSERT_TRUE(reply);
  EXPECT_TRUE(std::holds_alternative<proto::Error>(*reply));
}

TEST(Server, BadHelloRefused) {
  Server srv({});
  const auto port = srv.start();
  for (const std::string first :
       {std::string(R"({"type":"gaze","t_us":1,"sx":1,"sy":1,"valid":true})"), std::string("not json"),
        proto::serialize(proto::Hello{proto::Role::source, "../etc", "P"}),
        proto::serialize(proto::Hello{proto::Role::viewer, "", "P"})}) {
    test::WsClient c(port);
    c.send(first);
    const auto reply = c.recv_msg();
    ASSERT_TRUE(reply) << first;
    EXPECT_TRUE(std::holds_alternative<proto::Error>(*reply)) << first;
  }
  EXPECT_EQ(srv.counters().refused, 4);
  EXPECT_TRUE(srv.session_ids().empty());
}

TEST(Server, EmptySessionIdIsAssigned) {
  Server srv({});
  const auto port = srv.start();
  test::WsClient c(port);
  c.send(proto::Hello{proto::Role::source, "", "P"});
  ASSERT_TRUE(wait_for([&] { return srv.session_ids().size() == 1; }));
  EXPECT_EQ(srv.session_ids()[0], "s1");
}

TEST(Server, ViewerReceivesEveryEventInOrder) {
  Server srv({});
  const auto port = srv.start();
  test::WsClient v(port);
  v.send(proto::Hello{proto::Role::viewer, "S", "V"});
  const auto snap = v.recv_msg();
  ASSERT_TRUE(snap);
  ASSERT_TRUE(std::holds_alternative<proto::Snapshot>(*snap));
  EXPECT_FALSE(std::get<proto::Snapshot>(*snap).manifest);

  test::WsClient c(port);
  open(c, "S");
  read_ab(c);
  c.send(proto::End{});
  ASSERT_TRUE(wait_for([&] { return session_ended(srv, "S"); }));

  std::vector<Fixation> fixations;
  std::vector<Saccade> saccades;
  std::vector<WordMetrics> updates;
  std::vector<char> kinds;
  // Everything is queued once the session has ended; drain until quiet.
  while (auto m = v.recv_msg(500ms)) {
    if (auto* f = std::get_if<proto::FixationEnd>(&*m)) fixations.push_back(f->fixation), kinds.push_back('F');
    if (auto* s = std::get_if<proto::SaccadeEvent>(&*m)) saccades.push_back(s->saccade), kinds.push_back('S');
    if (auto* u = std::get_if<proto::MetricsUpdate>(&*m)) updates.push_back(u->metrics), kinds.push_back('M');
  }
  auto e = srv.session("S");
  std::lock_guard lk(e->mu);
  EXPECT_EQ(fixations, e->session->fixations());
  EXPECT_EQ(saccades, e->session->saccades());
  // The fixation on B also closes A's regression path.
  EXPECT_EQ((std::vector<char>{'F', 'M', 'S', 'F', 'M', 'M'}), kinds);
  ASSERT_EQ(updates.size(), 3u);
  EXPECT_EQ(updates[2].word_index, 1);
  EXPECT_EQ(updates[2].tfd_us, e->session->metrics().word_metrics(1).tfd_us);
  EXPECT_EQ(updates[1], e->session->metrics().word_metrics(0));
}

TEST(Server, LateViewerGetsSnapshotThenStream) {
  const auto m = sim::layout_from_text(sim::filler_text(80, 3, 9));
  sim::ReadingProfile p;
  p.seed = 9;
  p.p_regress = 0.2;
  const auto msgs = replay_messages({m, sim::simulate(m, p).log, {}, "S", "P"});
  const auto half = msgs.size() / 2;

  Server srv({});
  const auto port = srv.start();
  test::WsClient c(port);
  for (std::size_t i = 0; i < half; ++i) c.send(msgs[i].text);
  ASSERT_TRUE(wait_for([&] { return samples_seen(srv, "S") == static_cast<std::int64_t>(half) - 3; }));

  test::WsClient v(port);
  v.send(proto::Hello{proto::Role::viewer, "S", "V"});
  const auto first = v.recv_msg();
  ASSERT_TRUE(first);
  ASSERT_TRUE(std::holds_alternative<proto::Snapshot>(*first));
  auto state = std::get<proto::Snapshot>(*first);
  ASSERT_TRUE(state.manifest);
  EXPECT_EQ(*state.manifest, m);
  EXPECT_FALSE(state.metrics.empty());

  for (std::size_t i = half; i < msgs.size(); ++i) c.send(msgs[i].text);
  ASSERT_TRUE(wait_for([&] { return session_ended(srv, "S"); }));
  auto e = srv.session("S");
  std::vector<WordMetrics> final_rows;
  {
    std::lock_guard lk(e->mu);
    final_rows = e->session->metrics().snapshot();
  }
  // Snapshot plus the live updates reproduces the final table.
  while (state.metrics != final_rows) {
    auto msg = v.recv_msg(2s);
    ASSERT_TRUE(msg) << "stream ended before reaching the final state";
    ASSERT_FALSE(std::holds_alternative<proto::Snapshot>(*msg));
    if (auto* u = std::get_if<proto::MetricsUpdate>(&*msg)) {
      state.metrics.at(static_cast<std::size_t>(u->metrics.word_index)) = u->metrics;
    }
  }
}

TEST(Server, MalformedAndMisroutedMessagesCounted) {
  Server srv({});
  const auto port = srv.start();
  test::WsClient c(port);
  open(c, "S");
  c.send("{broken");
  c.send(R"({"type":"telemetry","x":1})");
  c.send(proto::Viewport{ViewportState{5, 0, 0, 0, 0, 0}});  // dpr 0 fails to parse
  read_ab(c);
  c.send(proto::End{});
  c.send(proto::Gaze{at(test::t300(200), 120, 110)});  // session already closed
  ASSERT_TRUE(wait_for([&] { return srv.counters().rejected_messages == 1; }));
  auto e = srv.session("S");
  std::lock_guard lk(e->mu);
  EXPECT_EQ(e->session->counters().malformed, 2);
  EXPECT_EQ(e->session->counters().unknown_types, 1);
  EXPECT_EQ(srv.counters().rejected_messages, 1);
  EXPECT_EQ(e->session->fixations().size(), 2u);
}

TEST(Server, LayoutClientFeedsSession) {
  Server srv({});
  const auto port = srv.start();
  test::WsClient layout(port);
  layout.send(proto::Hello{proto::Role::layout, "S", "P"});
  layout.send(proto::Layout{test::ab_manifest()});
  layout.send(proto::Viewport{ViewportState{0, 0, 0, 0, 0, 1}});
  layout.send(proto::Gaze{at(0, 1, 1)});  // not a layout client's message
  ASSERT_TRUE(wait_for([&] { return srv.counters().rejected_messages == 1; }));
  test::WsClient src(port);
  src.send(proto::Hello{proto::Role::source, "S", "P"});
  read_ab(src);
  src.send(proto::End{});
  ASSERT_TRUE(wait_for([&] { return session_ended(srv, "S"); }));
  auto e = srv.session("S");
  std::lock_guard lk(e->mu);
  EXPECT_EQ(e->session->manifests().size(), 1u);
  EXPECT_EQ(e->session->counters().samples, 120);
  ASSERT_EQ(e->session->fixations().size(), 2u);
  EXPECT_EQ(e->session->fixations()[1].word_index, 1);
}

TEST(Server, TabStateFlushesToStore) {
  const auto dir = test::temp_dir("tab");
  ServerOptions o;
  o.store = dir;
  Server srv(o);
  const auto port = srv.start();
  test::WsClient c(port);
  open(c, "S");
  read_ab(c);
  c.send(proto::Tab{proto::TabState::hidden});
  ASSERT_TRUE(wait_for([&] {
    std::ifstream is(dir / "S.jsonl");
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str().find("\"rec\":\"flush\"") != std::string::npos;
  }));
}

TEST(Server, SourceDisconnectEndsSessionAndWritesStore) {
  const auto dir = test::temp_dir("store");
  ServerOptions o;
  o.store = dir;
  Server srv(o);
  const auto port = srv.start();
  {
    test::WsClient c(port);
    open(c, "S");
    read_ab(c);
    c.close();  // no end message
  }
  ASSERT_TRUE(wait_for([&] { return session_ended(srv, "S"); }));
  auto e = srv.session("S");
  std::string csv;
  {
    std::lock_guard lk(e->mu);
    csv = e->session->metrics_csv();
  }
  std::ifstream is(dir / "S.metrics.csv", std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  EXPECT_EQ(ss.str(), csv);
  const auto loaded = load_session_file(dir / "S.jsonl");
  EXPECT_TRUE(loaded.ended);
  EXPECT_EQ(loaded.fixations.size(), 2u);
  std::ostringstream re;
  export_metrics_csv(re, loaded);
  EXPECT_EQ(re.str(), csv);
}

TEST(Server, ExistingSessionFileIsNotOverwritten) {
  const auto dir = test::temp_dir("exists");
  { std::ofstream(dir / "S.jsonl") << "{}\n"; }
  ServerOptions o;
  o.store = dir;
  Server srv(o);
  const auto port = srv.start();
  test::WsClient c(port);
  c.send(proto::Hello{proto::Role::source, "S", "P"});
  const auto reply = c.recv_msg();
  ASSERT_TRUE(reply);
  EXPECT_TRUE(std::holds_alternative<proto::Error>(*reply));
}

TEST(Server, IdenticalReplaysWriteIdenticalFiles) {
  const auto m = sim::layout_from_text(sim::filler_text(150, 3, 4));
  sim::ReadingProfile p;
  p.seed = 4;
  p.p_regress = 0.15;
  p.noise_px = 2;
  const auto msgs = replay_messages({m, sim::simulate(m, p).log, {}, "S", "P"});
  std::string files[2];
  for (int i = 0; i < 2; ++i) {
    const auto dir = test::temp_dir("det" + std::to_string(i));
    ServerOptions o;
    o.store = dir;
    o.flush_clock = Session::FlushClock::sample;
    Server srv(o);
    replay_ws("127.0.0.1", srv.start(), msgs, 0.0);
    ASSERT_TRUE(wait_for([&] { return session_ended(srv, "S"); }));
    std::ifstream is(dir / "S.jsonl", std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    files[i] = ss.str();
  }
  EXPECT_GT(files[0].size(), 1000u);
  EXPECT_EQ(files[0], files[1]);
}

TEST(Server, StalledViewerDoesNotBlockIngestion) {
  BenchOptions o;
  o.samples = 40'000;
  o.words = 300;
  o.stalled_viewers = 2;
  o.viewer_queue = 16;
  const auto r = run_bench(o);
  EXPECT_EQ(r.samples, 40'000u);
  EXPECT_EQ(r.viewers_dropped, 2);
}

TEST(Replay, RealTimePacing) {
  const auto m = test::ab_manifest();
  GazeLog log;
  for (int k = 0; k <= 600; ++k) log.samples.push_back(at(test::t300(k), k % 120 < 60 ? 120 : 180, 110));
  Server srv({});
  const auto stats = replay_ws("127.0.0.1", srv.start(), replay_messages({m, log, {}, "S", "P"}), 1.0);
  EXPECT_NEAR(stats.log_seconds, 2.0, 1e-9);
  EXPECT_NEAR(stats.wall_seconds, stats.log_seconds, stats.log_seconds * 0.01);
}

TEST(Replay, DoubleSpeedHalvesWallTime) {
  const auto m = test::ab_manifest();
  GazeLog log;
  for (int k = 0; k <= 600; ++k) log.samples.push_back(at(test::t300(k), 120, 110));
  Server srv({});
  const auto stats = replay_ws("127.0.0.1", srv.start(), replay_messages({m, log, {}, "S", "P"}), 2.0);
  EXPECT_NEAR(stats.wall_seconds, 1.0, 0.01);
}

TEST(Replay, SpeedDoesNotChangeMetrics) {
  const auto m = sim::layout_from_text(sim::filler_text(40, 2, 3));
  sim::ReadingProfile p;
  p.seed = 3;
  p.p_regress = 0.2;
  p.noise_px = 2;
  const auto msgs = replay_messages({m, sim::simulate(m, p).log, {}, "S", "P"});
  std::string csv[2];
  const double speeds[2] = {0.0, 1.0};
  for (int i = 0; i < 2; ++i) {
    Server srv({});
    replay_ws("127.0.0.1", srv.start(), msgs, speeds[i]);
    ASSERT_TRUE(wait_for([&] { return session_ended(srv, "S"); }));
    auto e = srv.session("S");
    std::lock_guard lk(e->mu);
    csv[i] = e->session->metrics_csv();
  }
  EXPECT_EQ(csv[0], csv[1]);
  EXPECT_EQ(csv[0], run_offline(msgs, {})->metrics_csv());
}

TEST(Replay, EmptyLogGivesEmptySession) {
  Server srv({});
  replay_ws("127.0.0.1", srv.start(), replay_messages({test::ab_manifest(), {}, {}, "S", "P"}), 1.0);
  ASSERT_TRUE(wait_for([&] { return session_ended(srv, "S"); }));
  auto e = srv.session("S");
  std::lock_guard lk(e->mu);
  EXPECT_TRUE(e->session->fixations().empty());
  EXPECT_TRUE(e->session->saccades().empty());
  EXPECT_EQ(e->session->counters().samples, 0);
}

TEST(Replay, ConnectionRefusedThrows) {
  unsigned short port = 0;
  {
    Server srv({});
    port = srv.start();
  }
  EXPECT_ANY_THROW(replay_ws("127.0.0.1", port, {}, 0.0));
}
