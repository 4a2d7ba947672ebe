#pragma once

// End-to-end ingestion benchmark through a local server.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <memory>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include "eyelive/replay.hpp"
#include "eyelive/server.hpp"
#include "eyelive/simulate.hpp"

namespace eyelive {

// One sample period at 1200 Hz.
inline constexpr double kLatencyBudgetUs = 1e6 / 1200.0;

struct BenchOptions {
  std::size_t samples = 150'000;
  std::size_t words = 1000;
  int stalled_viewers = 0;
  std::size_t viewer_queue = 1024;
  std::uint64_t seed = 1;
  SessionConfig config;
};

struct BenchResult {
  std::size_t samples = 0;
  double mean_us = 0, sd_us = 0, p50_us = 0, p99_us = 0, max_us = 0;
  double wall_seconds = 0;
  std::int64_t viewers_dropped = 0;
};

inline LayoutManifest bench_manifest(std::size_t words, std::uint64_t seed = 1) {
  return sim::layout_from_text(sim::filler_text(static_cast<int>(words), 10, seed));
}

// Repeated simulated readings of the page until `n` samples exist.
inline GazeLog bench_log(const LayoutManifest& m, std::size_t n, std::uint64_t seed = 1) {
  GazeLog log;
  sim::ReadingProfile p;
  p.seed = seed;
  p.p_regress = 0.1;
  p.p_skip = 0.1;
  p.noise_px = 2;
  while (log.samples.size() < n) {
    p.start_us = log.samples.empty() ? 0 : log.samples.back().t_us + 1'000'000;
    auto part = sim::simulate(m, p).log.samples;
    if (part.empty()) throw error(errc::parse_error, "manifest produced no samples");
    log.samples.insert(log.samples.end(), part.begin(), part.end());
    ++p.seed;
  }
  log.samples.resize(n);
  return log;
}

inline BenchResult summarize(std::vector<std::int64_t> ns) {
  BenchResult r;
  r.samples = ns.size();
  if (ns.empty()) return r;
  const double n = static_cast<double>(ns.size());
  const double mean = std::accumulate(ns.begin(), ns.end(), 0.0) / n;
  double ss = 0;
  for (auto v : ns) ss += (static_cast<double>(v) - mean) * (static_cast<double>(v) - mean);
  std::sort(ns.begin(), ns.end());
  const auto pct = [&](double q) {
    return static_cast<double>(ns[std::min(ns.size() - 1, static_cast<std::size_t>(q * (n - 1)))]) / 1e3;
  };
  r.mean_us = mean / 1e3;
  r.sd_us = std::sqrt(ss / n) / 1e3;
  r.p50_us = pct(0.5);
  r.p99_us = pct(0.99);
  r.max_us = static_cast<double>(ns.back()) / 1e3;
  return r;
}

// A viewer that subscribes and then never reads.
class StalledViewer {
 public:
  StalledViewer(boost::asio::io_context& ioc, unsigned short port, const std::string& session) : ws_(ioc) {
    using tcp = boost::asio::ip::tcp;
    tcp::resolver resolver(ioc);
    boost::asio::connect(ws_.next_layer(), resolver.resolve("127.0.0.1", std::to_string(port)));
    ws_.handshake("127.0.0.1:" + std::to_string(port), "/");
    ws_.text(true);
    ws_.write(boost::asio::buffer(proto::serialize(proto::Hello{proto::Role::viewer, session, "bench"})));
  }

 private:
  boost::beast::websocket::stream<boost::asio::ip::tcp::socket> ws_;
};

inline BenchResult run_bench(const BenchOptions& o, const std::vector<TimedMessage>& msgs) {
  ServerOptions so;
  so.config = o.config;
  so.viewer_queue = o.viewer_queue;
  Server srv(so);
  const auto port = srv.start(0);

  boost::asio::io_context client_ioc;
  std::vector<std::unique_ptr<StalledViewer>> viewers;
  for (int i = 0; i < o.stalled_viewers; ++i) viewers.push_back(std::make_unique<StalledViewer>(client_ioc, port, "bench"));
  // Wait until every viewer is subscribed.
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(10);
  while (o.stalled_viewers > 0) {
    auto e = srv.session("bench");
    if (e && e->hub.size() == static_cast<std::size_t>(o.stalled_viewers)) break;
    if (std::chrono::steady_clock::now() > deadline) throw error(errc::io_error, "viewers did not subscribe");
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
  }

  const auto stats = replay_ws("127.0.0.1", port, msgs, 0.0);
  std::vector<std::int64_t> ns;
  {
    auto e = srv.session("bench");
    if (!e) throw error(errc::io_error, "bench session missing");
    std::lock_guard lk(e->mu);
    ns = e->session->latencies_ns();
  }
  auto r = summarize(std::move(ns));
  r.wall_seconds = stats.wall_seconds;
  r.viewers_dropped = srv.counters().viewers_dropped;
  srv.stop();
  return r;
}

inline BenchResult run_bench(const BenchOptions& o) {
  const auto m = bench_manifest(o.words, o.seed);
  return run_bench(o, replay_messages({m, bench_log(m, o.samples, o.seed), {}, "bench", "bench"}));
}

}  // namespace eyelive
