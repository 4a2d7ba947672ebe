#pragma once

// Replays a gaze log either in-process or to a running server.

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include "eyelive/csv.hpp"
#include "eyelive/protocol.hpp"
#include "eyelive/session.hpp"

namespace eyelive {

struct ReplayInput {
  LayoutManifest manifest;
  GazeLog log;
  // Empty: one identity viewport before the first sample.
  std::vector<ViewportState> viewports;
  std::string session;
  std::string participant = "replay";
};

struct TimedMessage {
  std::optional<std::int64_t> t_us;  // sample clock of gaze messages
  std::string text;
};

// hello, layout, viewports, gaze..., end. Viewport messages are interleaved
// before the first sample at or after their timestamp.
inline std::vector<TimedMessage> replay_messages(const ReplayInput& in) {
  std::vector<TimedMessage> out;
  out.push_back({std::nullopt, proto::serialize(proto::Hello{proto::Role::source, in.session, in.participant})});
  out.push_back({std::nullopt, proto::serialize(proto::Layout{in.manifest})});
  std::vector<ViewportState> vps = in.viewports;
  if (vps.empty()) {
    const std::int64_t t0 = in.log.samples.empty() ? 0 : in.log.samples.front().t_us;
    vps.push_back(ViewportState{t0, 0, 0, 0, 0, 1});
  }
  std::size_t vi = 0;
  for (const auto& s : in.log.samples) {
    while (vi < vps.size() && vps[vi].t_us <= s.t_us) {
      out.push_back({std::nullopt, proto::serialize(proto::Viewport{vps[vi++]})});
    }
    out.push_back({s.t_us, proto::serialize(proto::Gaze{s})});
  }
  while (vi < vps.size()) out.push_back({std::nullopt, proto::serialize(proto::Viewport{vps[vi++]})});
  out.push_back({std::nullopt, proto::serialize(proto::End{})});
  return out;
}

// Runs the messages through a session in this process. The flush cadence
// follows the sample clock, so the session file depends on input only.
inline std::unique_ptr<Session> run_offline(const std::vector<TimedMessage>& msgs, SessionConfig cfg,
                                            std::unique_ptr<RecordSink> sink = nullptr,
                                            SessionListener* listener = nullptr) {
  SessionInfo info;
  for (const auto& m : msgs) {
    if (auto msg = proto::parse(m.text); auto* h = std::get_if<proto::Hello>(&msg)) {
      info.session_id = h->session.empty() ? "offline" : h->session;
      info.participant_id = h->participant;
      break;
    }
  }
  auto s = std::make_unique<Session>(info, cfg, std::move(sink), Session::FlushClock::sample);
  s->set_listener(listener);
  for (const auto& m : msgs) {
    if (s->ended()) break;
    s->ingest_text(m.text);
  }
  if (!s->ended()) s->end();
  return s;
}

struct ReplayStats {
  std::size_t sent = 0;
  double wall_seconds = 0.0;
  double log_seconds = 0.0;
};

// Sends the messages over one WebSocket connection. Gaze messages are paced
// by their timestamps divided by `speed`; speed 0 sends as fast as possible.
inline ReplayStats replay_ws(const std::string& host, unsigned short port, const std::vector<TimedMessage>& msgs,
                             double speed) {
  namespace beast = boost::beast;
  namespace ws = beast::websocket;
  using tcp = boost::asio::ip::tcp;

  boost::asio::io_context ioc;
  tcp::resolver resolver(ioc);
  ws::stream<tcp::socket> stream(ioc);
  boost::asio::connect(stream.next_layer(), resolver.resolve(host, std::to_string(port)));
  stream.next_layer().set_option(tcp::no_delay(true));
  stream.handshake(host + ":" + std::to_string(port), "/");
  stream.text(true);

  ReplayStats st;
  std::optional<std::int64_t> t0, t_last;
  const auto wall0 = std::chrono::steady_clock::now();
  for (const auto& m : msgs) {
    if (m.t_us) {
      if (!t0) t0 = m.t_us;
      t_last = m.t_us;
      if (speed > 0) {
        const auto due = wall0 + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                     std::chrono::duration<double, std::micro>(
                                         static_cast<double>(*m.t_us - *t0) / speed));
        // Sleep most of the way, then spin for precision.
        auto now = std::chrono::steady_clock::now();
        if (due - now > std::chrono::milliseconds(2)) std::this_thread::sleep_until(due - std::chrono::milliseconds(1));
        while (std::chrono::steady_clock::now() < due) {
        }
      }
    }
    stream.write(boost::asio::buffer(m.text));
    ++st.sent;
  }
  st.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
  if (t0) st.log_seconds = static_cast<double>(*t_last - *t0) / 1e6;

  // Close and wait for the server to acknowledge so the end message has
  // been processed before returning.
  beast::error_code ec;
  stream.close(ws::close_code::normal, ec);
  if (!ec) {
    beast::flat_buffer buf;
    while (!ec) stream.read(buf, ec);
  }
  return st;
}

}  // namespace eyelive
