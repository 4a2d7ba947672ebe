#pragma once

// WebSocket endpoint: sources and layout clients feed sessions, viewers
// subscribe to them.

#include <algorithm>
#include <atomic>
#include <cctype>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <boost/asio/dispatch.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/asio/post.hpp>
#include <boost/asio/steady_timer.hpp>
#include <boost/asio/strand.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include "eyelive/broadcast.hpp"
#include "eyelive/protocol.hpp"
#include "eyelive/session.hpp"

namespace eyelive {

struct ServerOptions {
  SessionConfig config;
  std::optional<std::filesystem::path> store;  // <id>.jsonl and <id>.metrics.csv
  std::string address = "127.0.0.1";
  std::size_t threads = 1;
  std::size_t viewer_queue = 1024;  // messages buffered per viewer
  Session::FlushClock flush_clock = Session::FlushClock::wall;
};

struct ServerCounters {
  std::int64_t connections = 0;
  std::int64_t refused = 0;            // bad hello, second source, ended session
  std::int64_t rejected_messages = 0;  // well-formed but not applicable
  std::int64_t viewers_dropped = 0;
};

struct SessionEntry {
  explicit SessionEntry(boost::asio::any_io_executor lane) : hub(std::move(lane)) {}

  std::mutex mu;
  std::unique_ptr<Session> session;  // created by the first source or layout client
  ViewerHub hub;
  bool source_attached = false;
};

// Session ids double as file names in the store.
inline bool valid_session_id(std::string_view id) {
  return !id.empty() && id.size() <= 128 && id.front() != '.' &&
         std::all_of(id.begin(), id.end(), [](char c) {
           return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
         });
}

namespace detail {

namespace beast = boost::beast;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

struct ServerState {
  ServerOptions opt;
  std::mutex mu;
  std::map<std::string, std::shared_ptr<SessionEntry>> sessions;
  std::atomic<std::int64_t> next_id{1};
  std::atomic<std::int64_t> connections{0};
  std::atomic<std::int64_t> refused{0};
  std::atomic<std::int64_t> rejected{0};
  std::optional<net::io_context::executor_type> exec;

  std::shared_ptr<SessionEntry> entry(const std::string& id) {
    std::lock_guard lk(mu);
    auto& e = sessions[id];
    if (!e) e = std::make_shared<SessionEntry>(net::make_strand(*exec));
    return e;
  }

  std::vector<std::shared_ptr<SessionEntry>> entries() {
    std::lock_guard lk(mu);
    std::vector<std::shared_ptr<SessionEntry>> out;
    for (auto& [id, e] : sessions) out.push_back(e);
    return out;
  }

  // Caller holds e.mu.
  void create_session(SessionEntry& e, const std::string& id, const std::string& participant) {
    std::unique_ptr<RecordSink> sink;
    std::optional<std::filesystem::path> csv;
    if (opt.store) {
      const auto file = *opt.store / (id + ".jsonl");
      if (std::filesystem::exists(file)) throw error(errc::io_error, "session file already exists: " + id);
      sink = std::make_unique<FileSink>(file);
      csv = *opt.store / (id + ".metrics.csv");
    }
    e.session = std::make_unique<Session>(SessionInfo{id, participant, "", {}, {}, {}}, opt.config,
                                          std::move(sink), opt.flush_clock);
    if (csv) e.session->set_metrics_csv_path(*csv);
    e.session->set_listener(&e.hub);
  }
};

class Connection : public Outbox, public std::enable_shared_from_this<Connection> {
 public:
  Connection(tcp::socket&& socket, std::shared_ptr<ServerState> state)
      : ws_(std::move(socket)), state_(std::move(state)) {}

  void run() {
    net::dispatch(ws_.get_executor(), [self = shared_from_this()] { self->on_run(); });
  }

  bool open() const override { return !gone_.load(); }

  bool push(std::shared_ptr<const std::string> text) override {
    std::lock_guard lk(out_mu_);
    if (out_.size() >= state_->opt.viewer_queue) return false;
    out_.push_back(std::move(text));
    if (!writing_) {
      writing_ = true;
      net::post(ws_.get_executor(), [self = shared_from_this()] { self->write_next(); });
    }
    return true;
  }

  void disconnect() override {
    net::post(ws_.get_executor(), [self = shared_from_this()] {
      beast::error_code ec;
      beast::get_lowest_layer(self->ws_).socket().shutdown(tcp::socket::shutdown_both, ec);
      beast::get_lowest_layer(self->ws_).close();
    });
  }

 private:
  void on_run() {
    beast::error_code ec;
    beast::get_lowest_layer(ws_).socket().set_option(tcp::no_delay(true), ec);
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.text(true);
    ws_.async_accept([self = shared_from_this()](beast::error_code e) {
      if (e) return;
      ++self->state_->connections;
      self->read();
    });
  }

  void read() {
    ws_.async_read(buf_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->closed();
        return;
      }
      const std::string text = beast::buffers_to_string(self->buf_.data());
      self->buf_.consume(self->buf_.size());
      self->handle(text);
      if (!self->closing_) self->read();
    });
  }

  void handle(const std::string& text) {
    if (!role_) {
      hello(text);
      return;
    }
    if (*role_ == proto::Role::viewer) return;  // viewers only listen
    std::lock_guard lk(entry_->mu);
    try {
      if (*role_ == proto::Role::source) {
        entry_->session->ingest_text(text);
        return;
      }
      const auto msg = proto::parse(text);
      if (std::holds_alternative<proto::Gaze>(msg) || std::holds_alternative<proto::End>(msg) ||
          std::holds_alternative<proto::Hello>(msg)) {
        ++state_->rejected;
        return;
      }
      entry_->session->ingest(msg);
    } catch (const error&) {
      ++state_->rejected;
    }
  }

  void hello(const std::string& text) {
    proto::Hello h;
    try {
      auto msg = proto::parse(text);
      auto* p = std::get_if<proto::Hello>(&msg);
      if (!p) return refuse("expected hello");
      h = std::move(*p);
    } catch (const error& e) {
      return refuse(e.what());
    }
    if (h.session.empty()) {
      if (h.role == proto::Role::viewer) return refuse("viewer needs a session id");
      h.session = "s" + std::to_string(state_->next_id++);
    }
    if (!valid_session_id(h.session)) return refuse("invalid session id");

    auto e = state_->entry(h.session);
    std::lock_guard lk(e->mu);
    if (h.role == proto::Role::viewer) {
      proto::Snapshot snap = e->session ? e->session->snapshot() : proto::Snapshot{};
      role_ = h.role;
      entry_ = e;
      e->hub.add(shared_from_this(), proto::serialize(snap));
      return;
    }
    if (e->session && e->session->ended()) return refuse("session has ended");
    if (h.role == proto::Role::source && e->source_attached) return refuse("session already has a source");
    if (!e->session) {
      try {
        state_->create_session(*e, h.session, h.participant);
      } catch (const error& ex) {
        return refuse(ex.what());
      }
    }
    if (h.role == proto::Role::source) e->source_attached = true;
    role_ = h.role;
    entry_ = e;
  }

  void refuse(const std::string& reason) {
    ++state_->refused;
    closing_ = true;
    auto text = std::make_shared<const std::string>(proto::serialize(proto::Error{reason}));
    ws_.async_write(net::buffer(*text), [self = shared_from_this(), text](beast::error_code ec, std::size_t) {
      if (ec) return;
      self->ws_.async_close(websocket::close_code::policy_error, [self](beast::error_code) {});
    });
  }

  void write_next() {
    std::shared_ptr<const std::string> next;
    {
      std::lock_guard lk(out_mu_);
      if (out_.empty()) {
        writing_ = false;
        return;
      }
      next = out_.front();
    }
    ws_.async_write(net::buffer(*next), [self = shared_from_this(), next](beast::error_code ec, std::size_t) {
      {
        std::lock_guard lk(self->out_mu_);
        self->out_.pop_front();
        if (ec) {
          self->out_.clear();
          self->writing_ = false;
          return;
        }
      }
      self->write_next();
    });
  }

  void closed() {
    if (!role_ || !entry_) return;
    if (*role_ == proto::Role::viewer) {
      gone_ = true;
      entry_->hub.remove(this);
      return;
    }
    std::lock_guard lk(entry_->mu);
    if (*role_ != proto::Role::source) return;
    entry_->source_attached = false;
    // A source that goes away without "end" still closes its session.
    if (entry_->session && !entry_->session->ended()) {
      try {
        entry_->session->end();
      } catch (const error&) {
      }
    }
  }

  websocket::stream<beast::tcp_stream> ws_;
  std::shared_ptr<ServerState> state_;
  beast::flat_buffer buf_;
  std::optional<proto::Role> role_;
  std::shared_ptr<SessionEntry> entry_;
  bool closing_ = false;
  std::atomic<bool> gone_{false};

  std::mutex out_mu_;
  std::deque<std::shared_ptr<const std::string>> out_;
  bool writing_ = false;
};

}  // namespace detail

class Server {
 public:
  explicit Server(ServerOptions opt)
      : state_(std::make_shared<detail::ServerState>()),
        acceptor_(detail::net::make_strand(ioc_)),
        timer_(detail::net::make_strand(ioc_)) {
    if (opt.threads == 0) opt.threads = 1;
    if (opt.viewer_queue == 0) opt.viewer_queue = 1;
    if (opt.store) std::filesystem::create_directories(*opt.store);
    state_->opt = std::move(opt);
    state_->exec = ioc_.get_executor();
  }

  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;
  ~Server() { stop(); }

  // Binds and starts the worker threads. Returns the bound port.
  unsigned short start(unsigned short port = 0) {
    namespace net = detail::net;
    const detail::tcp::endpoint ep(net::ip::make_address(state_->opt.address), port);
    acceptor_.open(ep.protocol());
    acceptor_.set_option(net::socket_base::reuse_address(true));
    acceptor_.bind(ep);
    acceptor_.listen(net::socket_base::max_listen_connections);
    port_ = acceptor_.local_endpoint().port();
    accept();
    tick();
    for (std::size_t i = 0; i < state_->opt.threads; ++i) threads_.emplace_back([this] { ioc_.run(); });
    return port_;
  }

  // Stops the workers, then ends every open session so its files are complete.
  void stop() {
    if (stopped_.exchange(true)) return;
    ioc_.stop();
    for (auto& t : threads_) t.join();
    threads_.clear();
    for (auto& e : state_->entries()) {
      std::lock_guard lk(e->mu);
      if (e->session && !e->session->ended()) {
        try {
          e->session->end();
        } catch (const error&) {
        }
      }
    }
  }

  unsigned short port() const { return port_; }

  std::shared_ptr<SessionEntry> session(const std::string& id) const {
    std::lock_guard lk(state_->mu);
    auto it = state_->sessions.find(id);
    return it == state_->sessions.end() ? nullptr : it->second;
  }

  std::vector<std::string> session_ids() const {
    std::lock_guard lk(state_->mu);
    std::vector<std::string> out;
    for (const auto& [id, e] : state_->sessions) out.push_back(id);
    return out;
  }

  ServerCounters counters() const {
    ServerCounters c{state_->connections.load(), state_->refused.load(), state_->rejected.load(), 0};
    for (auto& e : state_->entries()) c.viewers_dropped += e->hub.dropped();
    return c;
  }

 private:
  void accept() {
    acceptor_.async_accept(detail::net::make_strand(ioc_), [this](boost::beast::error_code ec, detail::tcp::socket s) {
      if (ec) return;
      std::make_shared<detail::Connection>(std::move(s), state_)->run();
      accept();
    });
  }

  // Flushes idle sessions on the wall-clock cadence; busy sessions also
  // flush inline as samples arrive.
  void tick() {
    timer_.expires_after(std::chrono::milliseconds(200));
    timer_.async_wait([this](boost::beast::error_code ec) {
      if (ec) return;
      for (auto& e : state_->entries()) {
        std::lock_guard lk(e->mu);
        if (e->session && !e->session->ended()) e->session->maybe_flush();
      }
      tick();
    });
  }

  boost::asio::io_context ioc_;
  std::shared_ptr<detail::ServerState> state_;
  detail::tcp::acceptor acceptor_;
  boost::asio::steady_timer timer_;
  std::vector<std::thread> threads_;
  unsigned short port_ = 0;
  std::atomic<bool> stopped_{false};
};

}  // namespace eyelive
