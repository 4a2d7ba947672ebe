#pragma once

// Fan-out of live session events to viewers.

#include <atomic>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <boost/asio/any_io_executor.hpp>
#include <boost/asio/post.hpp>

#include "eyelive/protocol.hpp"
#include "eyelive/session.hpp"

namespace eyelive {

// One viewer's outgoing buffer. push must never block.
class Outbox {
 public:
  virtual ~Outbox() = default;
  // False when the buffer is full.
  virtual bool push(std::shared_ptr<const std::string> text) = 0;
  virtual void disconnect() = 0;
  // False once the viewer has gone away on its own.
  virtual bool open() const { return true; }
};

// The ingest side only queues a copy of each event. Serialization and
// fan-out run on the broadcast lane (an executor), or inline when the hub
// has none. A viewer whose buffer is full is dropped and disconnected.
class ViewerHub final : public SessionListener {
 public:
  ViewerHub() = default;
  explicit ViewerHub(boost::asio::any_io_executor lane, std::size_t lane_limit = 1 << 16)
      : lane_(std::move(lane)), lane_limit_(lane_limit) {}

  bool active() const override { return count_.load(std::memory_order_relaxed) > 0; }
  void on_fixation(const Fixation& f) override { enqueue(proto::Message{proto::FixationEnd{f}}); }
  void on_saccade(const Saccade& s) override { enqueue(proto::Message{proto::SaccadeEvent{s}}); }
  void on_metrics(const WordMetrics& m) override { enqueue(proto::Message{proto::MetricsUpdate{m}}); }

  // `first` (the snapshot) reaches the viewer before any event published
  // after this call. The caller must hold the session's lock so the snapshot
  // and the queue position agree.
  void add(std::shared_ptr<Outbox> v, std::string first) {
    count_.fetch_add(1, std::memory_order_relaxed);
    enqueue(Join{std::move(v), std::make_shared<const std::string>(std::move(first))});
  }

  void remove(const Outbox* v) {
    std::lock_guard lk(mu_);
    const auto before = viewers_.size();
    std::erase_if(viewers_, [&](const auto& p) { return p.get() == v; });
    auto n = before - viewers_.size();
    for (auto& item : pending_) {
      if (auto* j = std::get_if<Join>(&item.v); j && j->viewer.get() == v) {
        j->viewer.reset();
        ++n;
      }
    }
    count_.fetch_sub(n, std::memory_order_relaxed);
  }

  void disconnect_all() {
    std::lock_guard lk(mu_);
    for (auto& v : viewers_) v->disconnect();
    viewers_.clear();
    for (auto& item : pending_) {
      if (auto* j = std::get_if<Join>(&item.v); j && j->viewer) j->viewer->disconnect();
    }
    pending_.clear();
    ++epoch_;
    count_.store(0, std::memory_order_relaxed);
  }

  std::size_t size() const { return count_.load(std::memory_order_relaxed); }
  std::int64_t dropped() const { return dropped_.load(std::memory_order_relaxed); }

 private:
  struct Join {
    std::shared_ptr<Outbox> viewer;
    std::shared_ptr<const std::string> first;
  };
  struct Item {
    std::variant<proto::Message, Join> v;
    std::uint64_t epoch = 0;
  };

  void enqueue(std::variant<proto::Message, Join> v) {
    bool schedule = false;
    {
      std::lock_guard lk(mu_);
      if (pending_.size() >= lane_limit_) {
        // The lane fell behind: every viewer, joined or joining, is stale.
        ++epoch_;
        for (auto& x : viewers_) drop_locked(*x);
        viewers_.clear();
        for (auto& item : pending_) {
          if (auto* j = std::get_if<Join>(&item.v); j && j->viewer) drop_locked(*j->viewer);
        }
        pending_.clear();
        if (!std::holds_alternative<Join>(v)) return;
      }
      pending_.push_back(Item{std::move(v), epoch_});
      schedule = !scheduled_;
      scheduled_ = true;
    }
    if (!schedule) return;
    if (lane_) {
      boost::asio::post(*lane_, [this] { drain(); });
    } else {
      drain();
    }
  }

  void drain() {
    for (;;) {
      std::deque<Item> batch;
      {
        std::lock_guard lk(mu_);
        if (pending_.empty()) {
          scheduled_ = false;
          return;
        }
        batch.swap(pending_);
      }
      for (auto& item : batch) {
        if (auto* j = std::get_if<Join>(&item.v)) {
          std::lock_guard lk(mu_);
          if (!j->viewer) continue;  // left before joining
          if (!j->viewer->open()) {
            count_.fetch_sub(1, std::memory_order_relaxed);
            continue;
          }
          if (item.epoch == epoch_ && j->viewer->push(j->first)) {
            viewers_.push_back(std::move(j->viewer));
          } else {
            drop_locked(*j->viewer);
          }
          continue;
        }
        {
          std::lock_guard lk(mu_);
          if (item.epoch != epoch_ || viewers_.empty()) continue;
        }
        auto text = std::make_shared<const std::string>(proto::serialize(std::get<proto::Message>(item.v)));
        std::lock_guard lk(mu_);
        if (item.epoch != epoch_) continue;
        for (auto it = viewers_.begin(); it != viewers_.end();) {
          if ((*it)->push(text)) {
            ++it;
            continue;
          }
          drop_locked(**it);
          it = viewers_.erase(it);
        }
      }
    }
  }

  void drop_locked(Outbox& v) {
    v.disconnect();
    ++dropped_;
    count_.fetch_sub(1, std::memory_order_relaxed);
  }

  std::optional<boost::asio::any_io_executor> lane_;
  std::size_t lane_limit_ = 1 << 16;

  mutable std::mutex mu_;
  std::deque<Item> pending_;
  bool scheduled_ = false;
  std::uint64_t epoch_ = 0;
  std::vector<std::shared_ptr<Outbox>> viewers_;
  std::atomic<std::size_t> count_{0};
  std::atomic<std::int64_t> dropped_{0};
};

}  // namespace eyelive
