#pragma once

#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <deque>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

namespace vidanno {

struct Event {
  std::string type;  // SSE event name
  std::string data;  // JSON document
};

// Fan-out of session events to any number of subscribers. Each subscriber
// owns a bounded queue; when a slow reader lets it fill up, the backlog is
// replaced by a single "resync" event telling the client to re-read state.
class EventBus {
 public:
  class Subscription {
   public:
    explicit Subscription(std::size_t capacity) : capacity_(capacity) {}

    /// Waits up to `timeout` for the next event.
    bool next(Event& out, std::chrono::milliseconds timeout) {
      std::unique_lock lock(mutex_);
      if (!cv_.wait_for(lock, timeout, [&] { return !queue_.empty() || closed_; })) return false;
      if (queue_.empty()) return false;
      out = std::move(queue_.front());
      queue_.pop_front();
      return true;
    }

    bool closed() const {
      std::lock_guard lock(mutex_);
      return closed_;
    }

   private:
    friend class EventBus;

    void push(const Event& e) {
      {
        std::lock_guard lock(mutex_);
        if (closed_) return;
        if (queue_.size() >= capacity_) {
          queue_.clear();
          queue_.push_back(Event{"resync", "{}"});
        }
        queue_.push_back(e);
      }
      cv_.notify_one();
    }

    void close() {
      {
        std::lock_guard lock(mutex_);
        closed_ = true;
      }
      cv_.notify_all();
    }

    std::size_t capacity_;
    std::deque<Event> queue_;
    bool closed_ = false;
    mutable std::mutex mutex_;
    std::condition_variable cv_;
  };

  explicit EventBus(std::size_t queue_capacity = 256) : capacity_(queue_capacity) {}
  ~EventBus() { close_all(); }

  std::shared_ptr<Subscription> subscribe() {
    auto sub = std::make_shared<Subscription>(capacity_);
    std::lock_guard lock(mutex_);
    subscribers_.push_back(sub);
    return sub;
  }

  void publish(const std::string& type, const std::string& data) {
    std::vector<std::shared_ptr<Subscription>> live;
    {
      std::lock_guard lock(mutex_);
      std::erase_if(subscribers_, [](const auto& w) { return w.expired(); });
      for (const auto& w : subscribers_) {
        if (auto s = w.lock()) live.push_back(std::move(s));
      }
    }
    const Event e{type, data};
    for (const auto& s : live) s->push(e);
  }

  void close_all() {
    std::lock_guard lock(mutex_);
    for (const auto& w : subscribers_) {
      if (auto s = w.lock()) s->close();
    }
    subscribers_.clear();
  }

 private:
  std::size_t capacity_;
  std::vector<std::weak_ptr<Subscription>> subscribers_;
  std::mutex mutex_;
};

}  // namespace vidanno
