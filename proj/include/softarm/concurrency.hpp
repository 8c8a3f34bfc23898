#pragma once

// Thread handoff primitives for the real-time mode: a latest-value slot for
// coherent state/command snapshots and a bounded drop-oldest log queue.

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <mutex>
#include <optional>

namespace softarm {

/// Holds the most recent value written. Readers always see a complete value
/// from a single write, tagged with a sequence number that increases by one
/// per write.
template <class T>
class SnapshotChannel {
 public:
  void publish(T value) {
    std::lock_guard lock(mu_);
    value_ = std::move(value);
    ++seq_;
    cv_.notify_all();
  }

  /// Latest value and its sequence number; nullopt before the first write.
  std::optional<std::pair<T, std::uint64_t>> latest() const {
    std::lock_guard lock(mu_);
    if (seq_ == 0) return std::nullopt;
    return std::make_pair(value_, seq_);
  }

  /// Blocks until a value newer than `seen` is available or the channel is
  /// closed. Returns nullopt on close.
  std::optional<std::pair<T, std::uint64_t>> wait_newer(std::uint64_t seen) {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return seq_ > seen || closed_; });
    if (seq_ <= seen) return std::nullopt;
    return std::make_pair(value_, seq_);
  }

  void close() {
    std::lock_guard lock(mu_);
    closed_ = true;
    cv_.notify_all();
  }

 private:
  mutable std::mutex mu_;
  std::condition_variable cv_;
  T value_{};
  std::uint64_t seq_ = 0;
  bool closed_ = false;
};

/// Fixed-capacity FIFO. push() never blocks: when full, the oldest entry is
/// discarded and counted.
template <class T>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t capacity) : capacity_(capacity == 0 ? 1 : capacity) {}

  void push(T value) {
    {
      std::lock_guard lock(mu_);
      if (items_.size() >= capacity_) {
        items_.pop_front();
        ++dropped_;
      }
      items_.push_back(std::move(value));
    }
    cv_.notify_one();
  }

  /// Blocks for the next item; nullopt once closed and drained.
  std::optional<T> pop() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return !items_.empty() || closed_; });
    if (items_.empty()) return std::nullopt;
    T v = std::move(items_.front());
    items_.pop_front();
    return v;
  }

  std::optional<T> try_pop() {
    std::lock_guard lock(mu_);
    if (items_.empty()) return std::nullopt;
    T v = std::move(items_.front());
    items_.pop_front();
    return v;
  }

  void close() {
    {
      std::lock_guard lock(mu_);
      closed_ = true;
    }
    cv_.notify_all();
  }

  std::uint64_t dropped() const {
    std::lock_guard lock(mu_);
    return dropped_;
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return items_.size();
  }

 private:
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<T> items_;
  std::size_t capacity_;
  std::uint64_t dropped_ = 0;
  bool closed_ = false;
};

}  // namespace softarm
