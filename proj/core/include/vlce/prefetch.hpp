#pragma once

#include <condition_variable>
#include <cstddef>
#include <deque>
#include <exception>
#include <functional>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

namespace vlce {

// Runs `produce` on a background thread and hands its items out one at a time,
// holding at most `capacity` ready items. capacity 0 produces inline.
// Exceptions from the producer are rethrown by pop().
template <typename T>
class PrefetchQueue {
 public:
  PrefetchQueue(std::size_t capacity, std::function<std::vector<T>()> produce) : capacity_(capacity) {
    if (capacity_ == 0) {
      auto items = produce();
      for (auto& i : items) ready_.push_back(std::move(i));
      done_ = true;
      return;
    }
    worker_ = std::jthread([this, produce = std::move(produce)](std::stop_token stop) {
      try {
        auto items = produce();
        for (auto& item : items) {
          std::unique_lock lock(mu_);
          space_.wait(lock, [&] { return ready_.size() < capacity_ || stop.stop_requested(); });
          if (stop.stop_requested()) break;
          ready_.push_back(std::move(item));
          avail_.notify_one();
        }
      } catch (...) {
        std::lock_guard lock(mu_);
        error_ = std::current_exception();
      }
      std::lock_guard lock(mu_);
      done_ = true;
      avail_.notify_all();
    });
  }

  ~PrefetchQueue() {
    if (worker_.joinable()) {
      worker_.request_stop();
      {
        std::lock_guard lock(mu_);
        space_.notify_all();
      }
      worker_.join();
    }
  }

  PrefetchQueue(const PrefetchQueue&) = delete;
  PrefetchQueue& operator=(const PrefetchQueue&) = delete;

  std::optional<T> pop() {
    std::unique_lock lock(mu_);
    avail_.wait(lock, [&] { return !ready_.empty() || done_; });
    if (error_) std::rethrow_exception(error_);
    if (ready_.empty()) return std::nullopt;
    T item = std::move(ready_.front());
    ready_.pop_front();
    space_.notify_one();
    return item;
  }

 private:
  std::size_t capacity_;
  std::mutex mu_;
  std::condition_variable avail_;
  std::condition_variable space_;
  std::deque<T> ready_;
  bool done_ = false;
  std::exception_ptr error_;
  std::jthread worker_;
};

}  // namespace vlce
