#pragma once

#include <condition_variable>
#include <cstddef>
#include <functional>
#include <mutex>
#include <queue>
#include <thread>
#include <vector>

namespace dba {

/// Fixed-size pool that runs batches of independent tasks.
class ThreadPool {
 public:
  explicit ThreadPool(std::size_t n_threads);
  ~ThreadPool();

  ThreadPool(const ThreadPool&) = delete;
  ThreadPool& operator=(const ThreadPool&) = delete;

  std::size_t size() const { return threads_.size(); }

  /// Runs fn(0) .. fn(n_tasks - 1) and blocks until all complete. The first
  /// exception thrown by a task is rethrown here.
  void run(std::size_t n_tasks, const std::function<void(std::size_t)>& fn);

  /// Process-wide pool sized to the hardware concurrency.
  static ThreadPool& shared();

 private:
  void loop();

  std::vector<std::thread> threads_;
  std::queue<std::function<void()>> queue_;
  std::mutex mutex_;
  std::condition_variable cv_;
  bool stopping_ = false;
};

}  // namespace dba
