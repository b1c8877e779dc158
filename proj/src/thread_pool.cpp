#include "dba/thread_pool.hpp"

#include <algorithm>
#include <exception>
#include <latch>

namespace dba {

ThreadPool::ThreadPool(std::size_t n_threads) {
  n_threads = std::max<std::size_t>(1, n_threads);
  threads_.reserve(n_threads);
  for (std::size_t i = 0; i < n_threads; ++i) threads_.emplace_back([this] { loop(); });
}

ThreadPool::~ThreadPool() {
  {
    std::lock_guard lock(mutex_);
    stopping_ = true;
  }
  cv_.notify_all();
  for (auto& t : threads_) t.join();
}

void ThreadPool::loop() {
  for (;;) {
    std::function<void()> job;
    {
      std::unique_lock lock(mutex_);
      cv_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
      if (stopping_ && queue_.empty()) return;
      job = std::move(queue_.front());
      queue_.pop();
    }
    job();
  }
}

void ThreadPool::run(std::size_t n_tasks,
                     const std::function<void(std::size_t)>& fn) {
  if (n_tasks == 0) return;
  if (n_tasks == 1) {
    fn(0);
    return;
  }
  std::latch done(static_cast<std::ptrdiff_t>(n_tasks));
  std::mutex error_mutex;
  std::exception_ptr error;
  {
    std::lock_guard lock(mutex_);
    for (std::size_t i = 0; i < n_tasks; ++i) {
      queue_.push([&, i] {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard elock(error_mutex);
          if (!error) error = std::current_exception();
        }
        done.count_down();
      });
    }
  }
  cv_.notify_all();
  done.wait();
  if (error) std::rethrow_exception(error);
}

ThreadPool& ThreadPool::shared() {
  static ThreadPool pool(std::max(2u, std::thread::hardware_concurrency()));
  return pool;
}

}  // namespace dba
