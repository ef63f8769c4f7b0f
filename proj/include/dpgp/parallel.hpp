// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <condition_variable>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace dpgp {

/// Fixed-size worker pool running index-parallel loops. Results must be
/// written to per-index slots; any reduction happens afterwards in index
/// order, so output never depends on the worker count.
class ThreadPool {
 public:
  explicit ThreadPool(std::size_t workers = 1);
  ~ThreadPool();

  ThreadPool(const ThreadPool&) = delete;
  ThreadPool& operator=(const ThreadPool&) = delete;

  std::size_t workers() const { return threads_.size() + 1; }

  /// Calls fn(i) for i in [0, n). Blocks until done; rethrows the exception
  /// of the lowest failing index.
  void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

 private:
  void worker_loop(std::size_t slot);
  void run_chunk(std::size_t slot);

  std::vector<std::thread> threads_;
  std::mutex mutex_;
  std::condition_variable start_cv_;
  std::condition_variable done_cv_;
  const std::function<void(std::size_t)>* job_ = nullptr;
  std::size_t job_size_ = 0;
  std::size_t generation_ = 0;
  std::size_t pending_ = 0;
  bool stop_ = false;
  std::vector<std::exception_ptr> errors_;
};

}  // namespace dpgp
