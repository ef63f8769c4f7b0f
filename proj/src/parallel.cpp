// Apache License, Version 2.0, refer to LICENSE.txt

#include "dpgp/parallel.hpp"

#include <algorithm>

namespace dpgp {

ThreadPool::ThreadPool(std::size_t workers) {
  const std::size_t extra = workers > 1 ? workers - 1 : 0;
  threads_.reserve(extra);
  for (std::size_t t = 0; t < extra; ++t) threads_.emplace_back([this, t] { worker_loop(t + 1); });
}

ThreadPool::~ThreadPool() {
  {
    std::lock_guard lock(mutex_);
    stop_ = true;
  }
  start_cv_.notify_all();
  for (auto& t : threads_) t.join();
}

void ThreadPool::run_chunk(std::size_t slot) {
  // Strided assignment: slot s handles indices s, s + W, s + 2W, ...
  const std::size_t w = workers();
  for (std::size_t i = slot; i < job_size_; i += w) {
    try {
      (*job_)(i);
    } catch (...) {
      errors_[i] = std::current_exception();
    }
  }
}

void ThreadPool::worker_loop(std::size_t slot) {
  std::size_t seen = 0;
  for (;;) {
    {
      std::unique_lock lock(mutex_);
      start_cv_.wait(lock, [&] { return stop_ || generation_ != seen; });
      if (stop_) return;
      seen = generation_;
    }
    run_chunk(slot);
    {
      std::lock_guard lock(mutex_);
      if (--pending_ == 0) done_cv_.notify_one();
    }
  }
}

void ThreadPool::parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  errors_.assign(n, nullptr);
  job_ = &fn;
  job_size_ = n;
  if (threads_.empty() || n == 1) {
    for (std::size_t i = 0; i < n; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors_[i] = std::current_exception();
      }
    }
  } else {
    {
      std::lock_guard lock(mutex_);
      pending_ = threads_.size();
      ++generation_;
    }
    start_cv_.notify_all();
    run_chunk(0);
    std::unique_lock lock(mutex_);
    done_cv_.wait(lock, [&] { return pending_ == 0; });
  }
  job_ = nullptr;
  for (auto& e : errors_) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace dpgp
