#pragma once

// Sample-parallel map with deterministic reduction.  Each index writes its
// own slot and callers fold the slots in index order, so the worker count
// never changes any output bit.

#include <atomic>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace deeplimit {

// Worker count used by parallel_for.  Defaults to DEEPLIMIT_THREADS if set,
// else 1; the CLI --threads flag overrides it.
inline int& thread_count() {
  static int count = [] {
    if (const char* env = std::getenv("DEEPLIMIT_THREADS")) {
      const int v = std::atoi(env);
      if (v >= 1) return v;
    }
    return 1;
  }();
  return count;
}

template <class Fn>
void parallel_for(int count, Fn&& fn) {
  const int workers = std::min(thread_count(), count);
  if (workers <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(count);
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      int i;
      while ((i = next.fetch_add(1)) < count) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (int i = 0; i < count; ++i)  // lowest index wins, deterministically
    if (errors[i]) std::rethrow_exception(errors[i]);
}

}  // namespace deeplimit
