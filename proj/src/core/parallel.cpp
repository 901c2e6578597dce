#include "geoinv/core/parallel.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

#include <omp.h>

namespace geoinv {
namespace {

int initial_thread_count() {
  int n = omp_get_max_threads();
  if (const char* env = std::getenv("GEOINV_THREADS")) {
    try {
      const int cap = std::stoi(env);
      if (cap >= 1 && cap < n) n = cap;
    } catch (...) {
      // malformed values are ignored
    }
  }
  return n < 1 ? 1 : n;
}

std::atomic<int>& slot() {
  static std::atomic<int> n{initial_thread_count()};
  return n;
}

}  // namespace

int thread_count() { return slot().load(std::memory_order_relaxed); }

void set_thread_count(int n) { slot().store(n < 1 ? 1 : n, std::memory_order_relaxed); }

}  // namespace geoinv
