#include "pq4d/parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace pq {

int worker_count() {
  int n = 0;
  if (const char* env = std::getenv("PQ_THREADS"); env != nullptr && *env != '\0') {
    try {
      n = std::stoi(env);
    } catch (const std::exception&) {
      n = 0;
    }
    if (n < 0) n = 0;
  }
  if (n == 0) {
    n = static_cast<int>(std::thread::hardware_concurrency());
  }
  return n > 0 ? n : 1;
}

void parallel_for(int begin, int end, const std::function<void(int)>& fn) {
  const int count = end - begin;
  if (count <= 0) return;
  const int workers = std::min(worker_count(), count);
  if (workers <= 1) {
    for (int i = begin; i < end; ++i) fn(i);
    return;
  }
  // Static contiguous blocks; block w covers [begin + w*chunk, ...).
  const int chunk = (count + workers - 1) / workers;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  std::exception_ptr error;
  std::mutex error_mutex;
  for (int w = 0; w < workers; ++w) {
    const int lo = begin + w * chunk;
    const int hi = std::min(end, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&, lo, hi]() {
      try {
        for (int i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace pq
