#include "chemoflow/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <stdexcept>
#include <thread>
#include <vector>

namespace chemoflow {

namespace {
std::atomic<int> g_threads{1};
constexpr int kMinChunk = 256;
}  // namespace

void set_thread_count(int threads) {
  if (threads < 1) throw std::invalid_argument("thread count must be >= 1");
  g_threads.store(threads);
}

int thread_count() { return g_threads.load(); }

void parallel_for(int first, int last, const std::function<void(int, int)>& body) {
  const int n = last - first;
  if (n <= 0) return;
  const int workers = std::min(thread_count(), std::max(1, n / kMinChunk));
  if (workers <= 1) {
    body(first, last);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(workers - 1);
  const int chunk = (n + workers - 1) / workers;
  for (int w = 1; w < workers; ++w) {
    const int b = first + w * chunk;
    const int e = std::min(last, b + chunk);
    if (b < e) pool.emplace_back([&body, b, e] { body(b, e); });
  }
  body(first, std::min(last, first + chunk));
}

}  // namespace chemoflow
