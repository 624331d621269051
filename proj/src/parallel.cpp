#include "parallel.hpp"

#include <algorithm>
#include <atomic>
#include <thread>
#include <vector>

namespace evuav {

namespace {
std::atomic<int> g_threads{1};
constexpr std::size_t kMinPerChunk = 256;
}  // namespace

void set_thread_count(int n) { g_threads.store(std::max(1, n)); }

int thread_count() { return g_threads.load(); }

int chunk_count(std::size_t n) {
  const auto by_size = static_cast<int>((n + kMinPerChunk - 1) / kMinPerChunk);
  return std::max(1, std::min(thread_count(), by_size));
}

void parallel_chunks(std::size_t n, const std::function<void(int, std::size_t, std::size_t)>& fn) {
  const int chunks = chunk_count(n);
  if (chunks == 1) {
    fn(0, 0, n);
    return;
  }
  const std::size_t step = (n + chunks - 1) / chunks;
  std::vector<std::jthread> workers;
  workers.reserve(chunks - 1);
  for (int c = 1; c < chunks; ++c) {
    const std::size_t b = std::min(n, c * step);
    const std::size_t e = std::min(n, b + step);
    workers.emplace_back([&fn, c, b, e] { fn(c, b, e); });
  }
  fn(0, 0, std::min(n, step));
}

}  // namespace evuav
