#pragma once

#include <cstddef>
#include <functional>

namespace evuav {

// Process-wide worker count for the data-parallel loops. 1 means everything
// runs on the calling thread, which is the bitwise-reproducible mode.
void set_thread_count(int n);
int thread_count();

// Splits [0, n) into at most thread_count() contiguous chunks and calls
// fn(chunk_index, begin, end) for each. Chunk boundaries depend only on n and
// the thread count, so per-chunk partial sums reduce deterministically.
void parallel_chunks(std::size_t n, const std::function<void(int, std::size_t, std::size_t)>& fn);

// Number of chunks parallel_chunks(n, ...) will produce.
int chunk_count(std::size_t n);

template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  parallel_chunks(n, [&](int, std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) fn(i);
  });
}

}  // namespace evuav
