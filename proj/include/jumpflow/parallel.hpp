#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace jumpflow {

/// Paths are processed in fixed-size chunks; reductions combine chunk
/// results in chunk order, so results never depend on the worker count.
inline constexpr std::size_t kChunkSize = 2048;

namespace detail {
inline std::size_t &worker_override() {
  static std::size_t n = 0;
  return n;
}
} // namespace detail

/// Force a worker count (0 restores the environment/default policy).
inline void set_worker_count(std::size_t n) { detail::worker_override() = n; }

/// Worker count: explicit override, else JUMPFLOW_THREADS, else all cores.
inline std::size_t worker_count() {
  if (detail::worker_override() > 0)
    return detail::worker_override();
  if (const char *env = std::getenv("JUMPFLOW_THREADS")) {
    try {
      const long n = std::stol(env);
      if (n > 0)
        return static_cast<std::size_t>(n);
    } catch (...) {
    }
  }
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

inline std::size_t chunk_count(std::size_t n) {
  return (n + kChunkSize - 1) / kChunkSize;
}

/**
 * Calls fn(chunk, begin, end) for every chunk of [0, n). Chunks are pulled
 * from a shared counter by the workers. The first exception (lowest chunk
 * index) is rethrown after all workers finish.
 */
template <class Fn> void for_each_chunk(std::size_t n, Fn &&fn) {
  const std::size_t chunks = chunk_count(n);
  const std::size_t workers = std::min(worker_count(), chunks);
  if (workers <= 1) {
    for (std::size_t c = 0; c < chunks; ++c)
      fn(c, c * kChunkSize, std::min(n, (c + 1) * kChunkSize));
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(chunks);
  auto body = [&] {
    for (;;) {
      const std::size_t c = next.fetch_add(1);
      if (c >= chunks)
        return;
      try {
        fn(c, c * kChunkSize, std::min(n, (c + 1) * kChunkSize));
      } catch (...) {
        errors[c] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w)
    pool.emplace_back(body);
  body();
  for (auto &t : pool)
    t.join();
  for (auto &e : errors)
    if (e)
      std::rethrow_exception(e);
}

/// Parallel loop over indices [0, n); fn(i) must only write to slot i.
template <class Fn> void parallel_for(std::size_t n, Fn &&fn) {
  for_each_chunk(n, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i)
      fn(i);
  });
}

/// Deterministic reduction: map each chunk to a T, then fold in chunk order.
template <class T, class Map, class Fold>
T chunked_reduce(std::size_t n, T init, Map &&map, Fold &&fold) {
  std::vector<T> partial(chunk_count(n), init);
  for_each_chunk(n, [&](std::size_t c, std::size_t begin, std::size_t end) {
    partial[c] = map(begin, end);
  });
  T acc = std::move(init);
  for (auto &p : partial)
    acc = fold(std::move(acc), p);
  return acc;
}

} // namespace jumpflow
