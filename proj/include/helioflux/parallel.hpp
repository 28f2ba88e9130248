#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace helioflux {

/// Runs body(worker, begin, end) over `workers` contiguous chunks of [0, count).
/// Chunk boundaries depend only on (count, workers). The first exception
/// thrown by any worker is rethrown on the calling thread.
template <class Body>
void parallel_chunks(std::size_t count, int workers, Body&& body) {
  const std::size_t w = static_cast<std::size_t>(std::max(1, workers));
  const std::size_t n = std::min<std::size_t>(w, std::max<std::size_t>(count, 1));
  auto bounds = [&](std::size_t k) { return count * k / n; };
  if (n == 1) {
    body(std::size_t{0}, std::size_t{0}, count);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  pool.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    pool.emplace_back([&, k] {
      try {
        body(k, bounds(k), bounds(k + 1));
      } catch (...) {
        errors[k] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

/// Calls fn(i) for every i in [0, count) across `workers` threads.
template <class Fn>
void parallel_for(std::size_t count, int workers, Fn&& fn) {
  parallel_chunks(count, workers, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) fn(i);
  });
}

}  // namespace helioflux
