#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace semhint {

inline unsigned resolve_threads(unsigned requested) noexcept {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

/// Splits [0, rows) into contiguous blocks and runs `fn(begin, end)` on each.
/// Falls back to the calling thread when the work is too small to amortize
/// thread start-up.
template <class Fn>
void parallel_rows(std::size_t rows, std::size_t work_per_row, unsigned threads, Fn&& fn) {
  constexpr std::size_t kMinWorkPerThread = 1 << 14;
  std::size_t n = resolve_threads(threads);
  n = std::min(n, std::max<std::size_t>(1, rows * work_per_row / kMinWorkPerThread));
  n = std::min(n, rows);
  if (n <= 1) {
    fn(std::size_t{0}, rows);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(n - 1);
  const std::size_t block = (rows + n - 1) / n;
  for (std::size_t t = 1; t < n; ++t) {
    const std::size_t b = t * block;
    const std::size_t e = std::min(rows, b + block);
    if (b < e) pool.emplace_back([&fn, b, e] { fn(b, e); });
  }
  fn(std::size_t{0}, std::min(rows, block));
}

}  // namespace semhint
