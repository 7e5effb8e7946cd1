#pragma once

#include <cstddef>
#include <functional>

namespace su11 {

/// Worker count: SU11_THREADS if set and positive, else hardware concurrency.
int thread_count();

/// Runs body(i) for i in [0, n) on up to `threads` workers (0 = thread_count()).
/// Indices are split into contiguous blocks; the first exception is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body, int threads = 0);

}  // namespace su11
