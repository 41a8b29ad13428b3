#pragma once

#include <cstddef>
#include <functional>

namespace bdp {

/// Number of worker threads used by library loops (default 1).
void set_thread_count(unsigned n);
unsigned thread_count();

/// Calls fn(i) for i in [0, n). Iterations are split into contiguous blocks;
/// callers write results by index so the outcome is independent of threading.
/// The first exception thrown by any iteration is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace bdp
