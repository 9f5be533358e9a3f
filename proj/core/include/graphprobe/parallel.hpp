#pragma once

#include <cstddef>
#include <functional>

namespace graphprobe {

/// Worker count used by parallel_for when callers pass 0. Defaults to the
/// hardware concurrency; set to 1 for deterministic single-threaded runs.
void set_default_threads(unsigned threads);
unsigned default_threads();

/// Runs fn(i) for i in [0, count) on up to `threads` workers. Each index is
/// visited exactly once; callers must write results to per-index slots.
/// The first exception thrown by any worker is rethrown on the caller.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn,
                  unsigned threads = 0);

}  // namespace graphprobe
