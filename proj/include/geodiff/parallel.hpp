#pragma once

#include <cstddef>
#include <functional>

namespace geodiff {

/// Worker cap: the ENGINE_THREADS environment variable when set to a positive
/// integer, otherwise the hardware concurrency (at least 1).
int worker_count();

/// Runs fn(i) for i in [0, n) on up to worker_count() threads. The first
/// exception thrown by any task is rethrown after all workers join.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace geodiff
