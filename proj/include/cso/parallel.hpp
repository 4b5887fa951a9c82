#pragma once

#include <functional>

namespace cso {

// Worker cap from CSO_THREADS (default: hardware concurrency, at least 1).
int worker_count();
void set_worker_count(int n);

// Runs fn(i) for i in [0, n) over contiguous chunks. Each index is handled by
// exactly one worker, so writes to per-index slots are deterministic.
void parallel_for(int n, const std::function<void(int)>& fn);

}  // namespace cso
