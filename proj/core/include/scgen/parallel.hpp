#pragma once

#include <cstdint>
#include <functional>

namespace scgen {

// Worker cap: SCGEN_THREADS when set to a positive integer, otherwise the
// number of logical cores.
int worker_threads();

// Override for tests and benchmarks; 0 restores the environment default.
void set_worker_threads(int threads);

// Runs fn(i) for i in [0, count) over contiguous chunks. Callers must keep
// per-index outputs disjoint; results then do not depend on the thread count.
void parallel_for(std::int64_t count, const std::function<void(std::int64_t)>& fn);

}  // namespace scgen
