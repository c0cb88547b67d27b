#pragma once

#include <cstddef>
#include <functional>

namespace curvebench {

// Global worker cap for sample-parallel loops. 1 by default; the CLI raises
// it via --threads. All reductions in this codebase run in fixed sample
// order after the parallel phase, so results do not depend on this value.
void set_max_threads(int n);
int max_threads();

// Runs fn(i) for i in [0, count). Work is split into contiguous chunks over
// at most max_threads() workers; fn must write only to per-index slots.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn);

}  // namespace curvebench
