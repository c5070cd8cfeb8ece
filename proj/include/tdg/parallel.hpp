#pragma once

#include <cstddef>
#include <functional>

namespace tdg {

/// Worker count: TDG_THREADS if set and positive, else hardware concurrency.
unsigned worker_count();

/// Runs `fn(i)` for every i in [0, n). Work items must write disjoint
/// outputs; callers reduce per-item results in index order, so results do
/// not depend on the worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace tdg
