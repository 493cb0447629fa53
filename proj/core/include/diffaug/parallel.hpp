#pragma once

#include <cstddef>
#include <functional>

namespace diffaug {

// Worker count for data-parallel loops. Reads DIFFAUG_WORKERS once; falls
// back to std::thread::hardware_concurrency().
size_t worker_count();

// Runs fn(begin, end) over a fixed contiguous partition of [0, n).
// Each index is processed by exactly one worker with the same per-index
// arithmetic regardless of the worker count, so results are identical in
// single- and multi-worker mode as long as the chunks write disjoint output.
void parallel_for(size_t n, const std::function<void(size_t, size_t)>& fn);

}  // namespace diffaug
