#pragma once

#include <functional>

namespace chemoflow {

/// Number of worker threads used by row-parallel loops. 1 means fully serial.
void set_thread_count(int threads);
int thread_count();

/// Runs body(begin, end) over contiguous chunks of [first, last). Each index is
/// visited by exactly one call; writes must be disjoint across indices. Chunk
/// boundaries depend only on the range and the thread count, so results of
/// per-index computations do not depend on scheduling.
void parallel_for(int first, int last, const std::function<void(int, int)>& body);

}  // namespace chemoflow
