#pragma once

#include <cstddef>
#include <functional>

namespace peghole {

// Number of worker threads to use: PEGHOLE_THREADS env var if set,
// otherwise hardware concurrency.
int max_threads();

// Runs fn(i) for i in [0, n). Work is split into contiguous chunks so that
// results are independent of the thread count; nested calls run inline.
// fn must write to disjoint state per index.
void parallel_for(size_t n, const std::function<void(size_t)>& fn);

}  // namespace peghole
