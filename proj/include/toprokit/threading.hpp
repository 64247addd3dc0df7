#pragma once

#include <cstddef>
#include <functional>

namespace toprokit {

// Worker cap shared by all parallel loops. 0 means "use hardware concurrency".
// The CLI sets this from --threads or TOPROKIT_THREADS; library default is 1.
void set_thread_count(std::size_t n);
std::size_t thread_count();

// Runs fn(i) for i in [0, n). Work is split into contiguous chunks, one per
// worker, so the partition depends only on (n, thread_count) and results that
// are written to disjoint slots are identical for any worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace toprokit
