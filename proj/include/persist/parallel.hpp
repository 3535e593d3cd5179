#pragma once

#include <cstddef>
#include <functional>

namespace persist {

// Runs fn(0..count-1) on up to `threads` workers. Each index owns its output
// slot, so results are identical to a sequential loop regardless of
// scheduling; the lowest-index exception (if any) is rethrown after join.
void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& fn);

// Worker count from the PERSIST_THREADS environment variable, falling back
// to the hardware concurrency.
int default_thread_count();

}  // namespace persist
