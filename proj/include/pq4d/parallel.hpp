#pragma once

#include <functional>

namespace pq {

/// Number of worker threads to use. Honors the PQ_THREADS environment
/// variable; unset, empty, or "0" means one worker per hardware thread.
int worker_count();

/// Runs fn(i) for i in [begin, end) across worker_count() threads using a
/// static block partition. Each index is processed exactly once and writers
/// own disjoint output slots, so results are identical for any thread count.
void parallel_for(int begin, int end, const std::function<void(int)>& fn);

}  // namespace pq
