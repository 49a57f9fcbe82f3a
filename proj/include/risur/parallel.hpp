#pragma once

#include <cstdint>
#include <functional>

namespace risur {

// Worker count: RISUR_THREADS if set (clamped to >= 1), else hardware_concurrency.
int worker_count();

// Runs fn(begin, end) over a partition of [0, n). Chunks are assigned to
// workers statically so results land in disjoint, caller-owned slots and the
// overall result never depends on scheduling. With one worker the call is
// executed inline.
void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& fn);

}  // namespace risur
