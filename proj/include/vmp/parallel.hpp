#pragma once

#include <cstddef>
#include <functional>

namespace vmp {

// Worker count comes from VMP_THREADS, else hardware_concurrency.
std::size_t worker_count();

// Runs body(begin, end) over a static partition of [0, n). Each index is
// visited by exactly one worker, so results written to per-index slots do not
// depend on the thread count. The first exception thrown by any worker is
// rethrown on the calling thread.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body);

} // namespace vmp
