#pragma once

#include <cstddef>
#include <functional>

namespace rwlab {

// Worker count used by the engines. Results never depend on it: work is cut
// into fixed-size blocks and reduced in block order.
void set_threads(int n);
int threads();

// Runs fn(b) for b in [0, nblocks) on up to threads() workers.
void parallel_for(size_t nblocks, const std::function<void(size_t)>& fn);

}  // namespace rwlab
