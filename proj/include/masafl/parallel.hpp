#pragma once

#include <cstddef>
#include <functional>

namespace masafl {

// Runs fn(0..n-1) on up to `threads` workers (0 = hardware concurrency).
// Each index must write only to its own slot, so results do not depend on
// scheduling. The exception from the lowest failing index is rethrown.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

}  // namespace masafl
