#pragma once

#include <cstddef>
#include <functional>

namespace aisf {

// Runs fn(0..n-1) on up to `workers` threads and joins. Each index must write
// only its own output slot, so results do not depend on scheduling. The first
// exception (lowest index) is rethrown after all workers finish.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

}  // namespace aisf
