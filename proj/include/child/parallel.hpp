#pragma once

#include <cstddef>
#include <functional>

namespace child {

/// Worker count: CHILD_NUM_THREADS if set and positive, else hardware concurrency.
unsigned num_threads();

/// Runs body(begin, end) over contiguous chunks of [0, n) on up to num_threads()
/// threads. Results must not depend on the chunking.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace child
