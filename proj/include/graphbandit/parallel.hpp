#pragma once

#include <cstddef>
#include <functional>

namespace graphbandit {

// Worker count: GRAPHBANDIT_THREADS if set (>= 1), else hardware concurrency.
std::size_t thread_count();

// Runs body(i) for i in [0, n). Iterations must be independent; results are
// identical for any thread count as long as body is a pure function of i.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace graphbandit
