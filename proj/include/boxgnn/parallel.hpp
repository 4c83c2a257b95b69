#pragma once

#include <cstddef>
#include <functional>

namespace boxgnn::parallel {

/// Upper bound on worker threads used by parallel_for. 1 means strictly serial.
void set_max_threads(std::size_t n);
std::size_t max_threads();

/// Splits [0, n) into contiguous chunks and runs body(begin, end) on each.
/// Callers must only write disjoint outputs per index.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace boxgnn::parallel
