#pragma once

#include <cstddef>
#include <functional>

namespace latentlens {

/// Worker count: LATENTLENS_WORKERS if set (>= 1), otherwise the hardware
/// concurrency.
std::size_t default_workers();

/// Runs body(i) for i in [0, n) on up to `workers` threads (0 means
/// default_workers()). Indices are partitioned into contiguous chunks. If
/// any body throws, the exception from the lowest failing index is
/// rethrown after all workers join.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body,
                  std::size_t workers = 0);

}  // namespace latentlens
