#pragma once

#include <cstddef>
#include <functional>

namespace yolo4 {

/// Worker count used by the compute kernels. Defaults to 1.
void set_num_threads(int n);
int num_threads() noexcept;

/// Runs fn(i) for i in [0, count), split into contiguous chunks across the
/// configured worker count. Each index is visited exactly once.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn);

}  // namespace yolo4
