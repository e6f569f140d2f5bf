#pragma once

// Process-wide worker-thread budget. Parallel sections assign work by index
// into pre-sized outputs, so results never depend on the thread count.

#include <cstdint>
#include <functional>

namespace silp::runtime {

// 0 restores the default (hardware concurrency).
void set_threads(int n);
int threads();

void parallel_for(int64_t n, const std::function<void(int64_t)>& body);

}  // namespace silp::runtime
