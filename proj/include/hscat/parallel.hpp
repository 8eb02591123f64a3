#pragma once

#include <cstddef>
#include <functional>

namespace hscat {

// Worker cap used by parallel_for. 0 means hardware concurrency.
void set_thread_count(unsigned n);
unsigned thread_count();

// Runs body(index) for index in [0, n). Work is split in contiguous chunks,
// so results must not depend on scheduling order.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace hscat
