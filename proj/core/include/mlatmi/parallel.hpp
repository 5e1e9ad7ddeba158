#pragma once

#include <cstddef>
#include <functional>

namespace mlatmi {

// 0 = library default (all hardware threads).
void set_thread_count(int threads);
int thread_count();

// Calls fn(i) for i in [0, n) across the configured threads. Each index must
// write only to its own outputs.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

// Keeps large per-epoch temporaries on the heap instead of fresh mmap pages
// (glibc only; no-op elsewhere). Call once at startup.
void configure_allocator();

// Pairwise summation; the result does not depend on thread count.
double pairwise_sum(const double* values, std::size_t n);

}  // namespace mlatmi
