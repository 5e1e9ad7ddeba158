#include "mlatmi/parallel.hpp"

#include <exception>

#include <omp.h>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace mlatmi {

namespace {
int g_threads = 0;
}

void set_thread_count(int threads) {
  g_threads = threads < 0 ? 0 : threads;
  if (g_threads > 0) omp_set_num_threads(g_threads);
}

int thread_count() { return g_threads > 0 ? g_threads : omp_get_max_threads(); }

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const auto count = static_cast<long long>(n);
  if (thread_count() <= 1 || omp_in_parallel() || n < 2) {
    for (long long i = 0; i < count; ++i) fn(static_cast<std::size_t>(i));
    return;
  }
  // Exceptions must not escape an OpenMP region; keep the first and rethrow.
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 1) num_threads(thread_count())
  for (long long i = 0; i < count; ++i) {
    try {
      fn(static_cast<std::size_t>(i));
    } catch (...) {
#pragma omp critical(mlatmi_parallel_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
}

void configure_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

double pairwise_sum(const double* values, std::size_t n) {
  if (n <= 8) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += values[i];
    return s;
  }
  const std::size_t half = n / 2;
  return pairwise_sum(values, half) + pairwise_sum(values + half, n - half);
}

}  // namespace mlatmi
