#pragma once

#include <cstddef>
#include <functional>

namespace gsnet::kernels {

// C[M,N] (+)= op(A) * op(B), all row-major and contiguous.
// trans_a: A is stored [K,M]; trans_b: B is stored [N,K].
void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a, bool trans_a, const double* b, bool trans_b,
          double* c, bool accumulate);

// Number of worker threads kernels may use. Read once from GSNET_THREADS,
// defaulting to the hardware concurrency.
unsigned thread_count();
void set_thread_count(unsigned n);

// Splits [0, n) into contiguous chunks. Each index is handled by exactly one
// worker, so results do not depend on the thread count.
void parallel_for(std::size_t n, std::size_t min_chunk, const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace gsnet::kernels
