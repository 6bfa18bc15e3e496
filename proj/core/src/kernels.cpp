#include "gsnet/kernels.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace gsnet::kernels {

namespace {

unsigned initial_threads() {
  unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("GSNET_THREADS")) {
    try {
      long v = std::stol(env);
      if (v >= 1) return std::min<unsigned>(static_cast<unsigned>(v), hw);
    } catch (...) {
    }
  }
  return hw;
}

std::atomic<unsigned> g_threads{initial_threads()};

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

// Rows [r0, r1) of C += op(A) op(B).
void gemm_rows(std::size_t r0, std::size_t r1, std::size_t n, std::size_t k, std::size_t m, const double* a,
               bool trans_a, const double* b, bool trans_b, double* c) {
  const auto rows = static_cast<Eigen::Index>(r1 - r0);
  const auto ni = static_cast<Eigen::Index>(n), ki = static_cast<Eigen::Index>(k), mi = static_cast<Eigen::Index>(m);
  MutMap cm(c + r0 * n, rows, ni);
  if (!trans_a) {
    ConstMap am(a + r0 * k, rows, ki);
    if (!trans_b) {
      cm.noalias() += am * ConstMap(b, ki, ni);
    } else {
      cm.noalias() += am * ConstMap(b, ni, ki).transpose();
    }
  } else {
    // A is stored [k, m]; take columns r0..r1.
    auto at = ConstMap(a, ki, mi).middleCols(static_cast<Eigen::Index>(r0), rows).transpose();
    if (!trans_b) {
      cm.noalias() += at * ConstMap(b, ki, ni);
    } else {
      cm.noalias() += at * ConstMap(b, ni, ki).transpose();
    }
  }
}

}  // namespace

unsigned thread_count() { return g_threads.load(); }
void set_thread_count(unsigned n) { g_threads.store(std::max(1u, n)); }

void parallel_for(std::size_t n, std::size_t min_chunk, const std::function<void(std::size_t, std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(thread_count(), (n + min_chunk - 1) / std::max<std::size_t>(min_chunk, 1));
  if (workers <= 1) {
    if (n) fn(0, n);
    return;
  }
  const std::size_t chunk = (n + workers - 1) / workers;
  std::vector<std::jthread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) {
    std::size_t lo = w * chunk;
    std::size_t hi = std::min(n, lo + chunk);
    if (lo < hi) pool.emplace_back([&fn, lo, hi] { fn(lo, hi); });
  }
  fn(0, std::min(n, chunk));
}

void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a, bool trans_a, const double* b, bool trans_b,
          double* c, bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, 0.0);
  const std::size_t work_per_row = std::max<std::size_t>(1, n * k);
  const std::size_t min_rows = std::max<std::size_t>(1, (1u << 16) / work_per_row);
  parallel_for(m, min_rows, [&](std::size_t r0, std::size_t r1) { gemm_rows(r0, r1, n, k, m, a, trans_a, b, trans_b, c); });
}

}  // namespace gsnet::kernels
