#include <gtest/gtest.h>

#include "gsnet/error.hpp"
#include "gsnet/kernels.hpp"
#include "gsnet/ops.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace gsnet;

TEST(Tensor, FactoriesKeepDataAndGradConsistent) {
  auto t = Tensor::zeros({2, 3}, true);
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.grad().size(), 6u);
  auto u = Tensor::full({4}, 2.5);
  EXPECT_FALSE(u.requires_grad());
  EXPECT_EQ(u.grad().size(), 0u);
  EXPECT_DOUBLE_EQ(u.data()[3], 2.5);
  EXPECT_THROW(Tensor::from_data({2, 2}, {1.0, 2.0, 3.0}), DimensionError);
  EXPECT_THROW(Tensor::zeros({2, 0}), DimensionError);
}

TEST(Tensor, CopiesShareStorageAndClonesDoNot) {
  auto a = Tensor::from_data({2}, {1.0, 2.0});
  Tensor b = a;
  b.data()[0] = 7.0;
  EXPECT_DOUBLE_EQ(a.data()[0], 7.0);
  Tensor c = a.clone();
  c.data()[1] = -1.0;
  EXPECT_DOUBLE_EQ(a.data()[1], 2.0);
  EXPECT_FALSE(c.same_storage(a));
}

TEST(Autodiff, SquareGivesTwiceInput) {
  auto x = Tensor::from_data({3}, {1.0, -2.0, 0.5}, true);
  backward(sum(mul(x, x)));
  EXPECT_DOUBLE_EQ(x.grad()[0], 2.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], -4.0);
  EXPECT_DOUBLE_EQ(x.grad()[2], 1.0);
}

TEST(Autodiff, ReusedInputAccumulates) {
  auto x = Tensor::from_data({2}, {3.0, 4.0}, true);
  auto y = add(x, x);
  backward(sum(add(y, x)));
  EXPECT_DOUBLE_EQ(x.grad()[0], 3.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], 3.0);
}

TEST(Autodiff, GraphIsReleasedAfterBackward) {
  auto x = Tensor::from_data({2}, {1.0, 1.0}, true);
  auto loss = sum(scale(x, 3.0));
  backward(loss);
  backward(loss);  // nothing left to propagate
  EXPECT_DOUBLE_EQ(x.grad()[0], 3.0);
}

TEST(Autodiff, NoGradGuardStopsRecording) {
  auto x = Tensor::from_data({2}, {1.0, 2.0}, true);
  {
    NoGradGuard guard;
    EXPECT_FALSE(grad_enabled());
    auto y = scale(x, 2.0);
    EXPECT_FALSE(y.requires_grad());
  }
  EXPECT_TRUE(grad_enabled());
  EXPECT_TRUE(scale(x, 2.0).requires_grad());
}

TEST(Autodiff, NonScalarBackwardIsRejected) {
  auto x = Tensor::from_data({2}, {1.0, 2.0}, true);
  EXPECT_THROW(backward(scale(x, 1.0)), InputError);
}

TEST(Kernels, GemmMatchesLoopOracleForAllLayouts) {
  const std::size_t m = 7, k = 5, n = 9;
  auto a = testutil::to_vec(testutil::random_tensor({m, k}, 1));
  auto b = testutil::to_vec(testutil::random_tensor({k, n}, 2));
  const auto expect = oracle::matmul(a, b, m, k, n);
  // transposed copies
  std::vector<double> at(k * m), bt(n * k);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) at[p * m + i] = a[i * k + p];
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = b[p * n + j];
  for (int ta = 0; ta < 2; ++ta)
    for (int tb = 0; tb < 2; ++tb) {
      std::vector<double> c(m * n, 1.0);
      kernels::gemm(m, n, k, ta ? at.data() : a.data(), ta, tb ? bt.data() : b.data(), tb, c.data(), false);
      EXPECT_LT(testutil::max_abs_diff(c, expect), 1e-13) << ta << tb;
      kernels::gemm(m, n, k, ta ? at.data() : a.data(), ta, tb ? bt.data() : b.data(), tb, c.data(), true);
      for (std::size_t i = 0; i < c.size(); ++i) EXPECT_NEAR(c[i], 2 * expect[i], 1e-12);
    }
}

TEST(Kernels, ThreadCountDoesNotChangeResults) {
  const std::size_t m = 300, k = 64, n = 48;
  auto a = testutil::to_vec(testutil::random_tensor({m, k}, 3));
  auto b = testutil::to_vec(testutil::random_tensor({k, n}, 4));
  const unsigned saved = kernels::thread_count();
  std::vector<double> c1(m * n), c4(m * n);
  kernels::set_thread_count(1);
  kernels::gemm(m, n, k, a.data(), false, b.data(), false, c1.data(), false);
  kernels::set_thread_count(4);
  kernels::gemm(m, n, k, a.data(), false, b.data(), false, c4.data(), false);
  kernels::set_thread_count(saved);
  EXPECT_LT(testutil::max_abs_diff(c1, c4), 1e-12);
}
