#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "gsnet/diagnostics.hpp"
#include "gsnet/error.hpp"
#include "gsnet/ops.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace gsnet;
using testutil::random_tensor;
using testutil::to_vec;

namespace {

void expect_grad_ok(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double tol = 1e-6) {
  const auto report = grad_check([&](const Tensor& t) { return testutil::weighted_sum(f(t)); }, x);
  EXPECT_LT(report.max_rel_error(), tol);
}

}  // namespace

TEST(Ops, MatmulMatchesOracle) {
  auto a = random_tensor({4, 6}, 1), b = random_tensor({6, 3}, 2);
  EXPECT_LT(testutil::max_abs_diff(to_vec(matmul(a, b)), oracle::matmul(to_vec(a), to_vec(b), 4, 6, 3)), 1e-14);
  EXPECT_THROW(matmul(a, a), DimensionError);
}

TEST(Ops, BmmTransposeMatchesExplicitTranspose) {
  auto a = random_tensor({2, 3, 4}, 3), b = random_tensor({2, 5, 4}, 4);
  auto direct = bmm(a, b, true);
  auto bt = permute(b, {0, 2, 1});
  EXPECT_LT(testutil::max_abs_diff(to_vec(direct), to_vec(bmm(a, bt))), 1e-14);
}

TEST(Ops, Conv2dMatchesDirectLoopsAcrossGeometries) {
  struct Case {
    std::size_t cin, cout, h, k, stride, pad;
  };
  for (const auto& c : {Case{1, 2, 5, 3, 1, 1}, Case{3, 4, 6, 3, 2, 1}, Case{2, 3, 4, 1, 1, 0}, Case{2, 2, 8, 2, 2, 0},
                        Case{3, 1, 7, 3, 2, 0}}) {
    auto x = random_tensor({2, c.cin, c.h, c.h}, 5), w = random_tensor({c.cout, c.cin, c.k, c.k}, 6);
    auto b = random_tensor({c.cout}, 7);
    auto y = conv2d(x, w, b, c.stride, c.pad);
    auto expect = oracle::conv2d(to_vec(x), 2, c.cin, c.h, c.h, to_vec(w), c.cout, c.k, to_vec(b), c.stride, c.pad);
    EXPECT_LT(testutil::max_abs_diff(to_vec(y), expect), 1e-13) << c.cin << "," << c.k << "," << c.stride;
  }
}

TEST(Ops, Conv2dRejectsChannelMismatch) {
  EXPECT_THROW(conv2d(random_tensor({1, 2, 4, 4}, 1), random_tensor({3, 1, 3, 3}, 2), std::nullopt, 1, 1),
               DimensionError);
}

TEST(Ops, SoftmaxRowsMatchOracleAndSumToOne) {
  auto x = random_tensor({3, 5}, 8, -20.0, 20.0);
  auto y = softmax(x, 1);
  for (std::size_t r = 0; r < 3; ++r) {
    std::vector<double> row(x.data().begin() + r * 5, x.data().begin() + r * 5 + 5);
    auto expect = oracle::softmax(row);
    double total = 0.0;
    for (std::size_t j = 0; j < 5; ++j) {
      EXPECT_NEAR(y.data()[r * 5 + j], expect[j], 1e-15);
      total += y.data()[r * 5 + j];
    }
    EXPECT_NEAR(total, 1.0, 1e-14);
  }
  // softmax over a middle axis
  auto z = softmax(random_tensor({2, 4, 3}, 9), 1);
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t j = 0; j < 3; ++j) {
      double total = 0.0;
      for (std::size_t i = 0; i < 4; ++i) total += z.data()[(b * 4 + i) * 3 + j];
      EXPECT_NEAR(total, 1.0, 1e-14);
    }
}

TEST(Ops, LayerNormNormalisesLastAxis) {
  auto x = random_tensor({4, 6}, 10, -3.0, 5.0);
  auto y = layer_norm(x, Tensor::full({6}, 1.0), Tensor::zeros({6}));
  for (std::size_t r = 0; r < 4; ++r) {
    double mean = 0.0, var = 0.0;
    for (std::size_t j = 0; j < 6; ++j) mean += y.data()[r * 6 + j];
    mean /= 6;
    for (std::size_t j = 0; j < 6; ++j) var += std::pow(y.data()[r * 6 + j] - mean, 2);
    var /= 6;
    EXPECT_NEAR(mean, 0.0, 1e-12);
    EXPECT_NEAR(var, 1.0, 1e-4);  // eps = 1e-5 shrinks it slightly
  }
}

TEST(Ops, CrossEntropyMatchesLogSoftmax) {
  auto logits = random_tensor({3, 4}, 11, -2.0, 2.0);
  const std::vector<std::size_t> labels{0, 3, 2};
  double expect = 0.0;
  for (std::size_t r = 0; r < 3; ++r) {
    std::vector<double> row(logits.data().begin() + r * 4, logits.data().begin() + r * 4 + 4);
    expect -= std::log(oracle::softmax(row)[labels[r]]);
  }
  EXPECT_NEAR(cross_entropy(logits, labels).item(), expect / 3, 1e-14);
  const std::vector<std::size_t> bad{0, 4, 1};
  EXPECT_THROW(cross_entropy(logits, bad), InputError);
}

TEST(Ops, BroadcastAddAndMul) {
  auto a = random_tensor({2, 3, 4}, 12);
  auto b = random_tensor({3, 1}, 13);
  auto s = add(a, b), p = mul(a, b);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      for (std::size_t k = 0; k < 4; ++k) {
        const std::size_t f = (i * 3 + j) * 4 + k;
        EXPECT_DOUBLE_EQ(s.data()[f], a.data()[f] + b.data()[j]);
        EXPECT_DOUBLE_EQ(p.data()[f], a.data()[f] * b.data()[j]);
      }
  EXPECT_THROW(add(a, random_tensor({2, 4}, 1)), DimensionError);
}

TEST(Ops, PermuteRoundTripAndConcatSlice) {
  auto x = random_tensor({2, 3, 4, 5}, 14);
  auto back = permute(permute(x, {0, 2, 3, 1}), {0, 3, 1, 2});
  EXPECT_EQ(to_vec(back), to_vec(x));
  auto y = random_tensor({2, 1, 4, 5}, 15);
  auto cat = concat({x, y}, 1);
  EXPECT_EQ(cat.shape(), (Shape{2, 4, 4, 5}));
  EXPECT_EQ(to_vec(slice(cat, 1, 3, 1)), to_vec(y));
  EXPECT_EQ(to_vec(slice(cat, 1, 0, 3)), to_vec(x));
  try {
    concat({x, random_tensor({2, 1, 3, 5}, 1)}, 1);
    FAIL();
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("1"), std::string::npos);
  }
}

TEST(Ops, MeanLastAndSum) {
  auto x = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  auto m = mean_last(x);
  EXPECT_EQ(m.shape(), (Shape{2}));
  EXPECT_DOUBLE_EQ(m.data()[0], 2.0);
  EXPECT_DOUBLE_EQ(m.data()[1], 5.0);
  EXPECT_DOUBLE_EQ(sum(x).item(), 21.0);
}

TEST(OpsGrad, EveryOpMatchesFiniteDifferences) {
  auto w = random_tensor({5, 3}, 20);
  expect_grad_ok([&](const Tensor& x) { return matmul(x, w); }, random_tensor({4, 5}, 21));
  expect_grad_ok([&](const Tensor& x) { return matmul(w, x); }, random_tensor({3, 2}, 22));
  auto b3 = random_tensor({2, 4, 3}, 23);
  expect_grad_ok([&](const Tensor& x) { return bmm(x, b3, true); }, random_tensor({2, 5, 3}, 24));
  expect_grad_ok([&](const Tensor& x) { return bmm(b3, x, true); }, random_tensor({2, 6, 3}, 25));
  expect_grad_ok([&](const Tensor& x) { return linear(x, w, random_tensor({3}, 26)); }, random_tensor({2, 5}, 27));
  expect_grad_ok([&](const Tensor& k) { return conv2d(random_tensor({1, 2, 5, 5}, 28), k, std::nullopt, 2, 1); },
                 random_tensor({3, 2, 3, 3}, 29));
  expect_grad_ok([&](const Tensor& x) { return conv2d(x, random_tensor({3, 2, 3, 3}, 30), std::nullopt, 1, 1); },
                 random_tensor({2, 2, 4, 4}, 31));
  expect_grad_ok([&](const Tensor& b) { return conv2d(random_tensor({1, 2, 3, 3}, 32), random_tensor({2, 2, 1, 1}, 33), b, 1, 0); },
                 random_tensor({2}, 34));
  expect_grad_ok([](const Tensor& x) { return softmax(x, 1); }, random_tensor({2, 4, 3}, 35));
  expect_grad_ok([](const Tensor& x) { return layer_norm(x, random_tensor({4}, 36), random_tensor({4}, 37)); },
                 random_tensor({3, 4}, 38));
  expect_grad_ok([](const Tensor& g) { return layer_norm(random_tensor({3, 4}, 39), g, random_tensor({4}, 37)); },
                 random_tensor({4}, 40));
  // keep away from the kink at zero
  expect_grad_ok([](const Tensor& x) { return relu(x); }, random_tensor({10}, 41, 0.1, 1.0));
  expect_grad_ok([](const Tensor& x) { return relu(x); }, random_tensor({10}, 42, -1.0, -0.1));
  expect_grad_ok([](const Tensor& x) { return sigmoid(x); }, random_tensor({10}, 43, -4.0, 4.0));
  auto bb = random_tensor({3, 1}, 44);
  expect_grad_ok([&](const Tensor& x) { return mul(x, bb); }, random_tensor({2, 3, 2}, 45));
  expect_grad_ok([&](const Tensor& b) { return mul(random_tensor({2, 3, 2}, 46), b); }, random_tensor({3, 1}, 47));
  expect_grad_ok([&](const Tensor& b) { return add(random_tensor({2, 3, 2}, 46), b); }, random_tensor({3, 2}, 48));
  expect_grad_ok([](const Tensor& x) { return mean_last(x); }, random_tensor({3, 5}, 49));
  const std::vector<std::size_t> labels{1, 0, 2};
  expect_grad_ok([&](const Tensor& x) { return cross_entropy(x, labels); }, random_tensor({3, 3}, 50));
  expect_grad_ok([](const Tensor& x) { return permute(x, {2, 0, 1}); }, random_tensor({2, 3, 4}, 51));
  expect_grad_ok([](const Tensor& x) { return slice(concat({x, x}, 1), 1, 1, 3); }, random_tensor({2, 2, 3}, 52));
}
