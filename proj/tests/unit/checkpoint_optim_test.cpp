#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "gsnet/checkpoint.hpp"
#include "gsnet/error.hpp"
#include "gsnet/model.hpp"
#include "gsnet/optim.hpp"
#include "test_util.hpp"

using namespace gsnet;
using testutil::random_tensor;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  auto d = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(d);
  std::filesystem::create_directories(d);
  return d;
}

}  // namespace

TEST(Checkpoint, EncodeDecodeRoundTrip) {
  ParamList in{{"a", random_tensor({2, 3}, 1)}, {"b.bias", random_tensor({5}, 2)}, {"s", Tensor::scalar(-0.0)}};
  auto bytes = encode_checkpoint(in);
  ASSERT_GE(bytes.size(), 4u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "GSNC");
  auto out = decode_checkpoint(bytes);
  ASSERT_EQ(out.size(), in.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    EXPECT_EQ(out[i].first, in[i].first);
    EXPECT_EQ(out[i].second.shape(), in[i].second.shape());
    EXPECT_EQ(testutil::to_vec(out[i].second), testutil::to_vec(in[i].second));
  }
  EXPECT_TRUE(std::signbit(out[2].second.item()));
  EXPECT_EQ(encode_checkpoint(out), bytes);
}

TEST(Checkpoint, RejectsCorruptBytes) {
  auto bytes = encode_checkpoint({{"w", random_tensor({4}, 3)}});
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bad_magic), IoError);
  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  EXPECT_THROW(decode_checkpoint(truncated), IoError);
  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_THROW(decode_checkpoint(trailing), IoError);
}

TEST(Checkpoint, RestoredModelForwardIsBitExact) {
  ModelConfig cfg;
  auto m = build_model(cfg, 11);
  testutil::jitter(m.parameters(), 12, 0.05);
  auto dir = temp_dir("gsnet_ckpt_test");
  save_checkpoint(dir / "m.ckpt", m.parameters());
  auto fresh = build_model(cfg, 99);
  auto params = fresh.parameters();
  restore_parameters(params, load_checkpoint(dir / "m.ckpt"));
  auto x = random_tensor({2, 1, 32, 32}, 13, 0.0, 1.0);
  NoGradGuard ng;
  EXPECT_EQ(testutil::to_vec(forward(m, x)), testutil::to_vec(forward(fresh, x)));
  save_checkpoint(dir / "again.ckpt", fresh.parameters());
  EXPECT_EQ(read_file_bytes(dir / "m.ckpt"), read_file_bytes(dir / "again.ckpt"));
  std::filesystem::remove_all(dir);
}

TEST(Checkpoint, MismatchNamesTensor) {
  ModelConfig cfg;
  auto full = build_model(cfg, 1);
  cfg.use_triple = false;
  auto reduced = build_model(cfg, 1);
  auto params = reduced.parameters();
  try {
    restore_parameters(params, full.parameters());
    FAIL() << "expected ConfigError";
  } catch (const ConfigError&) {
  }
  ParamList one{{"w", Tensor::zeros({2})}};
  try {
    restore_parameters(one, {{"w", Tensor::zeros({3})}});
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("w"), std::string::npos);
  }
  EXPECT_THROW(load_checkpoint("/nonexistent/dir/x.ckpt"), IoError);
}

TEST(Sgd, TwoStepsMatchUpdateRule) {
  const double lr = 0.1, mu = 0.9, wd = 0.01;
  auto w = Tensor::from_data({2}, {1.0, -2.0}, true);
  std::vector<Tensor> params{w};
  SgdState st{lr, mu, wd};
  double v[2] = {0, 0}, ref[2] = {1.0, -2.0};
  for (int step = 0; step < 2; ++step) {
    // loss = sum(w^2) / 2, so g = w
    backward(scale(sum(mul(w, w)), 0.5));
    for (int i = 0; i < 2; ++i) {
      v[i] = mu * v[i] + (ref[i] + wd * ref[i]);
      ref[i] -= lr * v[i];
    }
    sgd_step(st, params);
    EXPECT_DOUBLE_EQ(w.data()[0], ref[0]);
    EXPECT_DOUBLE_EQ(w.data()[1], ref[1]);
    for (double g : w.grad()) EXPECT_EQ(g, 0.0);
  }
  EXPECT_EQ(st.step_count, 2u);
  std::vector<Tensor> other{Tensor::zeros({3}, true), Tensor::zeros({1}, true)};
  EXPECT_THROW(sgd_step(st, other), StateError);
  std::vector<Tensor> no_grad{Tensor::zeros({2})};
  SgdState fresh;
  EXPECT_THROW(sgd_step(fresh, no_grad), StateError);
}

TEST(PolyLr, EndpointsAndShape) {
  EXPECT_DOUBLE_EQ(poly_lr(0.01, 0, 100, 0.9), 0.01);
  EXPECT_DOUBLE_EQ(poly_lr(0.01, 50, 100, 1.0), 0.005);
  EXPECT_NEAR(poly_lr(0.01, 50, 100, 0.9), 0.01 * std::pow(0.5, 0.9), 1e-18);
  EXPECT_EQ(poly_lr(0.01, 100, 100, 0.9), 0.0);
  EXPECT_EQ(poly_lr(0.01, 150, 100, 0.9), 0.0);
  double prev = 1.0;
  for (std::size_t s = 0; s <= 100; ++s) {
    double lr = poly_lr(1.0, s, 100, 0.9);
    EXPECT_LE(lr, prev);
    prev = lr;
  }
}
