#pragma once

#include <cstddef>
#include <optional>
#include <string>

#include "gsnet/ops.hpp"
#include "gsnet/optim.hpp"
#include "gsnet/random.hpp"

namespace gsnet {

// Weights use fan-in scaled uniform init, U(-sqrt(6/fan_in), sqrt(6/fan_in));
// biases start at zero.
Tensor he_uniform(Shape shape, std::size_t fan_in, Rng& rng);

void fill(Tensor& t, double value);

struct LinearParams {
  Tensor weight;  // [Din, Dout]
  std::optional<Tensor> bias;

  static LinearParams init(std::size_t din, std::size_t dout, bool with_bias, Rng& rng);
  Tensor operator()(const Tensor& x) const { return linear(x, weight, bias); }
  void collect(const std::string& prefix, ParamList& out) const;
};

struct Conv2dParams {
  Tensor weight;  // [Cout, Cin, k, k]
  std::optional<Tensor> bias;
  std::size_t stride = 1;
  std::size_t padding = 0;

  static Conv2dParams init(std::size_t cin, std::size_t cout, std::size_t kernel, std::size_t stride,
                           std::size_t padding, bool with_bias, Rng& rng);
  Tensor operator()(const Tensor& x) const { return conv2d(x, weight, bias, stride, padding); }
  void collect(const std::string& prefix, ParamList& out) const;
};

struct LayerNormParams {
  Tensor gamma;
  Tensor beta;
  double eps = 1e-5;

  static LayerNormParams init(std::size_t dim);
  Tensor operator()(const Tensor& x) const { return layer_norm(x, gamma, beta, eps); }
  void collect(const std::string& prefix, ParamList& out) const;
};

}  // namespace gsnet
