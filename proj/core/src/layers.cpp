#include "gsnet/layers.hpp"

#include <cmath>

namespace gsnet {

Tensor he_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::vector<double> data(numel(shape));
  for (auto& v : data) v = rng.uniform(-bound, bound);
  return Tensor::from_data(std::move(shape), std::move(data), true);
}

void fill(Tensor& t, double value) {
  for (auto& v : t.data()) v = value;
}

LinearParams LinearParams::init(std::size_t din, std::size_t dout, bool with_bias, Rng& rng) {
  LinearParams p{he_uniform({din, dout}, din, rng), std::nullopt};
  if (with_bias) p.bias = Tensor::zeros({dout}, true);
  return p;
}

void LinearParams::collect(const std::string& prefix, ParamList& out) const {
  out.emplace_back(prefix + ".weight", weight);
  if (bias) out.emplace_back(prefix + ".bias", *bias);
}

Conv2dParams Conv2dParams::init(std::size_t cin, std::size_t cout, std::size_t kernel, std::size_t stride,
                                std::size_t padding, bool with_bias, Rng& rng) {
  Conv2dParams p{he_uniform({cout, cin, kernel, kernel}, cin * kernel * kernel, rng), std::nullopt, stride, padding};
  if (with_bias) p.bias = Tensor::zeros({cout}, true);
  return p;
}

void Conv2dParams::collect(const std::string& prefix, ParamList& out) const {
  out.emplace_back(prefix + ".weight", weight);
  if (bias) out.emplace_back(prefix + ".bias", *bias);
}

LayerNormParams LayerNormParams::init(std::size_t dim) {
  return {Tensor::full({dim}, 1.0, true), Tensor::zeros({dim}, true), 1e-5};
}

void LayerNormParams::collect(const std::string& prefix, ParamList& out) const {
  out.emplace_back(prefix + ".gamma", gamma);
  out.emplace_back(prefix + ".beta", beta);
}

}  // namespace gsnet
