#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "gsnet/tensor.hpp"

namespace gsnet {

using NamedTensor = std::pair<std::string, Tensor>;
using ParamList = std::vector<NamedTensor>;

// SGD with momentum and coupled weight decay:
//   v <- momentum * v + (g + weight_decay * w);  w <- w - lr * v
struct SgdState {
  double learning_rate = 0.001;
  double momentum = 0.9;
  double weight_decay = 0.0001;
  std::size_t step_count = 0;
  std::vector<std::vector<double>> velocity;  // lazily sized to params
};

// Applies one update and zeroes the gradients. Throws StateError when a
// parameter has no gradient buffer or the parameter list changed shape.
void sgd_step(SgdState& state, std::vector<Tensor>& params);
void sgd_step(SgdState& state, ParamList& params);

// base_lr * (1 - step/total)^power; steps past total give 0.
double poly_lr(double base_lr, std::size_t step, std::size_t total_steps, double power);

}  // namespace gsnet
