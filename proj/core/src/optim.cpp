#include "gsnet/optim.hpp"

#include <cmath>

#include "gsnet/error.hpp"

namespace gsnet {

void sgd_step(SgdState& state, std::vector<Tensor>& params) {
  if (state.velocity.empty()) {
    for (const auto& p : params) state.velocity.emplace_back(p.size(), 0.0);
  }
  if (state.velocity.size() != params.size()) {
    throw StateError("sgd_step: optimizer holds " + std::to_string(state.velocity.size()) + " velocity buffers for " +
                     std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].has_grad()) {
      throw StateError("sgd_step: parameter " + std::to_string(i) + " has no gradient");
    }
    if (state.velocity[i].size() != params[i].size()) {
      throw StateError("sgd_step: velocity buffer " + std::to_string(i) + " does not match its parameter");
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i].data();
    auto g = params[i].grad();
    auto& v = state.velocity[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      v[j] = state.momentum * v[j] + (g[j] + state.weight_decay * w[j]);
      w[j] -= state.learning_rate * v[j];
    }
    params[i].zero_grad();
  }
  ++state.step_count;
}

void sgd_step(SgdState& state, ParamList& params) {
  std::vector<Tensor> flat;
  flat.reserve(params.size());
  for (auto& [name, t] : params) {
    if (!t.has_grad()) throw StateError("sgd_step: parameter '" + name + "' has no gradient");
    flat.push_back(t);
  }
  sgd_step(state, flat);
}

double poly_lr(double base_lr, std::size_t step, std::size_t total_steps, double power) {
  if (total_steps == 0 || step >= total_steps) return 0.0;
  const double frac = 1.0 - static_cast<double>(step) / static_cast<double>(total_steps);
  return base_lr * std::pow(frac, power);
}

}  // namespace gsnet
