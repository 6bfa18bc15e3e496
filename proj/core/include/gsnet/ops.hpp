#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "gsnet/tensor.hpp"

namespace gsnet {

// ---- linear algebra -------------------------------------------------------

// [M,K] x [K,N] -> [M,N].
Tensor matmul(const Tensor& a, const Tensor& b);

// Batched: [N,M,K] x [N,K,P] -> [N,M,P]; with transpose_b, b is [N,P,K].
Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b = false);

// y = x W + b over the last axis. weight is [Din,Dout], bias [Dout] or absent.
Tensor linear(const Tensor& x, const Tensor& weight, const std::optional<Tensor>& bias);

// Cross-correlation with zero padding. input [B,Cin,H,W], kernel [Cout,Cin,kh,kw],
// bias [Cout] or absent.
Tensor conv2d(const Tensor& input, const Tensor& kernel, const std::optional<Tensor>& bias, std::size_t stride,
              std::size_t padding);

// ---- normalisation / activation -------------------------------------------

Tensor softmax(const Tensor& x, std::size_t axis);

// Normalises over the last axis, then applies gamma/beta ([D] each).
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

enum class ActivationKind { kRelu, kSigmoid };
Tensor activation(const Tensor& x, ActivationKind kind);
inline Tensor relu(const Tensor& x) { return activation(x, ActivationKind::kRelu); }
inline Tensor sigmoid(const Tensor& x) { return activation(x, ActivationKind::kSigmoid); }

// While alive, every ReLU on this thread folds the sign pattern of its input
// into signature(). Two evaluations with equal signatures took the same
// linear piece of every ReLU. Probes nest.
class ReluSignProbe {
 public:
  ReluSignProbe();
  ~ReluSignProbe();
  ReluSignProbe(const ReluSignProbe&) = delete;
  ReluSignProbe& operator=(const ReluSignProbe&) = delete;

  std::uint64_t signature() const { return hash_; }

 private:
  std::uint64_t hash_;
  std::uint64_t* previous_;
};

// ---- elementwise / reductions ---------------------------------------------

// b broadcasts against a: after left-padding b's shape with ones, every axis
// of b is 1 or equal to a's. Result has a's shape.
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);

// Sum of all elements, shape [1].
Tensor sum(const Tensor& x);
// Mean over the last axis; the axis is dropped (rank-1 input gives [1]).
Tensor mean_last(const Tensor& x);

// Mean softmax cross-entropy against integer labels. logits [B,n].
Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> labels);

// ---- layout ----------------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& order);
Tensor concat(const std::vector<Tensor>& xs, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length);

// out.flat[i] = x.flat[index[i]]; gradients scatter-add back.
Tensor gather(const Tensor& x, std::shared_ptr<const std::vector<std::size_t>> index, Shape out_shape);

}  // namespace gsnet
