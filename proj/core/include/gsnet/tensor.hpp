#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace gsnet {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

class Tensor;

namespace detail {

struct TensorImpl;

// One recorded op. `backward` reads the output's gradient and data and
// accumulates into the inputs that require gradients.
struct Node {
  std::uint64_t seq = 0;
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  std::function<void(const TensorImpl& out)> backward;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // sized like data iff requires_grad
  bool requires_grad = false;
  std::shared_ptr<Node> grad_fn;

  void ensure_grad();
  void accumulate_grad(std::span<const double> g);
};

}  // namespace detail

// Dense row-major tensor of doubles with optional reverse-mode tracking.
// Copies share storage; use clone() for an independent buffer.
class Tensor {
 public:
  Tensor();

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double value);

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const { return shape().at(axis); }
  std::size_t size() const;

  std::span<double> data();
  std::span<const double> data() const;
  double item() const;
  double& at(std::initializer_list<std::size_t> index);
  double at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const;
  void set_requires_grad(bool on);
  bool has_grad() const;
  std::span<double> grad();
  std::span<const double> grad() const;
  void zero_grad();

  // Copies data (never the graph); the clone is a leaf.
  Tensor clone() const;
  // Leaf sharing nothing with the graph but with the same data values.
  Tensor detach() const;

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

  const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

// Runs reverse accumulation from a scalar. Gradients of leaves accumulate;
// the graph behind `loss` is released afterwards.
void backward(const Tensor& loss);

// Whether newly executed ops are recorded. Thread-local.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

namespace detail {

// Builds an op result; records a node when grad mode is on and any input
// requires gradients.
Tensor make_result(Shape shape, std::vector<double> data,
                   std::vector<std::shared_ptr<TensorImpl>> inputs,
                   std::function<void(const TensorImpl& out)> backward);

}  // namespace detail

}  // namespace gsnet
