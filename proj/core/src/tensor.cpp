#include "gsnet/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>
#include <unordered_set>

#include "gsnet/error.hpp"

namespace gsnet {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

thread_local bool g_grad_enabled = true;
std::atomic<std::uint64_t> g_next_seq{1};

void check_shape(const Shape& shape) {
  for (auto e : shape) {
    if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_to_string(shape));
  }
}

}  // namespace

namespace detail {

void TensorImpl::ensure_grad() {
  if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
}

void TensorImpl::accumulate_grad(std::span<const double> g) {
  ensure_grad();
  for (std::size_t i = 0; i < g.size(); ++i) grad[i] += g[i];
}

Tensor make_result(Shape shape, std::vector<double> data, std::vector<std::shared_ptr<TensorImpl>> inputs,
                   std::function<void(const TensorImpl& out)> backward_fn) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  bool track = g_grad_enabled &&
               std::any_of(inputs.begin(), inputs.end(), [](const auto& in) { return in->requires_grad; });
  if (track) {
    impl->requires_grad = true;
    auto node = std::make_shared<Node>();
    node->seq = g_next_seq.fetch_add(1, std::memory_order_relaxed);
    node->inputs = std::move(inputs);
    node->backward = std::move(backward_fn);
    impl->grad_fn = std::move(node);
  }
  return Tensor(std::move(impl));
}

}  // namespace detail

Tensor::Tensor() : impl_(std::make_shared<detail::TensorImpl>()) {
  impl_->shape = {1};
  impl_->data = {0.0};
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  check_shape(shape);
  auto n = numel(shape);
  return from_data(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
  check_shape(shape);
  if (numel(shape) != data.size()) {
    throw DimensionError("data length " + std::to_string(data.size()) + " does not match shape " +
                         shape_to_string(shape));
  }
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  Tensor t(std::move(impl));
  t.set_requires_grad(requires_grad);
  return t;
}

Tensor Tensor::scalar(double value) { return from_data({1}, {value}); }

const Shape& Tensor::shape() const { return impl_->shape; }
std::size_t Tensor::size() const { return impl_->data.size(); }
std::span<double> Tensor::data() { return impl_->data; }
std::span<const double> Tensor::data() const { return impl_->data; }

double Tensor::item() const {
  if (size() != 1) throw InputError("item() on tensor of shape " + shape_to_string(shape()));
  return impl_->data[0];
}

namespace {
std::size_t flat_index(const Shape& shape, std::initializer_list<std::size_t> index) {
  if (index.size() != shape.size()) throw DimensionError("index rank mismatch for shape " + shape_to_string(shape));
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    if (i >= shape[axis]) throw DimensionError("index out of range for shape " + shape_to_string(shape));
    flat = flat * shape[axis] + i;
    ++axis;
  }
  return flat;
}
}  // namespace

double& Tensor::at(std::initializer_list<std::size_t> index) { return impl_->data[flat_index(shape(), index)]; }
double Tensor::at(std::initializer_list<std::size_t> index) const { return impl_->data[flat_index(shape(), index)]; }

bool Tensor::requires_grad() const { return impl_->requires_grad; }

void Tensor::set_requires_grad(bool on) {
  impl_->requires_grad = on;
  if (on) {
    impl_->ensure_grad();
  } else {
    impl_->grad.clear();
  }
}

bool Tensor::has_grad() const { return impl_->requires_grad && impl_->grad.size() == impl_->data.size(); }
std::span<double> Tensor::grad() { return impl_->grad; }
std::span<const double> Tensor::grad() const { return impl_->grad; }

void Tensor::zero_grad() {
  if (impl_->requires_grad) impl_->grad.assign(impl_->data.size(), 0.0);
}

Tensor Tensor::clone() const { return from_data(shape(), impl_->data, false); }
Tensor Tensor::detach() const { return clone(); }

void backward(const Tensor& loss) {
  if (loss.size() != 1) {
    throw InputError("backward() needs a scalar loss, got shape " + shape_to_string(loss.shape()));
  }
  const auto& root = loss.impl();
  if (!root->requires_grad) return;

  // Every impl reachable through recorded nodes.
  std::vector<detail::TensorImpl*> order;
  std::vector<detail::TensorImpl*> stack{root.get()};
  std::unordered_set<detail::TensorImpl*> seen{root.get()};
  while (!stack.empty()) {
    auto* t = stack.back();
    stack.pop_back();
    if (!t->grad_fn) continue;
    order.push_back(t);
    for (const auto& in : t->grad_fn->inputs) {
      if (in->requires_grad && seen.insert(in.get()).second) stack.push_back(in.get());
    }
  }
  // Reverse execution order.
  std::sort(order.begin(), order.end(),
            [](const auto* a, const auto* b) { return a->grad_fn->seq > b->grad_fn->seq; });

  root->ensure_grad();
  root->grad[0] += 1.0;
  for (auto* t : order) {
    t->ensure_grad();
    t->grad_fn->backward(*t);
  }
  // Release the graph and intermediate gradients; leaves keep theirs.
  // Nodes own their inputs, so keep them alive until every impl is visited.
  std::vector<std::shared_ptr<detail::Node>> released;
  released.reserve(order.size());
  for (auto* t : order) {
    released.push_back(std::move(t->grad_fn));
    if (t != root.get()) {
      t->grad.clear();
      t->requires_grad = false;
    }
  }
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

}  // namespace gsnet
