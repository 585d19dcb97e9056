#include "fedseg/numerics/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "fedseg/error.hpp"

namespace fedseg::numerics {

namespace {

thread_local bool tls_grad_enabled = true;
std::atomic<bool> g_backward_fault{false};

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Buffer& detail::TensorImpl::ensure_grad() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  return grad;
}

Tensor::Tensor(Shape shape, double fill) : Tensor(shape, Buffer(shape_numel(shape), fill)) {}

Tensor::Tensor(Shape shape, const std::vector<double>& values)
    : Tensor(std::move(shape), Buffer(values.begin(), values.end())) {}

Tensor::Tensor(Shape shape, std::initializer_list<double> values) : Tensor(std::move(shape), Buffer(values)) {}

Tensor::Tensor(Shape shape, Buffer values) {
  for (std::size_t e : shape) {
    if (e == 0) throw ShapeError("tensor extents must be positive, got " + shape_string(shape));
  }
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("tensor of shape " + shape_string(shape) + " needs " +
                     std::to_string(shape_numel(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
  impl_ = std::make_shared<detail::TensorImpl>();
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{1}, Buffer{value}); }

detail::TensorImpl& Tensor::impl() const {
  if (!impl_) throw UsageError("use of an undefined tensor");
  return *impl_;
}

const Shape& Tensor::shape() const { return impl().shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + shape_string(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const { return impl().data.size(); }

std::span<const double> Tensor::data() const { return impl().data; }

std::span<double> Tensor::mutable_data() { return impl().data; }

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape()));
  return impl().data[0];
}

bool Tensor::requires_grad() const { return impl().requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
  impl().requires_grad = on;
  return *this;
}

bool Tensor::has_grad() const { return !impl().grad.empty(); }

std::span<const double> Tensor::grad() const { return impl().grad; }

void Tensor::zero_grad() { impl().grad.clear(); }

bool Tensor::has_graph() const { return impl().grad_fn != nullptr; }

Tensor Tensor::detach() const {
  return Tensor(impl().shape, impl().data);
}

Tensor Tensor::make_result(std::string op, Shape shape, Buffer values,
                           std::vector<Tensor> inputs, detail::BackwardFn backward) {
  Tensor out(std::move(shape), std::move(values));
  if (!tls_grad_enabled) return out;
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (!any) return out;
  auto node = std::make_shared<detail::Node>();
  node->op = std::move(op);
  node->inputs.reserve(inputs.size());
  for (auto& in : inputs) node->inputs.push_back(in.impl_);
  node->backward = std::move(backward);
  out.impl_->grad_fn = std::move(node);
  out.impl_->requires_grad = true;
  return out;
}

void Tensor::backward() const {
  auto& root = impl();
  if (!root.grad_fn) throw UsageError("backward() on a tensor with no recorded graph");
  if (root.data.size() != 1) {
    throw UsageError("backward() needs a scalar, got shape " + shape_string(root.shape));
  }
  if (!std::isfinite(root.data[0])) throw UsageError("backward() on a non-finite loss");

  // Iterative post-order DFS: `order` ends up topologically sorted with every
  // node after the nodes producing its inputs.
  std::vector<detail::TensorImpl*> order;
  std::unordered_set<const detail::TensorImpl*> visited;
  std::vector<std::pair<detail::TensorImpl*, std::size_t>> stack;
  stack.emplace_back(&root, 0);
  visited.insert(&root);
  while (!stack.empty()) {
    auto& [t, next] = stack.back();
    if (t->grad_fn && next < t->grad_fn->inputs.size()) {
      detail::TensorImpl* child = t->grad_fn->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
      continue;
    }
    order.push_back(t);
    stack.pop_back();
  }

  root.ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::TensorImpl* t = *it;
    if (!t->grad_fn) continue;
    t->ensure_grad();
    for (auto& in : t->grad_fn->inputs) {
      if (in->requires_grad) in->ensure_grad();
    }
    t->grad_fn->backward(*t);
  }
}

bool grad_enabled() noexcept { return tls_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(tls_grad_enabled) { tls_grad_enabled = false; }

NoGradGuard::~NoGradGuard() { tls_grad_enabled = previous_; }

std::vector<std::string> recorded_ops(const Tensor& root) {
  std::vector<std::string> names;
  if (!root.defined()) return names;
  std::unordered_set<const detail::TensorImpl*> seen;
  std::vector<const detail::TensorImpl*> stack{&root.impl()};
  while (!stack.empty()) {
    const auto* t = stack.back();
    stack.pop_back();
    if (!t->grad_fn || !seen.insert(t).second) continue;
    names.push_back(t->grad_fn->op);
    for (const auto& in : t->grad_fn->inputs) stack.push_back(in.get());
  }
  std::sort(names.begin(), names.end());
  names.erase(std::unique(names.begin(), names.end()), names.end());
  return names;
}

void testing::set_backward_fault(bool on) noexcept { g_backward_fault.store(on); }

bool testing::backward_fault() noexcept { return g_backward_fault.load(); }

}  // namespace fedseg::numerics
