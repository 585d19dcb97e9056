#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <new>
#include <vector>

namespace fedseg::numerics {

/// Cache-line aligned storage. Vectorized kernels peel unaligned heads, so
/// without a fixed base alignment the summation order (and the last bits of
/// results) would depend on where the allocator placed a buffer.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};

  AlignedAllocator() noexcept = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlignment)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlignment); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

using Buffer = std::vector<double, AlignedAllocator<double>>;

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {

struct Node;

struct TensorImpl {
  Shape shape;
  Buffer data;
  Buffer grad;  // empty until the first accumulation
  bool requires_grad = false;
  std::shared_ptr<Node> grad_fn;

  Buffer& ensure_grad();
};

/// Backward rule of one recorded operation. It reads the output's gradient
/// (and, if needed, its forward values) and accumulates into `inputs`.
using BackwardFn = std::function<void(const TensorImpl& output)>;

struct Node {
  std::string op;
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  BackwardFn backward;
};

}  // namespace detail

/// Dense row-major float64 array with optional reverse-mode gradient tracking.
///
/// A Tensor is a handle: copies share storage and graph history. Use
/// `detach()` or `clone()` for an independent copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, const std::vector<double>& values);
  Tensor(Shape shape, Buffer values);
  Tensor(Shape shape, std::initializer_list<double> values);

  static Tensor scalar(double value);

  bool defined() const noexcept { return impl_ != nullptr; }

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  /// Direct write access. Writing to a tensor that already feeds a recorded
  /// graph invalidates that graph's saved intermediates.
  std::span<double> mutable_data();
  double item() const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on);

  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();

  bool has_graph() const;
  /// Populates grad buffers of every requires_grad tensor reachable from this
  /// scalar. Gradients accumulate across calls.
  void backward() const;

  /// Same values, no history, no gradient requirement.
  Tensor detach() const;

  /// Builds an operation result. The output records a graph node only when
  /// gradient mode is on and some input requires a gradient.
  static Tensor make_result(std::string op, Shape shape, Buffer values,
                            std::vector<Tensor> inputs, detail::BackwardFn backward);

  detail::TensorImpl& impl() const;

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}

  std::shared_ptr<detail::TensorImpl> impl_;
};

/// Sorted, distinct names of the operations recorded in `root`'s graph.
std::vector<std::string> recorded_ops(const Tensor& root);

bool grad_enabled() noexcept;

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

namespace testing {
/// Corrupts the sigmoid backward rule while set. Used as a negative control
/// for the gradient checker.
void set_backward_fault(bool on) noexcept;
bool backward_fault() noexcept;
}  // namespace testing

}  // namespace fedseg::numerics
