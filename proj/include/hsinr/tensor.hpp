#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace hsinr {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

/// Numeric precision of a run. Training uses `standard` (float), gradient
/// verification uses `verification` (double). A graph never mixes the two,
/// which the type system enforces: Tensor<float> and Tensor<double> do not interoperate.
enum class Precision { standard, verification };

template <typename T>
constexpr Precision precision_of();
template <>
constexpr Precision precision_of<float>() { return Precision::standard; }
template <>
constexpr Precision precision_of<double>() { return Precision::verification; }

const char* to_string(Precision p);
Precision parse_precision(const std::string& s);

/// Allocates on 64-byte boundaries. Eigen peels unaligned heads off its vectorized
/// reductions, so without a fixed alignment the summation order (and the last bit
/// of a result) would depend on where the allocator happened to place a buffer.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t alignment{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), alignment)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, alignment); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

template <typename T>
using Buffer = std::vector<T, AlignedAllocator<T>>;

namespace detail {

template <typename T>
struct Node {
  Shape shape;
  Buffer<T> value;
  Buffer<T> grad;  // sized iff requires_grad
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;
};

bool& grad_mode();

}  // namespace detail

/// Disables graph construction on this thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

inline bool grad_enabled() { return detail::grad_mode(); }

/// Dense row-major array with optional reverse-mode gradient tracking.
///
/// A Tensor is a shared handle: copies alias the same storage and graph node.
/// Results of differentiable operations remember their inputs; calling
/// backward() on a scalar result accumulates d(result)/d(leaf) into every
/// leaf that requires a gradient.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0), bool requires_grad = false);
  Tensor(Shape shape, Buffer<T> values, bool requires_grad = false);
  Tensor(Shape shape, const std::vector<T>& values, bool requires_grad = false)
      : Tensor(std::move(shape), Buffer<T>(values.begin(), values.end()), requires_grad) {}
  Tensor(Shape shape, std::initializer_list<T> values, bool requires_grad = false)
      : Tensor(std::move(shape), Buffer<T>(values), requires_grad) {}

  static Tensor scalar(T value) { return Tensor(Shape{1}, value); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim(std::size_t axis) const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;

  std::span<const T> data() const;
  /// Mutable access to storage. Only meaningful on leaves (parameters, inputs);
  /// mutating an interior node does not update what depends on it.
  std::span<T> data_mut();
  T item() const;

  bool requires_grad() const;
  void set_requires_grad(bool on);
  std::span<const T> grad() const;
  std::span<T> grad_mut();
  void zero_grad();

  /// Reverse sweep from this scalar through every recorded operation.
  void backward() const;

  /// Same storage values in a new leaf without history.
  Tensor detach() const;
  const char* op_name() const;

  const std::shared_ptr<detail::Node<T>>& node() const { return node_; }
  static Tensor from_node(std::shared_ptr<detail::Node<T>> node);

 private:
  std::shared_ptr<detail::Node<T>> node_;
};

namespace detail {

/// Builds an operation result. Checks every value is finite, and records the
/// backward closure when grad mode is on and any input tracks gradients.
template <typename T>
Tensor<T> make_result(const char* op, Shape shape, Buffer<T> value,
                      std::vector<Tensor<T>> inputs,
                      std::function<void(Node<T>&)> backward);

/// Gradient buffer of a parent, or nullptr when that parent does not track gradients.
template <typename T>
inline T* parent_grad(Node<T>& self, std::size_t i) {
  auto& p = *self.parents[i];
  return p.requires_grad ? p.grad.data() : nullptr;
}

}  // namespace detail

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace hsinr
