#include "hsinr/tensor.hpp"

#include <cmath>
#include <sstream>
#include <unordered_set>

#include "hsinr/errors.hpp"

namespace hsinr {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? " x " : "") << shape[i];
  os << ']';
  return os.str();
}

const char* to_string(Precision p) { return p == Precision::standard ? "standard" : "verification"; }

Precision parse_precision(const std::string& s) {
  if (s == "standard" || s == "f32" || s == "32") return Precision::standard;
  if (s == "verification" || s == "f64" || s == "64") return Precision::verification;
  throw ConfigError("unknown precision mode '" + s + "'");
}

namespace detail {

bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

namespace {

void check_shape(const Shape& shape) {
  if (shape.empty()) throw DimensionError("tensor shape must have at least one axis");
  for (auto d : shape)
    if (d == 0) throw DimensionError("tensor shape " + to_string(shape) + " has a zero-sized axis");
}

}  // namespace

template <typename T>
Tensor<T> make_result(const char* op, Shape shape, Buffer<T> value,
                      std::vector<Tensor<T>> inputs, std::function<void(Node<T>&)> backward) {
  for (std::size_t i = 0; i < value.size(); ++i) {
    if (!std::isfinite(value[i]))
      throw NumericError(std::string("non-finite value produced by ") + op + " at flat index " +
                         std::to_string(i));
  }
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  bool track = false;
  if (grad_mode()) {
    for (const auto& in : inputs) track = track || in.requires_grad();
  }
  if (track) {
    node->requires_grad = true;
    node->grad.assign(node->value.size(), T(0));
    node->parents.reserve(inputs.size());
    for (const auto& in : inputs) node->parents.push_back(in.node());
    node->backward = std::move(backward);
  }
  return Tensor<T>::from_node(std::move(node));
}

template Tensor<float> make_result(const char*, Shape, Buffer<float>, std::vector<Tensor<float>>,
                                   std::function<void(Node<float>&)>);
template Tensor<double> make_result(const char*, Shape, Buffer<double>, std::vector<Tensor<double>>,
                                    std::function<void(Node<double>&)>);

}  // namespace detail

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill, bool requires_grad) {
  detail::check_shape(shape);
  node_ = std::make_shared<detail::Node<T>>();
  node_->value.assign(numel(shape), fill);
  node_->shape = std::move(shape);
  set_requires_grad(requires_grad);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, Buffer<T> values, bool requires_grad) {
  detail::check_shape(shape);
  if (numel(shape) != values.size())
    throw DimensionError("shape " + to_string(shape) + " needs " + std::to_string(numel(shape)) +
                         " values, got " + std::to_string(values.size()));
  node_ = std::make_shared<detail::Node<T>>();
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  set_requires_grad(requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::from_node(std::shared_ptr<detail::Node<T>> node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

template <typename T>
const Shape& Tensor<T>::shape() const {
  return node_->shape;
}

template <typename T>
std::size_t Tensor<T>::dim(std::size_t axis) const {
  if (axis >= node_->shape.size())
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + to_string(node_->shape));
  return node_->shape[axis];
}

template <typename T>
std::size_t Tensor<T>::size() const {
  return node_->value.size();
}

template <typename T>
std::span<const T> Tensor<T>::data() const {
  return node_->value;
}

template <typename T>
std::span<T> Tensor<T>::data_mut() {
  return node_->value;
}

template <typename T>
T Tensor<T>::item() const {
  if (size() != 1) throw DimensionError("item() on tensor of shape " + to_string(shape()));
  return node_->value[0];
}

template <typename T>
bool Tensor<T>::requires_grad() const {
  return node_ && node_->requires_grad;
}

template <typename T>
void Tensor<T>::set_requires_grad(bool on) {
  node_->requires_grad = on;
  if (on)
    node_->grad.assign(node_->value.size(), T(0));
  else
    node_->grad.clear();
}

template <typename T>
std::span<const T> Tensor<T>::grad() const {
  if (!requires_grad()) throw InputError("tensor does not track gradients");
  return node_->grad;
}

template <typename T>
std::span<T> Tensor<T>::grad_mut() {
  if (!requires_grad()) throw InputError("tensor does not track gradients");
  return node_->grad;
}

template <typename T>
void Tensor<T>::zero_grad() {
  if (requires_grad()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
}

template <typename T>
void Tensor<T>::backward() const {
  if (size() != 1) throw DimensionError("backward() needs a scalar, got shape " + to_string(shape()));
  if (!requires_grad()) return;

  // Iterative post-order DFS gives a topological order with inputs first.
  std::vector<detail::Node<T>*> order;
  std::unordered_set<detail::Node<T>*> seen;
  std::vector<std::pair<detail::Node<T>*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      auto* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  node_->grad[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward) (*it)->backward(**it);
  }
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return Tensor(node_->shape, node_->value, false);
}

template <typename T>
const char* Tensor<T>::op_name() const {
  return node_->op;
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace hsinr
