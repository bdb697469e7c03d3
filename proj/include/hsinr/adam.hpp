#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "hsinr/tensor.hpp"

namespace hsinr {

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Moment buffers for one parameter vector.
template <typename T>
struct AdamState {
  std::uint64_t step_count = 0;
  std::vector<T> m;
  std::vector<T> v;
  AdamHyper hyper;

  AdamState() = default;
  explicit AdamState(std::size_t n, AdamHyper h = {}) : m(n, T(0)), v(n, T(0)), hyper(h) {}
};

/// Bias-corrected Adam update in place:
///   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2,
///   p <- p - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
template <typename T>
void adam_step(std::span<T> params, std::span<const T> grads, AdamState<T>& state, double lr);

/// Applies adam_step to a parameter tensor using its accumulated gradient.
template <typename T>
void adam_step(Tensor<T>& param, AdamState<T>& state, double lr) {
  adam_step<T>(param.data_mut(), param.grad(), state, lr);
}

extern template void adam_step<float>(std::span<float>, std::span<const float>, AdamState<float>&, double);
extern template void adam_step<double>(std::span<double>, std::span<const double>, AdamState<double>&, double);

}  // namespace hsinr
