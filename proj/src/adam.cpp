#include "hsinr/adam.hpp"

#include <cmath>
#include <string>

#include "hsinr/errors.hpp"

namespace hsinr {

template <typename T>
void adam_step(std::span<T> params, std::span<const T> grads, AdamState<T>& state, double lr) {
  if (params.size() != grads.size() || params.size() != state.m.size() || params.size() != state.v.size())
    throw DimensionError("adam_step: params " + std::to_string(params.size()) + ", grads " +
                         std::to_string(grads.size()) + ", moments " + std::to_string(state.m.size()) + "/" +
                         std::to_string(state.v.size()));
  ++state.step_count;
  const auto t = static_cast<double>(state.step_count);
  const T b1 = static_cast<T>(state.hyper.beta1);
  const T b2 = static_cast<T>(state.hyper.beta2);
  const T eps = static_cast<T>(state.hyper.epsilon);
  const T c1 = static_cast<T>(1.0 - std::pow(state.hyper.beta1, t));
  const T c2 = static_cast<T>(1.0 - std::pow(state.hyper.beta2, t));
  const T step = static_cast<T>(lr);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const T g = grads[i];
    state.m[i] = b1 * state.m[i] + (T(1) - b1) * g;
    state.v[i] = b2 * state.v[i] + (T(1) - b2) * g * g;
    const T m_hat = state.m[i] / c1;
    const T v_hat = state.v[i] / c2;
    params[i] -= step * m_hat / (std::sqrt(v_hat) + eps);
  }
}

template void adam_step<float>(std::span<float>, std::span<const float>, AdamState<float>&, double);
template void adam_step<double>(std::span<double>, std::span<const double>, AdamState<double>&, double);

}  // namespace hsinr
