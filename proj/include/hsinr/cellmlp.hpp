#pragma once

#include <cstddef>
#include <vector>

#include "hsinr/ops.hpp"
#include "hsinr/tensor.hpp"

namespace hsinr {

/// Position of one affine layer inside a flat cell parameter vector.
struct LayerSlice {
  std::size_t fan_in = 0;
  std::size_t fan_out = 0;
  std::size_t weight_offset = 0;  // fan_in x fan_out, row-major
  std::size_t bias_offset = 0;    // fan_out
};

/// Architecture of the per-cell MLP and how its parameters tile a flat vector.
///
/// Layout order is fixed: layer 0 weights, layer 0 bias, layer 1 weights, ...
/// Checkpoints and the hypernetwork head depend on it.
class MlpLayout {
 public:
  MlpLayout() = default;
  MlpLayout(std::size_t in_dim, std::size_t hidden_width, std::size_t out_dim, std::size_t n_hidden = 5);

  std::size_t in_dim() const { return in_dim_; }
  std::size_t hidden_width() const { return hidden_width_; }
  std::size_t n_hidden() const { return n_hidden_; }
  std::size_t out_dim() const { return out_dim_; }
  std::size_t total() const { return total_; }
  const std::vector<LayerSlice>& layers() const { return layers_; }

  bool operator==(const MlpLayout&) const = default;

 private:
  std::size_t in_dim_ = 0, hidden_width_ = 0, n_hidden_ = 0, out_dim_ = 0, total_ = 0;
  std::vector<LayerSlice> layers_;
};

/// One layer's raw parameters as sliced out of the flat vector. The effective
/// weight is `weight * weight_scale` with weight_scale = 1/sqrt(fan_in).
template <typename T>
struct LayerParams {
  Tensor<T> weight;  // [fan_in x fan_out]
  Tensor<T> bias;    // [fan_out]
  double weight_scale = 1.0;
};

/// Slices a flat cell vector into per-layer tensors. Differentiable.
template <typename T>
std::vector<LayerParams<T>> unpack(const Tensor<T>& flat, const MlpLayout& layout);

/// Inverse of unpack on values (no gradient history).
template <typename T>
Tensor<T> pack(const std::vector<LayerParams<T>>& layers, const MlpLayout& layout);

/// Hidden layers: affine + Leaky-ReLU; output layer: affine + sigmoid.
/// x is [batch x in_dim]; result is [batch x out_dim] with values in (0, 1).
template <typename T>
Tensor<T> mlp_forward(const Tensor<T>& x, const std::vector<LayerParams<T>>& layers,
                      double slope = kDefaultLeakySlope);

/// Builds the [h*w x (3 + enc_dim)] MLP input: per pixel, the RGB value followed
/// by its coordinate encoding. rgb is [3 x h x w], enc is [h x w x enc_dim].
template <typename T>
Tensor<T> pixel_inputs(const Tensor<T>& rgb, const Tensor<T>& enc);

/// Runs one cell's MLP over every pixel of its patch.
/// rgb is [3 x h x w]; enc is [h x w x enc_dim] holding the encodings of the
/// pixels' global coordinates; result is [L x h x w].
template <typename T>
Tensor<T> evaluate_patch(const Tensor<T>& rgb, const Tensor<T>& enc, const Tensor<T>& flat,
                         const MlpLayout& layout, double slope = kDefaultLeakySlope);

}  // namespace hsinr
