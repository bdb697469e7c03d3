#pragma once

#include <cstddef>
#include <vector>

#include "hsinr/tensor.hpp"

namespace hsinr {

inline constexpr double kDefaultLeakySlope = 0.01;

/// Affine layer: out[i,j] = sum_k x[i,k] * w[k,j] + b[j].
/// x is [batch x in], w is [in x out], b is [out].
template <typename T>
Tensor<T> dense_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);

/// Strided 2-D cross-correlation (no kernel flip) of a single image.
/// x is [C_in x H x W], kernels [C_out x C_in x k x k], bias [C_out].
/// Only exact-fit geometries are accepted: (H + 2p - k) must be divisible by the stride.
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& kernels, const Tensor<T>& bias,
                         std::size_t stride, std::size_t padding);

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, double slope = kDefaultLeakySlope);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x);

/// Mean absolute difference. The subgradient at an exact tie is 0.
template <typename T>
Tensor<T> l1_loss(const Tensor<T>& pred, const Tensor<T>& target);

/// Sum of squared entries, as a scalar.
template <typename T>
Tensor<T> sum_squares(const Tensor<T>& x);

/// Per-channel normalization over the spatial axes of a [C x H x W] tensor.
template <typename T>
Tensor<T> instance_norm(const Tensor<T>& x, double eps = 1e-5);

/// Elementwise x * (1 + gamma) + beta, all three of identical shape.
template <typename T>
Tensor<T> modulate(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta);

template <typename T>
Tensor<T> scale(const Tensor<T>& x, double factor);

/// Same values, new shape of equal element count.
template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);

/// [rows x cols] -> [cols x rows].
template <typename T>
Tensor<T> transpose2d(const Tensor<T>& x);

/// Contiguous run of `numel(shape)` values starting at flat `offset`, reshaped.
template <typename T>
Tensor<T> slice(const Tensor<T>& x, std::size_t offset, Shape shape);

/// Counts writes into a rows x cols raster; a second write to any pixel is an error.
class CoverageMap {
 public:
  CoverageMap(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), count_(rows * cols, 0) {}
  /// Marks rows [r0, r1) x cols [c0, c1).
  void mark(std::size_t r0, std::size_t r1, std::size_t c0, std::size_t c1);
  bool complete() const;
  std::size_t covered() const;

 private:
  std::size_t rows_, cols_;
  std::vector<unsigned char> count_;
};

/// Places S x S cell outputs, each [L x cell_h x cell_w], into one [L x S*cell_h x S*cell_w]
/// tensor. cells[i * S + j] fills rows [i*cell_h, (i+1)*cell_h) and cols [j*cell_w, (j+1)*cell_w).
/// Every output pixel is checked to be written exactly once.
template <typename T>
Tensor<T> stitch_cells(const std::vector<Tensor<T>>& cells, std::size_t grid);

}  // namespace hsinr
