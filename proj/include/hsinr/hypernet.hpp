#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "hsinr/cellmlp.hpp"
#include "hsinr/tensor.hpp"

namespace hsinr {

/// Shape of the hypernetwork H(X) that maps an RGB patch to an S x S grid of
/// cell MLP parameter vectors.
struct HyperNetConfig {
  std::size_t grid = 16;          // S
  std::size_t patch_size = 64;    // P
  std::vector<std::size_t> channels{64, 128, 128, 256, 256};
  std::size_t estimator_blocks = 2;
  double slope = kDefaultLeakySlope;
  MlpLayout mlp;

  /// log2(P / S). Throws ConfigError unless S and P are powers of two with S | P.
  std::size_t downsampling_layers() const;
  /// Channel depth of the extractor output (3 when no downsampling happens).
  std::size_t feature_channels() const;
  void validate() const;
};

/// Convolution weights plus the geometry they are applied with.
template <typename T>
struct ConvLayer {
  Tensor<T> kernel;  // [C_out x C_in x k x k]
  Tensor<T> bias;    // [C_out]
  std::size_t stride = 1;
  std::size_t padding = 0;

  Tensor<T> operator()(const Tensor<T>& x) const;
};

/// Spatially-adaptive normalization block: instance-normalize the input,
/// modulate it by scale/shift maps convolved from the extractor features,
/// then a 3x3 convolution and Leaky-ReLU.
template <typename T>
struct EstimatorBlock {
  ConvLayer<T> gamma;
  ConvLayer<T> beta;
  ConvLayer<T> conv;
};

template <typename T>
struct HyperNetWeights {
  std::vector<ConvLayer<T>> extractor;
  std::vector<EstimatorBlock<T>> estimator;
  ConvLayer<T> head;  // 1x1, feature_channels -> mlp.total()

  /// Every trainable tensor in declaration order (the checkpoint order).
  std::vector<Tensor<T>> parameters() const;
  std::vector<std::string> parameter_names() const;
};

/// Kaiming fan-in initialization for extractor and estimator convolutions,
/// zero head weights and N(0, head_bias_std^2) head biases.
template <typename T>
HyperNetWeights<T> init_hypernet(const HyperNetConfig& cfg, std::mt19937_64& rng, double head_bias_std = 1e-2);

/// Flat parameter vectors for S x S cells, stored as [S*S x per_cell_len];
/// row i*S + j belongs to cell (i, j).
template <typename T>
struct ParameterGrid {
  std::size_t grid = 0;
  std::size_t per_cell_len = 0;
  Tensor<T> cells;

  Tensor<T> cell(std::size_t i, std::size_t j) const;
};

/// Half-open pixel rectangle [row0, row1) x [col0, col1).
struct CellRegion {
  std::size_t row0, row1, col0, col1;
};

/// Region of an H x W image governed by cell (i, j) of an S x S grid.
CellRegion cell_region(std::size_t i, std::size_t j, std::size_t grid, std::size_t height, std::size_t width);

/// Stride-2 convolutions (each followed by Leaky-ReLU) from P x P down to S x S.
template <typename T>
Tensor<T> extract_features(const Tensor<T>& rgb, const HyperNetConfig& cfg, const HyperNetWeights<T>& weights);

/// Size-preserving estimator blocks followed by the 1x1 head; the channel vector
/// at grid position (i, j) becomes cell (i, j)'s parameters.
template <typename T>
ParameterGrid<T> estimate_params(const Tensor<T>& features, const HyperNetConfig& cfg,
                                 const HyperNetWeights<T>& weights);

template <typename T>
ParameterGrid<T> build_grid(const Tensor<T>& rgb, const HyperNetConfig& cfg, const HyperNetWeights<T>& weights);

}  // namespace hsinr
