#pragma once

#include <cstddef>
#include <vector>

#include "hsinr/tensor.hpp"

namespace hsinr {

/// Periodic spatial encoding settings. With `enabled` false or `n_freqs` 0 the
/// encoder passes the normalized (x, y) through unchanged (the no-encoding ablation).
struct EncodingConfig {
  int n_freqs = 5;
  bool enabled = true;

  bool active() const { return enabled && n_freqs > 0; }
  /// 4N when active, otherwise 2.
  std::size_t dim() const { return active() ? 4 * static_cast<std::size_t>(n_freqs) : 2; }
};

/// gamma(p) = [gamma_0(p), ..., gamma_{N-1}(p)] with
/// gamma_k(p) = [cos(2^k pi x), sin(2^k pi x), cos(2^k pi y), sin(2^k pi y)].
struct EncodedCoords {
  std::vector<double> values;
};

/// Encodes one normalized coordinate; x and y must lie in [0, 1].
EncodedCoords encode_coord(double x, double y, const EncodingConfig& cfg);

/// Pixel-center coordinate of column `col` in a raster `extent` pixels wide.
inline double pixel_center(std::size_t index, std::size_t extent) {
  return (static_cast<double>(index) + 0.5) / static_cast<double>(extent);
}

/// [H x W x dim] grid; entry (r, c) encodes ((c + 0.5) / W, (r + 0.5) / H).
template <typename T>
Tensor<T> encode_grid(std::size_t width, std::size_t height, const EncodingConfig& cfg);

}  // namespace hsinr
