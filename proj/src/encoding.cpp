#include "hsinr/encoding.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "hsinr/errors.hpp"

namespace hsinr {

EncodedCoords encode_coord(double x, double y, const EncodingConfig& cfg) {
  if (!(x >= 0.0 && x <= 1.0 && y >= 0.0 && y <= 1.0))
    throw DomainError("encode_coord: coordinate (" + std::to_string(x) + ", " + std::to_string(y) +
                      ") outside [0,1]^2");
  EncodedCoords out;
  if (!cfg.active()) {
    out.values = {x, y};
    return out;
  }
  out.values.reserve(cfg.dim());
  for (int k = 0; k < cfg.n_freqs; ++k) {
    const double w = std::ldexp(std::numbers::pi, k);
    out.values.push_back(std::cos(w * x));
    out.values.push_back(std::sin(w * x));
    out.values.push_back(std::cos(w * y));
    out.values.push_back(std::sin(w * y));
  }
  return out;
}

template <typename T>
Tensor<T> encode_grid(std::size_t width, std::size_t height, const EncodingConfig& cfg) {
  if (width == 0 || height == 0) throw DimensionError("encode_grid: empty raster");
  const std::size_t d = cfg.dim();
  std::vector<T> values(height * width * d);
  for (std::size_t r = 0; r < height; ++r)
    for (std::size_t c = 0; c < width; ++c) {
      const auto e = encode_coord(pixel_center(c, width), pixel_center(r, height), cfg);
      for (std::size_t i = 0; i < d; ++i) values[(r * width + c) * d + i] = static_cast<T>(e.values[i]);
    }
  return Tensor<T>({height, width, d}, std::move(values));
}

template Tensor<float> encode_grid<float>(std::size_t, std::size_t, const EncodingConfig&);
template Tensor<double> encode_grid<double>(std::size_t, std::size_t, const EncodingConfig&);

}  // namespace hsinr
