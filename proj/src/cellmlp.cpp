#include "hsinr/cellmlp.hpp"

#include <cmath>
#include <string>

#include "hsinr/errors.hpp"

namespace hsinr {

MlpLayout::MlpLayout(std::size_t in_dim, std::size_t hidden_width, std::size_t out_dim, std::size_t n_hidden)
    : in_dim_(in_dim), hidden_width_(hidden_width), n_hidden_(n_hidden), out_dim_(out_dim) {
  if (in_dim == 0 || hidden_width == 0 || out_dim == 0 || n_hidden == 0)
    throw LayoutError("MlpLayout: all dimensions must be positive");
  std::size_t offset = 0;
  std::size_t fan_in = in_dim;
  for (std::size_t l = 0; l <= n_hidden; ++l) {
    const std::size_t fan_out = l == n_hidden ? out_dim : hidden_width;
    LayerSlice s;
    s.fan_in = fan_in;
    s.fan_out = fan_out;
    s.weight_offset = offset;
    offset += fan_in * fan_out;
    s.bias_offset = offset;
    offset += fan_out;
    layers_.push_back(s);
    fan_in = fan_out;
  }
  total_ = offset;
}

template <typename T>
std::vector<LayerParams<T>> unpack(const Tensor<T>& flat, const MlpLayout& layout) {
  if (flat.rank() != 1 || flat.size() != layout.total())
    throw LayoutError("unpack: flat vector " + to_string(flat.shape()) + " does not match layout total " +
                      std::to_string(layout.total()));
  std::vector<LayerParams<T>> out;
  out.reserve(layout.layers().size());
  for (const auto& s : layout.layers()) {
    LayerParams<T> p;
    p.weight = slice(flat, s.weight_offset, {s.fan_in, s.fan_out});
    p.bias = slice(flat, s.bias_offset, {s.fan_out});
    p.weight_scale = 1.0 / std::sqrt(static_cast<double>(s.fan_in));
    out.push_back(std::move(p));
  }
  return out;
}

template <typename T>
Tensor<T> pack(const std::vector<LayerParams<T>>& layers, const MlpLayout& layout) {
  if (layers.size() != layout.layers().size())
    throw LayoutError("pack: expected " + std::to_string(layout.layers().size()) + " layers, got " +
                      std::to_string(layers.size()));
  std::vector<T> flat(layout.total());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& s = layout.layers()[l];
    const auto w = layers[l].weight.data();
    const auto b = layers[l].bias.data();
    if (w.size() != s.fan_in * s.fan_out || b.size() != s.fan_out)
      throw LayoutError("pack: layer " + std::to_string(l) + " has the wrong size");
    std::copy(w.begin(), w.end(), flat.begin() + static_cast<std::ptrdiff_t>(s.weight_offset));
    std::copy(b.begin(), b.end(), flat.begin() + static_cast<std::ptrdiff_t>(s.bias_offset));
  }
  return Tensor<T>({layout.total()}, std::move(flat));
}

template <typename T>
Tensor<T> mlp_forward(const Tensor<T>& x, const std::vector<LayerParams<T>>& layers, double slope) {
  if (layers.empty()) throw LayoutError("mlp_forward: no layers");
  Tensor<T> h = x;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& p = layers[l];
    h = dense_forward(h, scale(p.weight, p.weight_scale), p.bias);
    h = l + 1 < layers.size() ? leaky_relu(h, slope) : sigmoid(h);
  }
  return h;
}

template <typename T>
Tensor<T> pixel_inputs(const Tensor<T>& rgb, const Tensor<T>& enc) {
  if (rgb.rank() != 3 || rgb.dim(0) != 3 || enc.rank() != 3 || enc.dim(0) != rgb.dim(1) ||
      enc.dim(1) != rgb.dim(2))
    throw DimensionError("pixel_inputs: rgb " + to_string(rgb.shape()) + " and encoding " +
                         to_string(enc.shape()) + " disagree");
  const std::size_t h = rgb.dim(1), w = rgb.dim(2), d = enc.dim(2), n = h * w, in = 3 + d;
  auto xs = rgb.data();
  auto es = enc.data();
  std::vector<T> v(n * in);
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t c = 0; c < 3; ++c) v[p * in + c] = xs[c * n + p];
    for (std::size_t i = 0; i < d; ++i) v[p * in + 3 + i] = es[p * d + i];
  }
  return Tensor<T>({n, in}, std::move(v));
}

template <typename T>
Tensor<T> evaluate_patch(const Tensor<T>& rgb, const Tensor<T>& enc, const Tensor<T>& flat,
                         const MlpLayout& layout, double slope) {
  const auto x = pixel_inputs(rgb, enc);
  if (x.dim(1) != layout.in_dim())
    throw DimensionError("evaluate_patch: input width " + std::to_string(x.dim(1)) + " != layout in_dim " +
                         std::to_string(layout.in_dim()));
  const auto y = mlp_forward(x, unpack(flat, layout), slope);
  return reshape(transpose2d(y), {layout.out_dim(), rgb.dim(1), rgb.dim(2)});
}

#define HSINR_INSTANTIATE(T)                                                                          \
  template std::vector<LayerParams<T>> unpack(const Tensor<T>&, const MlpLayout&);                    \
  template Tensor<T> pack(const std::vector<LayerParams<T>>&, const MlpLayout&);                      \
  template Tensor<T> mlp_forward(const Tensor<T>&, const std::vector<LayerParams<T>>&, double);       \
  template Tensor<T> pixel_inputs(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> evaluate_patch(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const MlpLayout&, \
                                    double);

HSINR_INSTANTIATE(float)
HSINR_INSTANTIATE(double)

}  // namespace hsinr
