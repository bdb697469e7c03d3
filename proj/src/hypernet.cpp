#include "hsinr/hypernet.hpp"

#include <cmath>

#include "hsinr/errors.hpp"
#include "hsinr/ops.hpp"

namespace hsinr {

namespace {

bool is_pow2(std::size_t v) { return v != 0 && (v & (v - 1)) == 0; }

template <typename T>
ConvLayer<T> kaiming_conv(std::size_t c_out, std::size_t c_in, std::size_t k, std::size_t stride,
                          std::size_t padding, double slope, std::mt19937_64& rng) {
  const double fan_in = static_cast<double>(c_in * k * k);
  const double stddev = std::sqrt(2.0 / ((1.0 + slope * slope) * fan_in));
  std::normal_distribution<double> normal(0.0, stddev);
  std::vector<T> w(c_out * c_in * k * k);
  for (auto& v : w) v = static_cast<T>(normal(rng));
  ConvLayer<T> layer;
  layer.kernel = Tensor<T>({c_out, c_in, k, k}, std::move(w), true);
  layer.bias = Tensor<T>({c_out}, T(0), true);
  layer.stride = stride;
  layer.padding = padding;
  return layer;
}

}  // namespace

std::size_t HyperNetConfig::downsampling_layers() const {
  if (!is_pow2(grid) || !is_pow2(patch_size))
    throw ConfigError("grid factor S=" + std::to_string(grid) + " and patch size " + std::to_string(patch_size) +
                      " must be powers of two");
  if (grid > patch_size || patch_size % grid != 0)
    throw ConfigError("grid factor S=" + std::to_string(grid) + " must divide patch size " +
                      std::to_string(patch_size));
  std::size_t n = 0;
  for (std::size_t s = patch_size; s > grid; s /= 2) ++n;
  return n;
}

std::size_t HyperNetConfig::feature_channels() const {
  const std::size_t n = downsampling_layers();
  if (n == 0) return 3;
  if (channels.empty()) throw ConfigError("hypernetwork channel list is empty");
  return channels[std::min(n, channels.size()) - 1];
}

void HyperNetConfig::validate() const {
  (void)downsampling_layers();
  (void)feature_channels();
  if (mlp.total() == 0) throw ConfigError("hypernetwork has no MLP layout");
}

template <typename T>
Tensor<T> ConvLayer<T>::operator()(const Tensor<T>& x) const {
  return conv2d_forward(x, kernel, bias, stride, padding);
}

template <typename T>
std::vector<Tensor<T>> HyperNetWeights<T>::parameters() const {
  std::vector<Tensor<T>> out;
  auto add = [&](const ConvLayer<T>& c) {
    out.push_back(c.kernel);
    out.push_back(c.bias);
  };
  for (const auto& c : extractor) add(c);
  for (const auto& b : estimator) {
    add(b.gamma);
    add(b.beta);
    add(b.conv);
  }
  add(head);
  return out;
}

template <typename T>
std::vector<std::string> HyperNetWeights<T>::parameter_names() const {
  std::vector<std::string> out;
  auto add = [&](const std::string& prefix) {
    out.push_back(prefix + ".kernel");
    out.push_back(prefix + ".bias");
  };
  for (std::size_t i = 0; i < extractor.size(); ++i) add("extractor." + std::to_string(i));
  for (std::size_t i = 0; i < estimator.size(); ++i) {
    const auto p = "estimator." + std::to_string(i);
    add(p + ".gamma");
    add(p + ".beta");
    add(p + ".conv");
  }
  add("head");
  return out;
}

template <typename T>
HyperNetWeights<T> init_hypernet(const HyperNetConfig& cfg, std::mt19937_64& rng, double head_bias_std) {
  cfg.validate();
  HyperNetWeights<T> w;
  std::size_t c_in = 3;
  const std::size_t n_ds = cfg.downsampling_layers();
  for (std::size_t l = 0; l < n_ds; ++l) {
    const std::size_t c_out = cfg.channels[std::min(l, cfg.channels.size() - 1)];
    w.extractor.push_back(kaiming_conv<T>(c_out, c_in, 4, 2, 1, cfg.slope, rng));
    c_in = c_out;
  }
  const std::size_t c = cfg.feature_channels();
  for (std::size_t b = 0; b < cfg.estimator_blocks; ++b) {
    EstimatorBlock<T> block;
    block.gamma = kaiming_conv<T>(c, c, 3, 1, 1, cfg.slope, rng);
    block.beta = kaiming_conv<T>(c, c, 3, 1, 1, cfg.slope, rng);
    block.conv = kaiming_conv<T>(c, c, 3, 1, 1, cfg.slope, rng);
    w.estimator.push_back(std::move(block));
  }
  const std::size_t len = cfg.mlp.total();
  std::normal_distribution<double> normal(0.0, head_bias_std);
  std::vector<T> hb(len);
  for (auto& v : hb) v = static_cast<T>(head_bias_std > 0 ? normal(rng) : 0.0);
  w.head.kernel = Tensor<T>({len, c, 1, 1}, T(0), true);
  w.head.bias = Tensor<T>({len}, std::move(hb), true);
  w.head.stride = 1;
  w.head.padding = 0;
  return w;
}

template <typename T>
Tensor<T> ParameterGrid<T>::cell(std::size_t i, std::size_t j) const {
  if (i >= grid || j >= grid)
    throw IndexError("cell (" + std::to_string(i) + ", " + std::to_string(j) + ") outside " +
                     std::to_string(grid) + " x " + std::to_string(grid) + " grid");
  return slice(cells, (i * grid + j) * per_cell_len, {per_cell_len});
}

CellRegion cell_region(std::size_t i, std::size_t j, std::size_t grid, std::size_t height, std::size_t width) {
  if (grid == 0 || height % grid != 0 || width % grid != 0)
    throw ConfigError("image " + std::to_string(height) + " x " + std::to_string(width) +
                      " is not divisible into a " + std::to_string(grid) + " x " + std::to_string(grid) + " grid");
  if (i >= grid || j >= grid) throw IndexError("cell index outside grid");
  const std::size_t h = height / grid, w = width / grid;
  return {i * h, (i + 1) * h, j * w, (j + 1) * w};
}

template <typename T>
Tensor<T> extract_features(const Tensor<T>& rgb, const HyperNetConfig& cfg, const HyperNetWeights<T>& weights) {
  if (rgb.rank() != 3 || rgb.dim(0) != 3 || rgb.dim(1) != cfg.patch_size || rgb.dim(2) != cfg.patch_size)
    throw ConfigError("extract_features: input " + to_string(rgb.shape()) + " does not match configured patch " +
                      std::to_string(cfg.patch_size));
  if (weights.extractor.size() != cfg.downsampling_layers())
    throw CompatibilityError("extract_features: weights hold " + std::to_string(weights.extractor.size()) +
                             " downsampling layers, config needs " + std::to_string(cfg.downsampling_layers()));
  Tensor<T> h = rgb;
  for (const auto& layer : weights.extractor) h = leaky_relu(layer(h), cfg.slope);
  return h;
}

template <typename T>
ParameterGrid<T> estimate_params(const Tensor<T>& features, const HyperNetConfig& cfg,
                                 const HyperNetWeights<T>& weights) {
  if (features.rank() != 3 || features.dim(1) != cfg.grid || features.dim(2) != cfg.grid)
    throw DimensionError("estimate_params: features " + to_string(features.shape()) + " are not spatially " +
                         std::to_string(cfg.grid) + " x " + std::to_string(cfg.grid));
  Tensor<T> h = features;
  for (const auto& block : weights.estimator) {
    const auto modulated = modulate(instance_norm(h), block.gamma(features), block.beta(features));
    h = leaky_relu(block.conv(modulated), cfg.slope);
  }
  const auto theta = weights.head(h);  // [len x S x S]
  const std::size_t len = theta.dim(0), s = cfg.grid;
  if (len != cfg.mlp.total())
    throw CompatibilityError("estimate_params: head emits " + std::to_string(len) + " channels, layout needs " +
                             std::to_string(cfg.mlp.total()));
  ParameterGrid<T> grid;
  grid.grid = s;
  grid.per_cell_len = len;
  grid.cells = transpose2d(reshape(theta, {len, s * s}));
  return grid;
}

template <typename T>
ParameterGrid<T> build_grid(const Tensor<T>& rgb, const HyperNetConfig& cfg, const HyperNetWeights<T>& weights) {
  return estimate_params(extract_features(rgb, cfg, weights), cfg, weights);
}

#define HSINR_INSTANTIATE(T)                                                                                \
  template struct ConvLayer<T>;                                                                             \
  template struct HyperNetWeights<T>;                                                                       \
  template struct ParameterGrid<T>;                                                                         \
  template HyperNetWeights<T> init_hypernet(const HyperNetConfig&, std::mt19937_64&, double);              \
  template Tensor<T> extract_features(const Tensor<T>&, const HyperNetConfig&, const HyperNetWeights<T>&);  \
  template ParameterGrid<T> estimate_params(const Tensor<T>&, const HyperNetConfig&, const HyperNetWeights<T>&); \
  template ParameterGrid<T> build_grid(const Tensor<T>&, const HyperNetConfig&, const HyperNetWeights<T>&);

HSINR_INSTANTIATE(float)
HSINR_INSTANTIATE(double)

}  // namespace hsinr
