#include "hsinr/dataio.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "hsinr/binio.hpp"
#include "hsinr/errors.hpp"

namespace hsinr {

HsiCube::HsiCube(std::size_t w, std::size_t h, std::vector<double> lambdas)
    : width(w), height(h), bands(lambdas.size()), wavelengths(std::move(lambdas)), data(w * h * bands, 0.0f) {}

void HsiCube::validate() const {
  if (width == 0 || height == 0 || bands == 0) throw DimensionError("cube has an empty axis");
  if (wavelengths.size() != bands)
    throw DimensionError("cube lists " + std::to_string(wavelengths.size()) + " wavelengths for " +
                         std::to_string(bands) + " bands");
  if (data.size() != width * height * bands)
    throw DimensionError("cube payload holds " + std::to_string(data.size()) + " samples, header implies " +
                         std::to_string(width * height * bands));
  for (std::size_t i = 1; i < bands; ++i)
    if (!(wavelengths[i] > wavelengths[i - 1])) throw DomainError("cube wavelengths are not strictly increasing");
  for (float v : data)
    if (!(v >= 0.0f && v <= 1.0f)) throw DomainError("cube sample outside [0,1]");
}

HsiCube HsiCube::crop(std::size_t r0, std::size_t c0, std::size_t h, std::size_t w) const {
  if (r0 + h > height || c0 + w > width) throw IndexError("crop exceeds cube bounds");
  HsiCube out(w, h, wavelengths);
  for (std::size_t b = 0; b < bands; ++b)
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t c = 0; c < w; ++c) out.at(b, r, c) = at(b, r0 + r, c0 + c);
  return out;
}

template <typename T>
Tensor<T> HsiCube::to_tensor() const {
  return Tensor<T>({bands, height, width}, std::vector<T>(data.begin(), data.end()));
}

template <typename T>
HsiCube HsiCube::from_tensor(const Tensor<T>& t, std::vector<double> lambdas) {
  if (t.rank() != 3 || t.dim(0) != lambdas.size())
    throw DimensionError("tensor " + to_string(t.shape()) + " does not match " + std::to_string(lambdas.size()) +
                         " wavelengths");
  HsiCube out(t.dim(2), t.dim(1), std::move(lambdas));
  std::transform(t.data().begin(), t.data().end(), out.data.begin(), [](T v) { return static_cast<float>(v); });
  return out;
}

template Tensor<float> HsiCube::to_tensor<float>() const;
template Tensor<double> HsiCube::to_tensor<double>() const;
template HsiCube HsiCube::from_tensor<float>(const Tensor<float>&, std::vector<double>);
template HsiCube HsiCube::from_tensor<double>(const Tensor<double>&, std::vector<double>);

std::vector<double> visible_wavelengths(std::size_t bands) {
  std::vector<double> out(bands);
  for (std::size_t i = 0; i < bands; ++i)
    out[i] = bands == 1 ? 400.0 : 400.0 + 300.0 * static_cast<double>(i) / static_cast<double>(bands - 1);
  return out;
}

SpectralResponse SpectralResponse::gaussian(const std::vector<double>& wavelengths, std::array<double, 3> centers,
                                            double sigma) {
  SpectralResponse r;
  for (std::size_t c = 0; c < 3; ++c) {
    auto& w = r.weights[c];
    w.resize(wavelengths.size());
    double sum = 0;
    for (std::size_t n = 0; n < wavelengths.size(); ++n) {
      const double d = (wavelengths[n] - centers[c]) / sigma;
      w[n] = std::exp(-0.5 * d * d);
      sum += w[n];
    }
    for (auto& v : w) v /= sum;
  }
  return r;
}

void SpectralResponse::validate() const {
  for (const auto& w : weights) {
    if (w.size() != weights[0].size() || w.empty()) throw DimensionError("response channels differ in length");
    double sum = 0;
    for (double v : w) {
      if (!(v >= 0)) throw DomainError("response weight is negative");
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw DomainError("response channel does not sum to 1");
  }
}

std::array<double, 3> project_spectrum(std::span<const double> spectrum, const SpectralResponse& response) {
  if (response.bands() != spectrum.size())
    throw DimensionError("project_spectrum: response has " + std::to_string(response.bands()) +
                         " bands, spectrum has " + std::to_string(spectrum.size()));
  std::array<double, 3> out{};
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t b = 0; b < spectrum.size(); ++b) out[c] += spectrum[b] * response.weights[c][b];
  return out;
}

HsiCube project_rgb(const HsiCube& cube, const SpectralResponse& response) {
  if (response.bands() != cube.bands)
    throw DimensionError("project_rgb: response has " + std::to_string(response.bands()) + " bands, cube has " +
                         std::to_string(cube.bands));
  HsiCube rgb(cube.width, cube.height, rgb_channel_axis());
  const std::size_t n = cube.width * cube.height;
  std::vector<double> spectrum(cube.bands);
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t b = 0; b < cube.bands; ++b) spectrum[b] = cube.data[b * n + p];
    const auto x = project_spectrum(spectrum, response);
    for (std::size_t c = 0; c < 3; ++c) rgb.data[c * n + p] = static_cast<float>(x[c]);
  }
  return rgb;
}

std::vector<std::uint8_t> encode_cube(const HsiCube& cube) {
  cube.validate();
  ByteWriter w;
  w.bytes("HSRC");
  w.u32(kHsrcVersion);
  w.u32(static_cast<std::uint32_t>(cube.width));
  w.u32(static_cast<std::uint32_t>(cube.height));
  w.u32(static_cast<std::uint32_t>(cube.bands));
  for (double l : cube.wavelengths) w.f32(static_cast<float>(l));
  for (float v : cube.data) w.f32(v);
  return w.take();
}

HsiCube decode_cube(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes);
  r.expect_magic("HSRC");
  const auto version = r.u32();
  if (version != kHsrcVersion)
    throw FormatError("unsupported HSRC version " + std::to_string(version), r.offset() - 4);
  const std::size_t W = r.u32(), H = r.u32(), L = r.u32();
  if (W == 0 || H == 0 || L == 0) throw FormatError("HSRC header has an empty axis", r.offset());
  const std::uint64_t expected = 20 + 4ull * L + 4ull * L * H * W;
  if (bytes.size() != expected)
    throw FormatError("HSRC payload size " + std::to_string(bytes.size()) + " != expected " +
                          std::to_string(expected),
                      std::min<std::size_t>(bytes.size(), r.offset()));
  std::vector<double> lambdas(L);
  for (auto& l : lambdas) l = r.f32();
  HsiCube cube;
  cube.width = W;
  cube.height = H;
  cube.bands = L;
  cube.wavelengths = std::move(lambdas);
  cube.data.resize(W * H * L);
  for (auto& v : cube.data) v = r.f32();
  try {
    cube.validate();
  } catch (const Error& e) {
    throw FormatError(std::string("HSRC content invalid: ") + e.what(), bytes.size());
  }
  return cube;
}

void save_cube(const HsiCube& cube, const std::filesystem::path& path) { write_file(path, encode_cube(cube)); }

HsiCube load_cube(const std::filesystem::path& path) { return decode_cube(read_file(path)); }

namespace {

// Skips whitespace and '#' comments in a PNM header, then parses an integer.
std::size_t pnm_int(const std::vector<std::uint8_t>& b, std::size_t& pos) {
  while (pos < b.size()) {
    if (b[pos] == '#') {
      while (pos < b.size() && b[pos] != '\n') ++pos;
    } else if (std::isspace(b[pos])) {
      ++pos;
    } else {
      break;
    }
  }
  if (pos >= b.size() || !std::isdigit(b[pos])) throw FormatError("malformed PPM header", pos);
  std::size_t v = 0;
  while (pos < b.size() && std::isdigit(b[pos])) v = v * 10 + (b[pos++] - '0');
  return v;
}

HsiCube decode_ppm(const std::vector<std::uint8_t>& b) {
  std::size_t pos = 2;
  const std::size_t W = pnm_int(b, pos), H = pnm_int(b, pos), maxval = pnm_int(b, pos);
  if (W == 0 || H == 0) throw FormatError("PPM has an empty axis", pos);
  if (maxval != 255) throw FormatError("only 8-bit PPM (maxval 255) is supported", pos);
  ++pos;  // single whitespace before raster
  if (b.size() < pos + 3 * W * H) throw FormatError("PPM raster truncated", b.size());
  HsiCube rgb(W, H, rgb_channel_axis());
  for (std::size_t p = 0; p < W * H; ++p)
    for (std::size_t c = 0; c < 3; ++c) rgb.data[c * W * H + p] = static_cast<float>(b[pos + 3 * p + c]) / 255.0f;
  return rgb;
}

}  // namespace

HsiCube load_rgb(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') return decode_ppm(bytes);
  auto cube = decode_cube(bytes);
  if (cube.bands != 3) throw FormatError("RGB input must have 3 bands, found " + std::to_string(cube.bands), 20);
  return cube;
}

void save_ppm(const HsiCube& rgb, const std::filesystem::path& path) {
  if (rgb.bands != 3) throw DimensionError("save_ppm needs a 3-band image");
  std::ostringstream header;
  header << "P6\n" << rgb.width << ' ' << rgb.height << "\n255\n";
  const auto h = header.str();
  std::vector<std::uint8_t> out(h.begin(), h.end());
  const std::size_t n = rgb.width * rgb.height;
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t c = 0; c < 3; ++c) {
      const float v = std::clamp(rgb.data[c * n + p], 0.0f, 1.0f);
      out.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0f)));
    }
  write_file(path, out);
}

namespace {

// Smooth zero-RGB spectral direction: a sinusoid over wavelength with its
// least-squares component in span(Phi_R, Phi_G, Phi_B) removed, scaled to max |d| = 1.
std::vector<double> metameric_direction(const std::vector<double>& lambdas) {
  const std::size_t L = lambdas.size();
  const auto resp = SpectralResponse::gaussian(lambdas);
  Eigen::VectorXd d(L);
  for (std::size_t n = 0; n < L; ++n) d[n] = std::sin(2.0 * std::numbers::pi * (lambdas[n] - 400.0) / 90.0);
  if (L > 3) {
    Eigen::MatrixXd phi(3, L);
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t n = 0; n < L; ++n) phi(c, n) = resp.weights[c][n];
    const Eigen::Vector3d coef = (phi * phi.transpose()).ldlt().solve(phi * d);
    d -= phi.transpose() * coef;
  } else {
    d.setZero();
  }
  const double m = d.cwiseAbs().maxCoeff();
  std::vector<double> out(L, 0.0);
  if (m > 0)
    for (std::size_t n = 0; n < L; ++n) out[n] = d[n] / m;
  return out;
}

}  // namespace

HsiCube synth_scene(std::size_t width, std::size_t height, std::size_t bands, std::uint64_t seed,
                    const SceneOptions& options) {
  if (width == 0 || height == 0 || bands == 0) throw DimensionError("synth_scene: dimensions must be >= 1");
  const std::size_t K = std::max<std::size_t>(options.materials, 1);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto uniform = [&](double a, double b) { return a + (b - a) * u01(rng); };

  HsiCube cube(width, height, visible_wavelengths(bands));

  // Basis spectra: a floor plus two broad Gaussian bumps, kept inside [0.15, 0.85].
  std::vector<std::vector<double>> spectra(K, std::vector<double>(bands));
  for (auto& s : spectra) {
    const double floor = uniform(0.15, 0.35);
    const double a1 = uniform(0.1, 0.4), c1 = uniform(400, 700), w1 = uniform(40, 90);
    const double a2 = uniform(0.05, 0.25), c2 = uniform(400, 700), w2 = uniform(50, 110);
    for (std::size_t n = 0; n < bands; ++n) {
      const double l = cube.wavelengths[n];
      const double z1 = (l - c1) / w1, z2 = (l - c2) / w2;
      s[n] = std::min(0.85, floor + a1 * std::exp(-0.5 * z1 * z1) + a2 * std::exp(-0.5 * z2 * z2));
    }
  }

  // Spatial patterns spanning coarse to fine structure.
  const double angle = uniform(0.0, 2.0 * std::numbers::pi);
  const std::size_t checker = std::max<std::size_t>(2, std::min(width, height) / (4u << (rng() % 2)));
  struct Disk {
    double cx, cy, r;
  };
  std::vector<Disk> disks;
  for (int i = 0; i < 3; ++i) disks.push_back({uniform(0.1, 0.9), uniform(0.1, 0.9), uniform(0.08, 0.25)});
  const double fx = uniform(1.0, 3.0), fy = uniform(1.0, 3.0), phase = uniform(0.0, 6.28);

  const auto stripe = metameric_direction(cube.wavelengths);

  std::vector<double> weight(K);
  for (std::size_t r = 0; r < height; ++r)
    for (std::size_t c = 0; c < width; ++c) {
      const double x = (static_cast<double>(c) + 0.5) / static_cast<double>(width);
      const double y = (static_cast<double>(r) + 0.5) / static_cast<double>(height);
      const double ramp = 0.5 + 0.5 * ((x - 0.5) * std::cos(angle) + (y - 0.5) * std::sin(angle)) * 1.4;
      const bool check = ((c / checker) + (r / checker)) % 2 == 0;
      double disk = 0;
      for (const auto& d : disks) {
        const double dx = x - d.cx, dy = y - d.cy;
        if (dx * dx + dy * dy < d.r * d.r) disk = 1.0;
      }
      const double wave = 0.5 + 0.5 * std::sin(2 * std::numbers::pi * (fx * x + fy * y) + phase);
      for (std::size_t k = 0; k < K; ++k) {
        switch (k % 4) {
          case 0: weight[k] = 0.2 + ramp; break;
          case 1: weight[k] = check ? 1.0 : 0.1; break;
          case 2: weight[k] = 0.05 + 1.5 * disk; break;
          default: weight[k] = 0.1 + wave; break;
        }
      }
      double total = 0;
      for (double w : weight) total += w;
      const double s = options.stripe_period > 0 && (c / std::max<std::size_t>(1, options.stripe_period / 2)) % 2 == 0
                           ? 1.0
                           : -1.0;
      for (std::size_t b = 0; b < bands; ++b) {
        double v = 0;
        for (std::size_t k = 0; k < K; ++k) v += weight[k] * spectra[k][b];
        v /= total;
        if (options.stripe_period > 0) v += options.stripe_amplitude * s * stripe[b];
        cube.at(b, r, c) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  return cube;
}

double spectral_roughness(const HsiCube& cube) {
  if (cube.bands < 3) return 0.0;
  const std::size_t n = cube.width * cube.height;
  double sum = 0;
  for (std::size_t b = 1; b + 1 < cube.bands; ++b)
    for (std::size_t p = 0; p < n; ++p) {
      const double d2 = static_cast<double>(cube.data[(b + 1) * n + p]) - 2.0 * cube.data[b * n + p] +
                        cube.data[(b - 1) * n + p];
      sum += std::abs(d2);
    }
  return sum / static_cast<double>((cube.bands - 2) * n);
}

DatasetSplit split_dataset(const std::vector<std::string>& scenes, std::array<double, 3> fractions,
                           std::uint64_t seed) {
  if (scenes.empty()) throw InputError("split_dataset: empty scene list");
  double sum = 0;
  for (double f : fractions) {
    if (!(f >= 0)) throw InputError("split_dataset: negative fraction");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw InputError("split_dataset: fractions must sum to 1");

  std::vector<std::string> order = scenes;
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n = static_cast<double>(order.size());
  const auto n_train = static_cast<std::size_t>(std::floor(n * fractions[0] + 1e-9));
  const auto n_val = std::min(order.size() - n_train, static_cast<std::size_t>(std::floor(n * fractions[1] + 1e-9)));

  DatasetSplit split;
  split.fractions = fractions;
  auto it = order.begin();
  split.train.assign(it, it + static_cast<std::ptrdiff_t>(n_train));
  it += static_cast<std::ptrdiff_t>(n_train);
  split.val.assign(it, it + static_cast<std::ptrdiff_t>(n_val));
  it += static_cast<std::ptrdiff_t>(n_val);
  split.test.assign(it, order.end());
  return split;
}

}  // namespace hsinr
