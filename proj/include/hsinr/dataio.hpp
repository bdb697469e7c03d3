#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "hsinr/tensor.hpp"

namespace hsinr {

/// Band-sequential hyperspectral cube: data[(b * height + r) * width + c].
struct HsiCube {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t bands = 0;
  std::vector<double> wavelengths;  // nm, strictly increasing
  std::vector<float> data;

  HsiCube() = default;
  HsiCube(std::size_t w, std::size_t h, std::vector<double> lambdas);

  float at(std::size_t b, std::size_t r, std::size_t c) const { return data[(b * height + r) * width + c]; }
  float& at(std::size_t b, std::size_t r, std::size_t c) { return data[(b * height + r) * width + c]; }

  /// Throws unless shape, wavelengths and the [0,1] value range are consistent.
  void validate() const;

  /// Copy of rows [r0, r0+h) x cols [c0, c0+w).
  HsiCube crop(std::size_t r0, std::size_t c0, std::size_t h, std::size_t w) const;

  template <typename T>
  Tensor<T> to_tensor() const;
  template <typename T>
  static HsiCube from_tensor(const Tensor<T>& t, std::vector<double> lambdas);
};

/// Evenly spaced wavelengths over 400..700 nm (a single band sits at 400 nm).
std::vector<double> visible_wavelengths(std::size_t bands);

/// Per-channel (R, G, B) weights over the cube's bands.
struct SpectralResponse {
  std::array<std::vector<double>, 3> weights;

  /// Three Gaussian bumps discretized on `wavelengths`, each normalized to sum 1.
  static SpectralResponse gaussian(const std::vector<double>& wavelengths,
                                   std::array<double, 3> centers = {620.0, 550.0, 450.0}, double sigma = 40.0);
  std::size_t bands() const { return weights[0].size(); }
  /// Throws unless weights are non-negative, equal length, and each channel sums to 1.
  void validate() const;
};

/// X_c = sum_n R(lambda_n) * Phi_c(lambda_n) for one spectrum, in double.
std::array<double, 3> project_spectrum(std::span<const double> spectrum, const SpectralResponse& response);
/// project_spectrum at every pixel, returned as a 3-band cube (R, G, B) of f32 samples.
HsiCube project_rgb(const HsiCube& cube, const SpectralResponse& response);

/// RGB images are stored as 3-band cubes whose "wavelengths" are the channel indices 0, 1, 2.
inline std::vector<double> rgb_channel_axis() { return {0.0, 1.0, 2.0}; }

inline constexpr std::uint32_t kHsrcVersion = 1;

/// HSRC container, little-endian:
///   "HSRC" | u32 version | u32 W | u32 H | u32 L | L x f32 wavelengths | L*H*W x f32 samples
void save_cube(const HsiCube& cube, const std::filesystem::path& path);
HsiCube load_cube(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_cube(const HsiCube& cube);
HsiCube decode_cube(const std::vector<std::uint8_t>& bytes);

/// Reads an RGB image from an HSRC file with L = 3 or a binary 8-bit PPM (P6).
HsiCube load_rgb(const std::filesystem::path& path);
/// Writes a 3-band cube as an 8-bit binary PPM (values rounded from [0,1] to 0..255).
void save_ppm(const HsiCube& rgb, const std::filesystem::path& path);

/// Synthetic scene controls.
struct SceneOptions {
  /// Number of smooth basis spectra mixed by the spatial patterns.
  std::size_t materials = 4;
  /// Adds a fine metameric stripe component (spectral detail the RGB projection
  /// cannot see) with this period in pixels; 0 disables it.
  std::size_t stripe_period = 0;
  double stripe_amplitude = 0.08;
};

/// Deterministic scene: smooth basis spectra mixed by gradients, checkerboards
/// and disks, clamped to [0,1], wavelengths from 400 to 700 nm.
HsiCube synth_scene(std::size_t width, std::size_t height, std::size_t bands, std::uint64_t seed,
                    const SceneOptions& options = {});

/// Mean |second difference along bands| over all pixels (0 when L < 3).
double spectral_roughness(const HsiCube& cube);

struct DatasetSplit {
  std::vector<std::string> train, val, test;
  std::array<double, 3> fractions{0.6, 0.2, 0.2};
};

/// Seeded shuffle, then sizes floor(n*f_train), floor(n*f_val) with the remainder in test.
DatasetSplit split_dataset(const std::vector<std::string>& scenes, std::array<double, 3> fractions,
                           std::uint64_t seed);

}  // namespace hsinr
