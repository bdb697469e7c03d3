#pragma once

#include <cstddef>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "hsinr/dataio.hpp"

namespace hsinr {

/// PSNR of identical inputs.
inline constexpr double kPsnrInfinity = std::numeric_limits<double>::infinity();

struct BandScores {
  std::vector<double> per_band;
  double mean = 0;
};

struct PsnrOptions {
  /// Use max(Y) of the reference cube as the peak instead of 1.0.
  bool peak_from_reference = false;
};

/// Per band: 10 log10(peak^2 / MSE_b); +inf when MSE_b is 0.
BandScores psnr(const HsiCube& ref, const HsiCube& est, const PsnrOptions& options = {});

struct SsimOptions {
  std::size_t window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

struct SsimScores : BandScores {
  /// Set when the image is smaller than the window and global statistics were used.
  bool global_fallback = false;
};

/// Mean SSIM over all fully-contained Gaussian windows, per band.
SsimScores ssim(const HsiCube& ref, const HsiCube& est, const SsimOptions& options = {});

struct SamScores {
  std::vector<double> per_pixel;  // degrees
  double mean = 0;
};

/// Spectral angle per pixel in degrees; norms below 1e-12 are treated as zero vectors.
SamScores sam(const HsiCube& ref, const HsiCube& est);

struct MetricReport {
  double psnr = 0;
  double ssim = 0;
  double sam = 0;
  std::vector<double> per_band_psnr;
  std::vector<double> per_band_ssim;
  bool ssim_global_fallback = false;
};

MetricReport evaluate(const HsiCube& ref, const HsiCube& est, const PsnrOptions& psnr_options = {});

/// One "key=value" per line; infinite PSNR prints as "inf".
std::string to_key_value(const MetricReport& report);
/// Single JSON document; infinite PSNR is the string "inf".
std::string to_json(const MetricReport& report);

/// Blocking statistic for a grid of cell_h x cell_w cells: the mean absolute
/// difference between horizontally or vertically adjacent pixels that straddle a
/// cell boundary, minus the same mean over adjacent pairs inside a cell.
/// Averaged over bands. Requires at least one pair of each kind.
double block_seam_score(const HsiCube& est, std::size_t cell_h, std::size_t cell_w);

struct DiffMap {
  std::size_t band = 0;
  double wavelength = 0;
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<float> values;  // |Y_b - Yhat_b|, row-major
  double max = 0;
};

std::vector<DiffMap> diff_map(const HsiCube& ref, const HsiCube& est, const std::vector<std::size_t>& bands);

/// 8-bit binary PGM, 255 mapped to the map's maximum (recorded in a header comment).
void save_pgm(const DiffMap& map, const std::filesystem::path& path);

}  // namespace hsinr
