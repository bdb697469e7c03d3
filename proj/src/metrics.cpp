#include "hsinr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "hsinr/binio.hpp"
#include "hsinr/errors.hpp"
#include "json.hpp"

namespace hsinr {

namespace {

void require_same(const HsiCube& a, const HsiCube& b, const char* who) {
  if (a.width != b.width || a.height != b.height || a.bands != b.bands)
    throw DimensionError(std::string(who) + ": cube shapes differ (" + std::to_string(a.bands) + "x" +
                         std::to_string(a.height) + "x" + std::to_string(a.width) + " vs " +
                         std::to_string(b.bands) + "x" + std::to_string(b.height) + "x" + std::to_string(b.width) +
                         ")");
}

double mean_of(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

std::vector<double> gaussian_window(std::size_t size, double sigma) {
  std::vector<double> g(size * size);
  const double c = (static_cast<double>(size) - 1.0) / 2.0;
  double sum = 0;
  for (std::size_t i = 0; i < size; ++i)
    for (std::size_t j = 0; j < size; ++j) {
      const double di = static_cast<double>(i) - c, dj = static_cast<double>(j) - c;
      g[i * size + j] = std::exp(-(di * di + dj * dj) / (2 * sigma * sigma));
      sum += g[i * size + j];
    }
  for (auto& v : g) v /= sum;
  return g;
}

double ssim_formula(double mx, double my, double vx, double vy, double cxy, double c1, double c2) {
  return ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
}

}  // namespace

BandScores psnr(const HsiCube& ref, const HsiCube& est, const PsnrOptions& options) {
  require_same(ref, est, "psnr");
  const std::size_t n = ref.width * ref.height;
  BandScores out;
  out.per_band.resize(ref.bands);
  double peak = 1.0;
  if (options.peak_from_reference) peak = *std::max_element(ref.data.begin(), ref.data.end());
  for (std::size_t b = 0; b < ref.bands; ++b) {
    double se = 0;
    for (std::size_t p = 0; p < n; ++p) {
      const double d = static_cast<double>(ref.data[b * n + p]) - est.data[b * n + p];
      se += d * d;
    }
    const double mse = se / static_cast<double>(n);
    out.per_band[b] = mse == 0 ? kPsnrInfinity : 10.0 * std::log10(peak * peak / mse);
  }
  out.mean = mean_of(out.per_band);
  return out;
}

SsimScores ssim(const HsiCube& ref, const HsiCube& est, const SsimOptions& options) {
  require_same(ref, est, "ssim");
  const double c1 = std::pow(options.k1 * options.dynamic_range, 2);
  const double c2 = std::pow(options.k2 * options.dynamic_range, 2);
  const std::size_t W = ref.width, H = ref.height, n = W * H, k = options.window;
  SsimScores out;
  out.per_band.resize(ref.bands);
  out.global_fallback = H < k || W < k;

  const auto g = gaussian_window(k, options.sigma);
  for (std::size_t b = 0; b < ref.bands; ++b) {
    const float* x = ref.data.data() + b * n;
    const float* y = est.data.data() + b * n;
    if (out.global_fallback) {
      double mx = 0, my = 0;
      for (std::size_t p = 0; p < n; ++p) {
        mx += x[p];
        my += y[p];
      }
      mx /= static_cast<double>(n);
      my /= static_cast<double>(n);
      double vx = 0, vy = 0, cxy = 0;
      for (std::size_t p = 0; p < n; ++p) {
        vx += (x[p] - mx) * (x[p] - mx);
        vy += (y[p] - my) * (y[p] - my);
        cxy += (x[p] - mx) * (y[p] - my);
      }
      vx /= static_cast<double>(n);
      vy /= static_cast<double>(n);
      cxy /= static_cast<double>(n);
      out.per_band[b] = ssim_formula(mx, my, vx, vy, cxy, c1, c2);
      continue;
    }
    double total = 0;
    std::size_t windows = 0;
    for (std::size_t r = 0; r + k <= H; ++r)
      for (std::size_t c = 0; c + k <= W; ++c) {
        double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
        for (std::size_t i = 0; i < k; ++i)
          for (std::size_t j = 0; j < k; ++j) {
            const double w = g[i * k + j];
            const double xv = x[(r + i) * W + c + j], yv = y[(r + i) * W + c + j];
            mx += w * xv;
            my += w * yv;
            sxx += w * xv * xv;
            syy += w * yv * yv;
            sxy += w * xv * yv;
          }
        total += ssim_formula(mx, my, sxx - mx * mx, syy - my * my, sxy - mx * my, c1, c2);
        ++windows;
      }
    out.per_band[b] = total / static_cast<double>(windows);
  }
  out.mean = mean_of(out.per_band);
  return out;
}

SamScores sam(const HsiCube& ref, const HsiCube& est) {
  require_same(ref, est, "sam");
  constexpr double eps = 1e-12;
  const std::size_t n = ref.width * ref.height, L = ref.bands;
  SamScores out;
  out.per_pixel.resize(n);
  std::vector<double> u(L), v(L);
  for (std::size_t p = 0; p < n; ++p) {
    double nu = 0, nv = 0;
    for (std::size_t b = 0; b < L; ++b) {
      u[b] = ref.data[b * n + p];
      v[b] = est.data[b * n + p];
      nu += u[b] * u[b];
      nv += v[b] * v[b];
    }
    nu = std::sqrt(nu);
    nv = std::sqrt(nv);
    // angle = 2 atan2(|u^ - v^|, |u^ + v^|): equal to arccos(<u^, v^>) but exact near 0 and pi.
    double dm = 0, dp = 0;
    for (std::size_t b = 0; b < L; ++b) {
      const double a = nu > eps ? u[b] / nu : 0.0;
      const double c = nv > eps ? v[b] / nv : 0.0;
      dm += (a - c) * (a - c);
      dp += (a + c) * (a + c);
    }
    double angle = 2.0 * std::atan2(std::sqrt(dm), std::sqrt(dp));
    if (nu <= eps && nv <= eps) angle = 0.0;
    else if (nu <= eps || nv <= eps) angle = std::numbers::pi / 2;
    out.per_pixel[p] = angle * 180.0 / std::numbers::pi;
  }
  out.mean = mean_of(out.per_pixel);
  return out;
}

MetricReport evaluate(const HsiCube& ref, const HsiCube& est, const PsnrOptions& psnr_options) {
  const auto p = psnr(ref, est, psnr_options);
  const auto s = ssim(ref, est);
  MetricReport r;
  r.psnr = p.mean;
  r.per_band_psnr = p.per_band;
  r.ssim = s.mean;
  r.per_band_ssim = s.per_band;
  r.ssim_global_fallback = s.global_fallback;
  r.sam = sam(ref, est).mean;
  return r;
}

namespace {

std::string fmt(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

nlohmann::json jnum(double v) { return std::isinf(v) ? nlohmann::json(fmt(v)) : nlohmann::json(v); }

}  // namespace

std::string to_key_value(const MetricReport& report) {
  std::ostringstream os;
  os << "psnr=" << fmt(report.psnr) << '\n';
  os << "ssim=" << fmt(report.ssim) << '\n';
  os << "sam=" << fmt(report.sam) << '\n';
  os << "ssim_global_fallback=" << (report.ssim_global_fallback ? 1 : 0) << '\n';
  for (std::size_t b = 0; b < report.per_band_psnr.size(); ++b)
    os << "band." << b << ".psnr=" << fmt(report.per_band_psnr[b]) << '\n';
  for (std::size_t b = 0; b < report.per_band_ssim.size(); ++b)
    os << "band." << b << ".ssim=" << fmt(report.per_band_ssim[b]) << '\n';
  return os.str();
}

std::string to_json(const MetricReport& report) {
  nlohmann::json j;
  j["schema"] = "hsinr.metrics/1";
  j["psnr_db"] = jnum(report.psnr);
  j["ssim"] = jnum(report.ssim);
  j["sam_deg"] = jnum(report.sam);
  j["ssim_global_fallback"] = report.ssim_global_fallback;
  auto bands = nlohmann::json::array();
  for (std::size_t b = 0; b < report.per_band_psnr.size(); ++b)
    bands.push_back({{"band", b}, {"psnr_db", jnum(report.per_band_psnr[b])}, {"ssim", jnum(report.per_band_ssim[b])}});
  j["per_band"] = bands;
  return j.dump(2) + "\n";
}

double block_seam_score(const HsiCube& est, std::size_t cell_h, std::size_t cell_w) {
  if (cell_h == 0 || cell_w == 0) throw ConfigError("block_seam_score: cell size must be positive");
  const std::size_t W = est.width, H = est.height, n = W * H;
  double seam = 0, inner = 0;
  std::size_t n_seam = 0, n_inner = 0;
  auto add = [&](double d, bool boundary) {
    if (boundary) {
      seam += d;
      ++n_seam;
    } else {
      inner += d;
      ++n_inner;
    }
  };
  for (std::size_t b = 0; b < est.bands; ++b) {
    const float* y = est.data.data() + b * n;
    for (std::size_t r = 0; r < H; ++r)
      for (std::size_t c = 1; c < W; ++c) add(std::abs(y[r * W + c] - y[r * W + c - 1]), c % cell_w == 0);
    for (std::size_t r = 1; r < H; ++r)
      for (std::size_t c = 0; c < W; ++c) add(std::abs(y[r * W + c] - y[(r - 1) * W + c]), r % cell_h == 0);
  }
  if (n_seam == 0 || n_inner == 0)
    throw ConfigError("block_seam_score: image has no boundary or no interior pixel pairs for this cell size");
  return seam / static_cast<double>(n_seam) - inner / static_cast<double>(n_inner);
}

std::vector<DiffMap> diff_map(const HsiCube& ref, const HsiCube& est, const std::vector<std::size_t>& bands) {
  require_same(ref, est, "diff_map");
  for (auto b : bands)
    if (b >= ref.bands)
      throw IndexError("diff_map: band " + std::to_string(b) + " out of range (cube has " +
                       std::to_string(ref.bands) + " bands)");
  const std::size_t n = ref.width * ref.height;
  std::vector<DiffMap> out;
  for (auto b : bands) {
    DiffMap m;
    m.band = b;
    m.wavelength = ref.wavelengths[b];
    m.width = ref.width;
    m.height = ref.height;
    m.values.resize(n);
    for (std::size_t p = 0; p < n; ++p) {
      m.values[p] = std::abs(ref.data[b * n + p] - est.data[b * n + p]);
      m.max = std::max(m.max, static_cast<double>(m.values[p]));
    }
    out.push_back(std::move(m));
  }
  return out;
}

void save_pgm(const DiffMap& map, const std::filesystem::path& path) {
  std::ostringstream header;
  header << "P5\n# band " << map.band << " wavelength " << map.wavelength << "nm\n# scale 255=" << fmt(map.max)
         << "\n"
         << map.width << ' ' << map.height << "\n255\n";
  const auto h = header.str();
  std::vector<std::uint8_t> out(h.begin(), h.end());
  for (float v : map.values) {
    const double s = map.max > 0 ? static_cast<double>(v) / map.max : 0.0;
    out.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(s, 0.0, 1.0) * 255.0)));
  }
  write_file(path, out);
}

}  // namespace hsinr
