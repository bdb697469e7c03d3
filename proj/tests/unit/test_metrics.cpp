#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "doctest.h"
#include "hsinr/binio.hpp"
#include "hsinr/errors.hpp"
#include "hsinr/metrics.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace hsinr;
using hsinr::test::rand_cube;

namespace {

HsiCube spectra_cube(const std::vector<std::vector<float>>& px) {
  std::vector<double> lambdas;
  for (std::size_t i = 0; i < px[0].size(); ++i) lambdas.push_back(400.0 + i);
  HsiCube c(px.size(), 1, lambdas);
  for (std::size_t p = 0; p < px.size(); ++p)
    for (std::size_t b = 0; b < px[p].size(); ++b) c.at(b, 0, p) = px[p][b];
  return c;
}

}  // namespace

TEST_CASE("psnr closed forms") {
  HsiCube a(4, 4, visible_wavelengths(3)), b(4, 4, visible_wavelengths(3));
  for (auto& v : a.data) v = 0.5f;
  for (std::size_t i = 0; i < b.data.size(); ++i) b.data[i] = i % 2 ? 0.6f : 0.4f;
  const auto p = psnr(a, b);
  for (double v : p.per_band) CHECK(v == doctest::Approx(20.0).epsilon(1e-6));
  CHECK(p.mean == doctest::Approx(20.0).epsilon(1e-6));
  CHECK(std::isinf(psnr(a, a).mean));
  CHECK(psnr(a, a).mean > 0);
  CHECK_THROWS_AS(psnr(a, HsiCube(4, 3, visible_wavelengths(3))), DimensionError);
}

TEST_CASE("psnr peak from the reference is opt-in") {
  HsiCube a(2, 2, visible_wavelengths(1)), b(2, 2, visible_wavelengths(1));
  for (auto& v : a.data) v = 0.5f;
  for (auto& v : b.data) v = 0.4f;
  CHECK(psnr(a, b, {true}).mean == doctest::Approx(10 * std::log10(0.25 / 0.01)).epsilon(1e-6));
  CHECK(psnr(a, b).mean == doctest::Approx(20.0).epsilon(1e-6));
}

TEST_CASE("psnr is monotone along a noise ladder") {
  std::mt19937_64 rng(8);
  const auto ref = rand_cube(16, 16, 4, rng, 0.2f, 0.8f);
  std::normal_distribution<double> unit(0.0, 1.0);
  std::vector<double> noise(ref.data.size());
  for (auto& v : noise) v = unit(rng);
  double previous = kPsnrInfinity;
  for (double sigma : {0.001, 0.002, 0.005, 0.01, 0.02, 0.05}) {
    HsiCube est = ref;
    for (std::size_t i = 0; i < est.data.size(); ++i) est.data[i] = static_cast<float>(ref.data[i] + sigma * noise[i]);
    const auto p = psnr(ref, est);
    CHECK(p.mean < previous);
    previous = p.mean;
  }
}

TEST_CASE("ssim identities") {
  std::mt19937_64 rng(9);
  for (std::size_t size : {8u, 16u}) {
    const auto a = rand_cube(size, size, 3, rng);
    CHECK(ssim(a, a).mean == 1.0);
    HsiCube inv = a;
    for (auto& v : inv.data) v = 1.0f - v;
    CHECK(ssim(a, inv).mean < 1.0);
    const auto b = rand_cube(size, size, 3, rng);
    CHECK(std::abs(ssim(a, b).mean - ssim(b, a).mean) <= 1e-12);
    CHECK(ssim(a, b).mean <= 1.0);
    CHECK(ssim(a, b).global_fallback == (size < 11));
  }
}

TEST_CASE("windowed ssim agrees with an independent reference") {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 10; ++trial) {
    const auto a = rand_cube(16, 16, 2, rng);
    HsiCube b = a;
    std::normal_distribution<float> n(0.0f, 0.1f);
    for (auto& v : b.data) v = std::clamp(v + n(rng), 0.0f, 1.0f);
    CHECK(std::abs(ssim(a, b).mean - oracle::ssim(a, b)) <= 1e-6);
  }
}

TEST_CASE("sam trivia") {
  const auto same = spectra_cube({{0.2f, 0.7f, 0.4f}});
  CHECK(sam(same, same).mean <= 1e-9);
  CHECK(std::abs(sam(spectra_cube({{1, 0}}), spectra_cube({{1, 1}})).mean - 45.0) <= 1e-9);
  CHECK(std::abs(sam(spectra_cube({{1, 0}}), spectra_cube({{0, 1}})).mean - 90.0) <= 1e-9);
  CHECK(sam(spectra_cube({{0, 0}}), spectra_cube({{0, 0}})).mean == 0.0);
  CHECK(sam(spectra_cube({{0, 0}}), spectra_cube({{0.5f, 0}})).mean == 90.0);
}

TEST_CASE("sam is scale invariant and bounded") {
  std::mt19937_64 rng(11);
  const auto a = rand_cube(6, 6, 8, rng);
  const auto b = rand_cube(6, 6, 8, rng, 0.0f, 0.25f);
  for (float c : {0.5f, 2.0f, 4.0f}) {
    HsiCube scaled = b;
    for (auto& v : scaled.data) v *= c;
    const auto base = sam(a, b), s = sam(a, scaled);
    for (std::size_t p = 0; p < base.per_pixel.size(); ++p)
      CHECK(s.per_pixel[p] == doctest::Approx(base.per_pixel[p]).epsilon(1e-6));
  }
  for (double v : sam(a, b).per_pixel) {
    CHECK(v >= 0.0);
    CHECK(v <= 180.0);
  }
}

TEST_CASE("metrics agree with brute-force references on small cubes") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const auto a = rand_cube(8, 8, 4, rng), b = rand_cube(8, 8, 4, rng);
    const auto r = evaluate(a, b);
    CHECK(std::abs(r.psnr - oracle::psnr(a, b)) <= 1e-9 * std::abs(oracle::psnr(a, b)));
    CHECK(std::abs(r.ssim - oracle::ssim(a, b)) <= 1e-6);
    CHECK(std::abs(r.sam - oracle::sam(a, b)) <= 1e-6);
    CHECK(r.ssim_global_fallback);
  }
}

TEST_CASE("report formats") {
  std::mt19937_64 rng(13);
  const auto a = rand_cube(4, 4, 2, rng);
  const auto self = evaluate(a, a);
  const auto kv = to_key_value(self);
  CHECK(kv.find("psnr=inf\n") != std::string::npos);
  CHECK(kv.find("ssim=1\n") != std::string::npos);
  CHECK(kv.find("sam=0\n") != std::string::npos);
  const auto js = to_json(self);
  CHECK(js.find("\"psnr_db\": \"inf\"") != std::string::npos);
  CHECK(js.find("\"schema\": \"hsinr.metrics/1\"") != std::string::npos);
}

TEST_CASE("difference maps") {
  std::mt19937_64 rng(14);
  const auto a = rand_cube(5, 4, 31, rng), b = rand_cube(5, 4, 31, rng);
  const std::vector<std::size_t> bands{3, 7, 11, 15, 19, 23, 27};
  const auto maps = diff_map(a, b, bands);
  REQUIRE(maps.size() == 7);
  const double nm[7] = {430, 470, 510, 550, 590, 630, 670};
  for (std::size_t i = 0; i < 7; ++i) {
    CHECK(maps[i].wavelength == doctest::Approx(nm[i]));
    double mx = 0;
    for (std::size_t r = 0; r < 4; ++r)
      for (std::size_t c = 0; c < 5; ++c)
        mx = std::max(mx, static_cast<double>(std::abs(a.at(bands[i], r, c) - b.at(bands[i], r, c))));
    CHECK(maps[i].max == mx);
  }
  for (const auto& m : diff_map(a, a, bands))
    for (float v : m.values) CHECK(v == 0.0f);
  CHECK_THROWS_AS(diff_map(a, b, {31}), IndexError);

  const auto path = std::filesystem::temp_directory_path() / "hsinr_unit_metrics" / "band03.pgm";
  save_pgm(maps[0], path);
  const auto bytes = read_file(path);
  const std::string head(bytes.begin(), bytes.begin() + 2);
  CHECK(head == "P5");
  CHECK(std::string(bytes.begin(), bytes.end()).find("# scale 255=") != std::string::npos);
}

TEST_CASE("block seam score") {
  HsiCube smooth(8, 8, visible_wavelengths(2));
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t r = 0; r < 8; ++r)
      for (std::size_t c = 0; c < 8; ++c) smooth.at(b, r, c) = 0.05f * static_cast<float>(c);
  CHECK(std::abs(block_seam_score(smooth, 4, 4)) < 1e-6);

  HsiCube blocky(8, 8, visible_wavelengths(1));
  for (std::size_t r = 0; r < 8; ++r)
    for (std::size_t c = 0; c < 8; ++c) blocky.at(0, r, c) = c < 4 ? 0.2f : 0.7f;
  // 8 boundary column pairs out of 16 boundary pairs jump by 0.5; interior pairs are flat.
  CHECK(block_seam_score(blocky, 4, 4) == doctest::Approx(0.25).epsilon(1e-6));
  CHECK_THROWS_AS(block_seam_score(blocky, 0, 4), ConfigError);
}
