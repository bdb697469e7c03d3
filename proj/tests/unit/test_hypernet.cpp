#include <random>
#include <vector>

#include "doctest.h"
#include "hsinr/errors.hpp"
#include "hsinr/hypernet.hpp"
#include "test_util.hpp"

using namespace hsinr;
using hsinr::test::rand_tensor;

namespace {

HyperNetConfig small_cfg(std::size_t grid, std::size_t patch, std::size_t hidden = 8, std::size_t bands = 4) {
  HyperNetConfig c;
  c.grid = grid;
  c.patch_size = patch;
  c.channels = {6, 8, 8, 10, 10};
  c.mlp = MlpLayout(23, hidden, bands);
  return c;
}

template <typename T>
void randomize_head(HyperNetWeights<T>& w, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 0.05);
  for (auto& v : w.head.kernel.data_mut()) v = static_cast<T>(n(rng));
}

}  // namespace

TEST_CASE("downsampling depth per grid factor at patch 64") {
  HyperNetConfig c = small_cfg(2, 64);
  const std::size_t expected[][2] = {{2, 5}, {4, 4}, {8, 3}, {16, 2}, {64, 0}};
  for (auto [s, n] : expected) {
    c.grid = s;
    CHECK(c.downsampling_layers() == n);
  }
  c.grid = 16;
  c.patch_size = 16;
  CHECK(c.downsampling_layers() == 0);
  CHECK(c.feature_channels() == 3);
  c.grid = 3;
  CHECK_THROWS_AS(c.downsampling_layers(), ConfigError);
  c.grid = 32;
  CHECK_THROWS_AS(c.downsampling_layers(), ConfigError);
}

TEST_CASE("extract_features output geometry") {
  std::mt19937_64 rng(1);
  for (auto [s, p] : std::vector<std::pair<std::size_t, std::size_t>>{{4, 64}, {16, 64}, {16, 16}}) {
    const auto cfg = small_cfg(s, p);
    const auto w = init_hypernet<double>(cfg, rng);
    CHECK(w.extractor.size() == cfg.downsampling_layers());
    const auto f = extract_features(rand_tensor({3, p, p}, rng, 0, 1), cfg, w);
    CHECK(f.shape() == Shape{cfg.feature_channels(), s, s});
  }
  const auto cfg = small_cfg(4, 16);
  const auto w = init_hypernet<double>(cfg, rng);
  CHECK_THROWS_AS(extract_features(rand_tensor({3, 32, 32}, rng), cfg, w), ConfigError);
}

TEST_CASE("estimate_params: depth, size preservation, zero head") {
  std::mt19937_64 rng(2);
  HyperNetConfig cfg = small_cfg(4, 16);
  cfg.mlp = MlpLayout(23, 64, 31);
  auto w = init_hypernet<double>(cfg, rng, 0.0);
  const auto grid = build_grid(rand_tensor({3, 16, 16}, rng, 0, 1), cfg, w);
  CHECK(grid.grid == 4);
  CHECK(grid.per_cell_len == 20191);
  CHECK(grid.cells.shape() == Shape{16, 20191});
  for (double v : grid.cells.data()) CHECK(v == 0.0);

  // Each estimator block keeps the spatial size.
  auto feat = extract_features(rand_tensor({3, 16, 16}, rng, 0, 1), cfg, w);
  for (const auto& block : w.estimator) {
    const auto g = block.gamma(feat);
    CHECK(g.dim(1) == 4);
    CHECK(block.conv(g).shape() == feat.shape());
  }
}

TEST_CASE("build_grid: cell regions, degenerate grid and content adaptivity") {
  std::mt19937_64 rng(3);
  const auto cfg = small_cfg(4, 64);
  auto w = init_hypernet<double>(cfg, rng);
  randomize_head(w, rng);
  const auto g = build_grid(rand_tensor({3, 64, 64}, rng, 0, 1), cfg, w);
  CHECK(g.grid * g.grid == 16);
  const auto r = cell_region(1, 2, 4, 64, 64);
  CHECK(r.row0 == 16);
  CHECK(r.row1 == 32);
  CHECK(r.col0 == 32);
  CHECK(r.col1 == 48);

  const auto one = small_cfg(1, 4);
  auto w1 = init_hypernet<double>(one, rng);
  CHECK(build_grid(rand_tensor({3, 4, 4}, rng, 0, 1), one, w1).cells.shape() == Shape{1, one.mlp.total()});

  for (int trial = 0; trial < 10; ++trial) {
    const auto a = build_grid(rand_tensor({3, 64, 64}, rng, 0, 1), cfg, w);
    const auto b = build_grid(rand_tensor({3, 64, 64}, rng, 0, 1), cfg, w);
    CHECK(std::vector<double>(a.cells.data().begin(), a.cells.data().end()) !=
          std::vector<double>(b.cells.data().begin(), b.cells.data().end()));
    CHECK(a.cells.shape() == b.cells.shape());
  }
}

TEST_CASE("cell partition covers every pixel exactly once") {
  for (std::size_t s : {1, 2, 4, 8, 16}) {
    std::vector<int> count(64 * 64, 0);
    std::size_t area = 0;
    for (std::size_t i = 0; i < s; ++i)
      for (std::size_t j = 0; j < s; ++j) {
        const auto r = cell_region(i, j, s, 64, 64);
        area += (r.row1 - r.row0) * (r.col1 - r.col0);
        for (std::size_t y = r.row0; y < r.row1; ++y)
          for (std::size_t x = r.col0; x < r.col1; ++x) ++count[y * 64 + x];
      }
    CHECK(area == 64u * 64u);
    for (int c : count) CHECK(c == 1);
  }
  CHECK_THROWS_AS(cell_region(0, 0, 3, 64, 64), ConfigError);
  CHECK_THROWS_AS(cell_region(4, 0, 4, 64, 64), IndexError);
}

TEST_CASE("gradients reach every weight tensor") {
  std::mt19937_64 rng(4);
  const auto cfg = small_cfg(4, 16);
  auto w = init_hypernet<double>(cfg, rng);
  randomize_head(w, rng);
  const auto grid = build_grid(rand_tensor({3, 16, 16}, rng, 0, 1), cfg, w);
  sum_squares(grid.cells).backward();
  const auto params = w.parameters();
  const auto names = w.parameter_names();
  REQUIRE(params.size() == names.size());
  for (std::size_t t = 0; t < params.size(); ++t) {
    CAPTURE(names[t]);
    bool nonzero = false;
    for (double g : params[t].grad()) nonzero |= g != 0.0;
    CHECK(nonzero);
  }
}

TEST_CASE("parameter names follow declaration order") {
  std::mt19937_64 rng(5);
  const auto w = init_hypernet<float>(small_cfg(4, 16), rng);
  const auto names = w.parameter_names();
  CHECK(names.front() == "extractor.0.kernel");
  CHECK(names[4] == "estimator.0.gamma.kernel");
  CHECK(names.back() == "head.bias");
  CHECK(names.size() == w.parameters().size());
}
