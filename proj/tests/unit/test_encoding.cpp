#include <cmath>
#include <numbers>
#include <set>
#include <vector>

#include "doctest.h"
#include "hsinr/encoding.hpp"
#include "hsinr/errors.hpp"

using namespace hsinr;

TEST_CASE("encode_coord exact trig values") {
  const auto origin = encode_coord(0, 0, {1, true});
  CHECK(origin.values == std::vector<double>{1, 0, 1, 0});

  const auto e = encode_coord(0.25, 0.5, {2, true});
  REQUIRE(e.values.size() == 8);
  CHECK(std::abs(e.values[4]) < 1e-15);
  CHECK(e.values[5] == 1.0);
  CHECK(e.values[6] == -1.0);
  CHECK(std::abs(e.values[7]) < 1e-15);
}

TEST_CASE("encode_coord matches per-entry trig for N=5") {
  const double x = 0.3, y = 0.7;
  const auto e = encode_coord(x, y, {5, true});
  REQUIRE(e.values.size() == 20);
  for (int k = 0; k < 5; ++k) {
    const double f = std::pow(2.0, k) * std::numbers::pi;
    CHECK(e.values[4 * k + 0] == doctest::Approx(std::cos(f * x)).epsilon(1e-14));
    CHECK(e.values[4 * k + 1] == doctest::Approx(std::sin(f * x)).epsilon(1e-14));
    CHECK(e.values[4 * k + 2] == doctest::Approx(std::cos(f * y)).epsilon(1e-14));
    CHECK(e.values[4 * k + 3] == doctest::Approx(std::sin(f * y)).epsilon(1e-14));
  }
}

TEST_CASE("encode_coord domain") {
  CHECK_THROWS_AS(encode_coord(-0.1, 0.5, {}), DomainError);
  CHECK_THROWS_AS(encode_coord(0.5, 1.0001, {}), DomainError);
  CHECK_THROWS_AS(encode_coord(std::nan(""), 0.5, {}), DomainError);
  CHECK_NOTHROW(encode_coord(1.0, 1.0, {}));
}

TEST_CASE("output length and pass-through") {
  for (int n = 1; n <= 8; ++n) CHECK(encode_coord(0.1, 0.9, {n, true}).values.size() == 4u * n);
  CHECK(encode_coord(0.1, 0.9, {0, true}).values == std::vector<double>{0.1, 0.9});
  CHECK(encode_coord(0.1, 0.9, {5, false}).values == std::vector<double>{0.1, 0.9});
  CHECK(EncodingConfig{5, true}.dim() + 3 == 23);
  CHECK(EncodingConfig{5, false}.dim() + 3 == 5);
}

TEST_CASE("encode_grid") {
  const auto one = encode_grid<double>(1, 1, {1, true});
  REQUIRE(one.shape() == Shape{1, 1, 4});
  const double expect[4] = {0, 1, 0, 1};
  for (int i = 0; i < 4; ++i) CHECK(std::abs(one.data()[i] - expect[i]) < 1e-15);

  const auto raw = encode_grid<double>(3, 2, {0, true});
  REQUIRE(raw.shape() == Shape{2, 3, 2});
  CHECK(raw.data()[(1 * 3 + 2) * 2 + 0] == pixel_center(2, 3));
  CHECK(raw.data()[(1 * 3 + 2) * 2 + 1] == pixel_center(1, 2));

  const auto g = encode_grid<double>(4, 4, {3, true});
  REQUIRE(g.shape() == Shape{4, 4, 12});
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 4; ++c) {
      const auto e = encode_coord((c + 0.5) / 4, (r + 0.5) / 4, {3, true});
      for (std::size_t i = 0; i < 12; ++i) CHECK(g.data()[(r * 4 + c) * 12 + i] == e.values[i]);
    }
}

TEST_CASE("range and Pythagorean identity on a dense grid") {
  const auto g = encode_grid<double>(37, 23, {6, true});
  const auto v = g.data();
  for (std::size_t p = 0; p < 37 * 23; ++p)
    for (std::size_t k = 0; k < 6; ++k)
      for (std::size_t axis = 0; axis < 2; ++axis) {
        const double c = v[p * 24 + 4 * k + 2 * axis], s = v[p * 24 + 4 * k + 2 * axis + 1];
        CHECK(std::abs(c) <= 1.0);
        CHECK(std::abs(s) <= 1.0);
        CHECK(std::abs(c * c + s * s - 1.0) <= 1e-12);
      }
}

TEST_CASE("injective on a 64x64 pixel grid with N=5") {
  const auto g = encode_grid<double>(64, 64, {5, true});
  std::set<std::vector<long long>> seen;
  for (std::size_t p = 0; p < 64 * 64; ++p) {
    std::vector<long long> key(20);
    // Quantize at 1e-9 so the set compares values, not rounding noise.
    for (std::size_t i = 0; i < 20; ++i) key[i] = std::llround(g.data()[p * 20 + i] * 1e9);
    seen.insert(key);
  }
  CHECK(seen.size() == 64u * 64u);
}
