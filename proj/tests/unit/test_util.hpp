#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "hsinr/dataio.hpp"
#include "hsinr/tensor.hpp"

namespace hsinr::test {

// Multiples of 1/8 in [-2, 2]. Products and sums of these stay exact in double,
// so loop oracles and blocked GEMMs agree bit for bit regardless of summation order.
inline std::vector<double> dyadic(std::size_t n, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> d(-16, 16);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng) / 8.0;
  return v;
}

inline std::vector<double> uniform(std::size_t n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

inline Tensor<double> rand_tensor(Shape s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  const auto n = numel(s);
  return Tensor<double>(std::move(s), uniform(n, rng, lo, hi));
}

inline Tensor<double> dyadic_tensor(Shape s, std::mt19937_64& rng) {
  const auto n = numel(s);
  return Tensor<double>(std::move(s), dyadic(n, rng));
}

inline HsiCube rand_cube(std::size_t w, std::size_t h, std::size_t l, std::mt19937_64& rng, float lo = 0.0f,
                         float hi = 1.0f) {
  HsiCube c(w, h, visible_wavelengths(l));
  std::uniform_real_distribution<float> d(lo, hi);
  for (auto& x : c.data) x = d(rng);
  return c;
}

}  // namespace hsinr::test
