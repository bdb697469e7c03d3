#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "hsinr/tensor.hpp"

namespace hsinr {

struct GradCheckOptions {
  double h = 1e-5;
  /// Probe at most this many coordinates (chosen uniformly without replacement
  /// across all parameters); unset probes every coordinate.
  std::optional<std::size_t> max_probes;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_rel_error = 0;
  std::size_t probes = 0;
  /// Parameter tensor and flat coordinate of the worst probe.
  std::size_t worst_tensor = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0;
  double worst_numeric = 0;
};

/// Compares the analytic gradient of a scalar loss with central differences.
///
/// `loss` rebuilds the graph from the current values of `params` on each call.
/// For each probed coordinate, the error is
///   |analytic - numeric| / max(1, |analytic|, |numeric|).
/// Runs only in verification precision (double).
GradCheckResult grad_check(const std::function<Tensor<double>()>& loss, std::vector<Tensor<double>> params,
                           const GradCheckOptions& options = {});

/// Single-vector form: f maps a parameter vector to a scalar tensor.
GradCheckResult grad_check(const std::function<Tensor<double>(const Tensor<double>&)>& f, Tensor<double> theta,
                           double h);

}  // namespace hsinr
