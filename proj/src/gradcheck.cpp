#include "hsinr/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "hsinr/errors.hpp"

namespace hsinr {

namespace {

double eval(const std::function<Tensor<double>()>& loss) {
  NoGradGuard no_grad;
  const double v = loss().item();
  if (!std::isfinite(v)) throw NumericError("grad_check: non-finite loss while probing");
  return v;
}

}  // namespace

GradCheckResult grad_check(const std::function<Tensor<double>()>& loss, std::vector<Tensor<double>> params,
                           const GradCheckOptions& options) {
  if (!(options.h > 0)) throw DomainError("grad_check: step h must be positive");
  for (auto& p : params) {
    if (!p.requires_grad()) p.set_requires_grad(true);
    p.zero_grad();
  }
  {
    auto l = loss();
    if (!std::isfinite(l.item())) throw NumericError("grad_check: non-finite loss");
    l.backward();
  }

  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t t = 0; t < params.size(); ++t)
    for (std::size_t i = 0; i < params[t].size(); ++i) coords.emplace_back(t, i);
  if (options.max_probes && *options.max_probes < coords.size()) {
    std::mt19937_64 rng(options.seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(*options.max_probes);
    std::sort(coords.begin(), coords.end());
  }

  GradCheckResult result;
  for (auto [t, i] : coords) {
    auto values = params[t].data_mut();
    const double saved = values[i];
    values[i] = saved + options.h;
    const double up = eval(loss);
    values[i] = saved - options.h;
    const double down = eval(loss);
    values[i] = saved;

    const double numeric = (up - down) / (2 * options.h);
    const double analytic = params[t].grad()[i];
    if (!std::isfinite(analytic)) throw NumericError("grad_check: non-finite analytic gradient");
    const double err =
        std::abs(analytic - numeric) / std::max({1.0, std::abs(analytic), std::abs(numeric)});
    if (err > result.max_rel_error || result.probes == 0) {
      result.max_rel_error = std::max(result.max_rel_error, err);
      result.worst_tensor = t;
      result.worst_index = i;
      result.worst_analytic = analytic;
      result.worst_numeric = numeric;
    }
    ++result.probes;
  }
  return result;
}

GradCheckResult grad_check(const std::function<Tensor<double>(const Tensor<double>&)>& f, Tensor<double> theta,
                           double h) {
  GradCheckOptions options;
  options.h = h;
  return grad_check([&] { return f(theta); }, {theta}, options);
}

}  // namespace hsinr
