#include "hsinr/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "hsinr/errors.hpp"

namespace hsinr {

namespace {

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Map = Eigen::Map<MatRM<T>>;
template <typename T>
using CMap = Eigen::Map<const MatRM<T>>;

using detail::make_result;
using detail::Node;
using detail::parent_grad;

void require_same_shape(const char* op, const Shape& a, const Shape& b) {
  if (a != b) throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a) + " vs " + to_string(b));
}

void require_rank(const char* op, const Shape& s, std::size_t rank, const char* what) {
  if (s.size() != rank)
    throw DimensionError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) + ", got " +
                         to_string(s));
}

// Unfolds x [C x H x W] into columns [C*k*k x Ho*Wo]; out-of-image taps read 0.
template <typename T>
void im2col(const T* x, std::size_t C, std::size_t H, std::size_t W, std::size_t k, std::size_t stride,
            std::size_t pad, std::size_t Ho, std::size_t Wo, T* cols) {
  const std::size_t spatial = Ho * Wo;
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t ki = 0; ki < k; ++ki)
      for (std::size_t kj = 0; kj < k; ++kj) {
        T* row = cols + ((c * k + ki) * k + kj) * spatial;
        for (std::size_t oi = 0; oi < Ho; ++oi) {
          const auto ii = static_cast<std::ptrdiff_t>(oi * stride + ki) - static_cast<std::ptrdiff_t>(pad);
          for (std::size_t oj = 0; oj < Wo; ++oj) {
            const auto jj = static_cast<std::ptrdiff_t>(oj * stride + kj) - static_cast<std::ptrdiff_t>(pad);
            const bool inside = ii >= 0 && jj >= 0 && ii < static_cast<std::ptrdiff_t>(H) &&
                                jj < static_cast<std::ptrdiff_t>(W);
            row[oi * Wo + oj] = inside ? x[(c * H + ii) * W + jj] : T(0);
          }
        }
      }
}

template <typename T>
void col2im_add(const T* cols, std::size_t C, std::size_t H, std::size_t W, std::size_t k, std::size_t stride,
                std::size_t pad, std::size_t Ho, std::size_t Wo, T* dx) {
  const std::size_t spatial = Ho * Wo;
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t ki = 0; ki < k; ++ki)
      for (std::size_t kj = 0; kj < k; ++kj) {
        const T* row = cols + ((c * k + ki) * k + kj) * spatial;
        for (std::size_t oi = 0; oi < Ho; ++oi) {
          const auto ii = static_cast<std::ptrdiff_t>(oi * stride + ki) - static_cast<std::ptrdiff_t>(pad);
          if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(H)) continue;
          for (std::size_t oj = 0; oj < Wo; ++oj) {
            const auto jj = static_cast<std::ptrdiff_t>(oj * stride + kj) - static_cast<std::ptrdiff_t>(pad);
            if (jj < 0 || jj >= static_cast<std::ptrdiff_t>(W)) continue;
            dx[(c * H + ii) * W + jj] += row[oi * Wo + oj];
          }
        }
      }
}

}  // namespace

template <typename T>
Tensor<T> dense_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  require_rank("dense_forward", x.shape(), 2, "input");
  require_rank("dense_forward", w.shape(), 2, "weight");
  require_rank("dense_forward", b.shape(), 1, "bias");
  const std::size_t batch = x.dim(0), in = x.dim(1), out = w.dim(1);
  if (w.dim(0) != in || b.dim(0) != out)
    throw DimensionError("dense_forward: input " + to_string(x.shape()) + " incompatible with weight " +
                         to_string(w.shape()) + " and bias " + to_string(b.shape()));

  Buffer<T> y(batch * out);
  Map<T> Y(y.data(), batch, out);
  CMap<T> X(x.data().data(), batch, in);
  CMap<T> Wm(w.data().data(), in, out);
  Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> B(b.data().data(), out);
  Y.noalias() = X * Wm;
  Y.rowwise() += B;

  return make_result<T>("dense_forward", {batch, out}, std::move(y), {x, w, b},
                        [batch, in, out](Node<T>& self) {
                          CMap<T> dY(self.grad.data(), batch, out);
                          const auto& xs = self.parents[0]->value;
                          const auto& ws = self.parents[1]->value;
                          if (T* g = parent_grad(self, 0)) {
                            Map<T>(g, batch, in).noalias() += dY * CMap<T>(ws.data(), in, out).transpose();
                          }
                          if (T* g = parent_grad(self, 1)) {
                            Map<T>(g, in, out).noalias() += CMap<T>(xs.data(), batch, in).transpose() * dY;
                          }
                          if (T* g = parent_grad(self, 2)) {
                            Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(g, out) += dY.colwise().sum();
                          }
                        });
}

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& kernels, const Tensor<T>& bias, std::size_t stride,
                         std::size_t padding) {
  require_rank("conv2d_forward", x.shape(), 3, "input");
  require_rank("conv2d_forward", kernels.shape(), 4, "kernels");
  require_rank("conv2d_forward", bias.shape(), 1, "bias");
  if (stride == 0) throw ConfigError("conv2d_forward: stride must be positive");
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  const std::size_t Co = kernels.dim(0), k = kernels.dim(2);
  if (kernels.dim(1) != C || kernels.dim(3) != k || bias.dim(0) != Co)
    throw DimensionError("conv2d_forward: input " + to_string(x.shape()) + " incompatible with kernels " +
                         to_string(kernels.shape()) + " and bias " + to_string(bias.shape()));
  const std::size_t Hp = H + 2 * padding, Wp = W + 2 * padding;
  if (Hp < k || Wp < k || (Hp - k) % stride != 0 || (Wp - k) % stride != 0)
    throw ConfigError("conv2d_forward: geometry is not an exact fit (input " + to_string(x.shape()) + ", kernel " +
                      std::to_string(k) + ", stride " + std::to_string(stride) + ", padding " +
                      std::to_string(padding) + ")");
  const std::size_t Ho = (Hp - k) / stride + 1, Wo = (Wp - k) / stride + 1;
  const std::size_t patch = C * k * k, spatial = Ho * Wo;

  Buffer<T> cols(patch * spatial);
  im2col(x.data().data(), C, H, W, k, stride, padding, Ho, Wo, cols.data());

  Buffer<T> y(Co * spatial);
  Map<T> Y(y.data(), Co, spatial);
  Y.noalias() = CMap<T>(kernels.data().data(), Co, patch) * CMap<T>(cols.data(), patch, spatial);
  Y.colwise() += Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>(bias.data().data(), Co);

  return make_result<T>(
      "conv2d_forward", {Co, Ho, Wo}, std::move(y), {x, kernels, bias},
      [=, cols = std::move(cols)](Node<T>& self) {
        CMap<T> dY(self.grad.data(), Co, spatial);
        if (T* g = parent_grad(self, 1)) {
          Map<T>(g, Co, patch).noalias() += dY * CMap<T>(cols.data(), patch, spatial).transpose();
        }
        if (T* g = parent_grad(self, 2)) {
          Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>(g, Co) += dY.rowwise().sum();
        }
        if (T* g = parent_grad(self, 0)) {
          Buffer<T> dcols(patch * spatial);
          Map<T>(dcols.data(), patch, spatial).noalias() =
              CMap<T>(self.parents[1]->value.data(), Co, patch).transpose() * dY;
          col2im_add(dcols.data(), C, H, W, k, stride, padding, Ho, Wo, g);
        }
      });
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, double slope) {
  const T s = static_cast<T>(slope);
  auto in = x.data();
  Buffer<T> y(in.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = in[i] >= T(0) ? in[i] : s * in[i];
  return make_result<T>("leaky_relu", x.shape(), std::move(y), {x}, [s](Node<T>& self) {
    T* g = parent_grad(self, 0);
    if (!g) return;
    const auto& xv = self.parents[0]->value;
    for (std::size_t i = 0; i < xv.size(); ++i) g[i] += xv[i] >= T(0) ? self.grad[i] : s * self.grad[i];
  });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  auto in = x.data();
  Buffer<T> y(in.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = in[i] > T(0) ? in[i] : T(0);
  return make_result<T>("relu", x.shape(), std::move(y), {x}, [](Node<T>& self) {
    T* g = parent_grad(self, 0);
    if (!g) return;
    const auto& xv = self.parents[0]->value;
    for (std::size_t i = 0; i < xv.size(); ++i)
      if (xv[i] > T(0)) g[i] += self.grad[i];
  });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  auto in = x.data();
  Buffer<T> y(in.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const T v = in[i];
    if (v >= T(0)) {
      y[i] = T(1) / (T(1) + std::exp(-v));
    } else {
      const T e = std::exp(v);
      y[i] = e / (T(1) + e);
    }
    // Rounding would otherwise reach the closed endpoints for |x| beyond ~37 (double) or ~17 (float).
    y[i] = std::clamp(y[i], std::numeric_limits<T>::min(), std::nextafter(T(1), T(0)));
  }
  return make_result<T>("sigmoid", x.shape(), std::move(y), {x}, [](Node<T>& self) {
    T* g = parent_grad(self, 0);
    if (!g) return;
    for (std::size_t i = 0; i < self.value.size(); ++i) {
      const T s = self.value[i];
      g[i] += self.grad[i] * s * (T(1) - s);
    }
  });
}

template <typename T>
Tensor<T> l1_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  require_same_shape("l1_loss", pred.shape(), target.shape());
  auto p = pred.data();
  auto t = target.data();
  T sum = 0;
  for (std::size_t i = 0; i < p.size(); ++i) sum += std::abs(p[i] - t[i]);
  const T n = static_cast<T>(p.size());
  return make_result<T>("l1_loss", {1}, {sum / n}, {pred, target}, [n](Node<T>& self) {
    const auto& pv = self.parents[0]->value;
    const auto& tv = self.parents[1]->value;
    const T g0 = self.grad[0] / n;
    T* gp = parent_grad(self, 0);
    T* gt = parent_grad(self, 1);
    for (std::size_t i = 0; i < pv.size(); ++i) {
      const T d = pv[i] - tv[i];
      const T s = d > T(0) ? g0 : (d < T(0) ? -g0 : T(0));
      if (gp) gp[i] += s;
      if (gt) gt[i] -= s;
    }
  });
}

template <typename T>
Tensor<T> sum_squares(const Tensor<T>& x) {
  T sum = 0;
  for (T v : x.data()) sum += v * v;
  return make_result<T>("sum_squares", {1}, {sum}, {x}, [](Node<T>& self) {
    T* g = parent_grad(self, 0);
    if (!g) return;
    const auto& xv = self.parents[0]->value;
    for (std::size_t i = 0; i < xv.size(); ++i) g[i] += T(2) * xv[i] * self.grad[0];
  });
}

template <typename T>
Tensor<T> instance_norm(const Tensor<T>& x, double eps) {
  require_rank("instance_norm", x.shape(), 3, "input");
  const std::size_t C = x.dim(0), n = x.dim(1) * x.dim(2);
  auto in = x.data();
  Buffer<T> y(in.size());
  Buffer<T> inv_std(C);
  for (std::size_t c = 0; c < C; ++c) {
    const T* xc = in.data() + c * n;
    T mean = 0;
    for (std::size_t i = 0; i < n; ++i) mean += xc[i];
    mean /= static_cast<T>(n);
    T var = 0;
    for (std::size_t i = 0; i < n; ++i) var += (xc[i] - mean) * (xc[i] - mean);
    var /= static_cast<T>(n);
    inv_std[c] = T(1) / std::sqrt(var + static_cast<T>(eps));
    for (std::size_t i = 0; i < n; ++i) y[c * n + i] = (xc[i] - mean) * inv_std[c];
  }
  return make_result<T>("instance_norm", x.shape(), std::move(y), {x},
                        [C, n, inv_std = std::move(inv_std)](Node<T>& self) {
                          T* g = parent_grad(self, 0);
                          if (!g) return;
                          const T inv_n = T(1) / static_cast<T>(n);
                          for (std::size_t c = 0; c < C; ++c) {
                            const T* dy = self.grad.data() + c * n;
                            const T* yc = self.value.data() + c * n;
                            T mean_dy = 0, mean_dyy = 0;
                            for (std::size_t i = 0; i < n; ++i) {
                              mean_dy += dy[i];
                              mean_dyy += dy[i] * yc[i];
                            }
                            mean_dy *= inv_n;
                            mean_dyy *= inv_n;
                            for (std::size_t i = 0; i < n; ++i)
                              g[c * n + i] += inv_std[c] * (dy[i] - mean_dy - yc[i] * mean_dyy);
                          }
                        });
}

template <typename T>
Tensor<T> modulate(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta) {
  require_same_shape("modulate", x.shape(), gamma.shape());
  require_same_shape("modulate", x.shape(), beta.shape());
  auto xv = x.data();
  auto gv = gamma.data();
  auto bv = beta.data();
  Buffer<T> y(xv.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] * (T(1) + gv[i]) + bv[i];
  return make_result<T>("modulate", x.shape(), std::move(y), {x, gamma, beta}, [](Node<T>& self) {
    const auto& xs = self.parents[0]->value;
    const auto& gs = self.parents[1]->value;
    T* dx = parent_grad(self, 0);
    T* dg = parent_grad(self, 1);
    T* db = parent_grad(self, 2);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const T d = self.grad[i];
      if (dx) dx[i] += d * (T(1) + gs[i]);
      if (dg) dg[i] += d * xs[i];
      if (db) db[i] += d;
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, double factor) {
  const T f = static_cast<T>(factor);
  Buffer<T> y(x.data().begin(), x.data().end());
  for (auto& v : y) v *= f;
  return make_result<T>("scale", x.shape(), std::move(y), {x}, [f](Node<T>& self) {
    T* g = parent_grad(self, 0);
    if (!g) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += f * self.grad[i];
  });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (numel(shape) != x.size())
    throw DimensionError("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  Buffer<T> y(x.data().begin(), x.data().end());
  return make_result<T>("reshape", std::move(shape), std::move(y), {x}, [](Node<T>& self) {
    T* g = parent_grad(self, 0);
    if (!g) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  });
}

template <typename T>
Tensor<T> transpose2d(const Tensor<T>& x) {
  require_rank("transpose2d", x.shape(), 2, "input");
  const std::size_t r = x.dim(0), c = x.dim(1);
  Buffer<T> y(r * c);
  Map<T>(y.data(), c, r) = CMap<T>(x.data().data(), r, c).transpose();
  return make_result<T>("transpose2d", {c, r}, std::move(y), {x}, [r, c](Node<T>& self) {
    T* g = parent_grad(self, 0);
    if (!g) return;
    Map<T>(g, r, c) += CMap<T>(self.grad.data(), c, r).transpose();
  });
}

template <typename T>
Tensor<T> slice(const Tensor<T>& x, std::size_t offset, Shape shape) {
  const std::size_t n = numel(shape);
  if (offset + n > x.size())
    throw DimensionError("slice: range [" + std::to_string(offset) + ", " + std::to_string(offset + n) +
                         ") exceeds tensor of " + std::to_string(x.size()) + " values");
  auto src = x.data();
  Buffer<T> y(src.begin() + static_cast<std::ptrdiff_t>(offset),
                   src.begin() + static_cast<std::ptrdiff_t>(offset + n));
  return make_result<T>("slice", std::move(shape), std::move(y), {x}, [offset](Node<T>& self) {
    T* g = parent_grad(self, 0);
    if (!g) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[offset + i] += self.grad[i];
  });
}

void CoverageMap::mark(std::size_t r0, std::size_t r1, std::size_t c0, std::size_t c1) {
  if (r1 > rows_ || c1 > cols_ || r0 > r1 || c0 > c1)
    throw IndexError("coverage region exceeds " + std::to_string(rows_) + " x " + std::to_string(cols_) + " raster");
  for (std::size_t r = r0; r < r1; ++r)
    for (std::size_t c = c0; c < c1; ++c) {
      if (count_[r * cols_ + c]++ != 0)
        throw LayoutError("pixel (" + std::to_string(r) + ", " + std::to_string(c) + ") written twice");
    }
}

bool CoverageMap::complete() const { return covered() == count_.size(); }

std::size_t CoverageMap::covered() const {
  std::size_t n = 0;
  for (auto v : count_) n += v == 1;
  return n;
}

template <typename T>
Tensor<T> stitch_cells(const std::vector<Tensor<T>>& cells, std::size_t grid) {
  if (grid == 0 || cells.size() != grid * grid)
    throw DimensionError("stitch_cells: expected " + std::to_string(grid * grid) + " cells, got " +
                         std::to_string(cells.size()));
  const Shape& cs = cells.front().shape();
  require_rank("stitch_cells", cs, 3, "cell");
  for (const auto& c : cells) require_same_shape("stitch_cells", cs, c.shape());
  const std::size_t L = cs[0], h = cs[1], w = cs[2], H = grid * h, W = grid * w;

  CoverageMap coverage(H, W);
  Buffer<T> y(L * H * W);
  for (std::size_t i = 0; i < grid; ++i)
    for (std::size_t j = 0; j < grid; ++j) {
      coverage.mark(i * h, (i + 1) * h, j * w, (j + 1) * w);
      auto src = cells[i * grid + j].data();
      for (std::size_t b = 0; b < L; ++b)
        for (std::size_t r = 0; r < h; ++r)
          for (std::size_t c = 0; c < w; ++c) y[(b * H + i * h + r) * W + j * w + c] = src[(b * h + r) * w + c];
    }
  if (!coverage.complete()) throw LayoutError("stitch_cells: output not fully covered");

  return make_result<T>("stitch_cells", {L, H, W}, std::move(y), cells, [grid, L, h, w, H, W](Node<T>& self) {
    for (std::size_t i = 0; i < grid; ++i)
      for (std::size_t j = 0; j < grid; ++j) {
        T* g = parent_grad(self, i * grid + j);
        if (!g) continue;
        for (std::size_t b = 0; b < L; ++b)
          for (std::size_t r = 0; r < h; ++r)
            for (std::size_t c = 0; c < w; ++c)
              g[(b * h + r) * w + c] += self.grad[(b * H + i * h + r) * W + j * w + c];
      }
  });
}

#define HSINR_INSTANTIATE(T)                                                                           \
  template Tensor<T> dense_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);              \
  template Tensor<T> conv2d_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t, \
                                    std::size_t);                                                      \
  template Tensor<T> leaky_relu(const Tensor<T>&, double);                                             \
  template Tensor<T> relu(const Tensor<T>&);                                                           \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                        \
  template Tensor<T> l1_loss(const Tensor<T>&, const Tensor<T>&);                                      \
  template Tensor<T> sum_squares(const Tensor<T>&);                                                    \
  template Tensor<T> instance_norm(const Tensor<T>&, double);                                          \
  template Tensor<T> modulate(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                   \
  template Tensor<T> scale(const Tensor<T>&, double);                                                  \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                                 \
  template Tensor<T> transpose2d(const Tensor<T>&);                                                    \
  template Tensor<T> slice(const Tensor<T>&, std::size_t, Shape);                                      \
  template Tensor<T> stitch_cells(const std::vector<Tensor<T>>&, std::size_t);

HSINR_INSTANTIATE(float)
HSINR_INSTANTIATE(double)

}  // namespace hsinr
