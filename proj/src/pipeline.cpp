#include "hsinr/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "hsinr/binio.hpp"
#include "hsinr/errors.hpp"
#include "hsinr/ops.hpp"

namespace hsinr {

void TrainConfig::validate() const {
  if (!(lr0 > 0)) throw ConfigError("learning rate must be positive");
  if (epochs == 0) throw ConfigError("epochs must be positive");
  if (decay_every == 0) throw ConfigError("decay interval must be positive");
  if (!(decay_factor > 0)) throw ConfigError("decay factor must be positive");
  if (patches_per_image == 0 || batch_size == 0) throw ConfigError("patch count and batch size must be positive");
  if (bands == 0 || hidden_width == 0) throw ConfigError("bands and hidden width must be positive");
  if (n_freqs < 0) throw ConfigError("frequency count must be non-negative");
  if (!(slope > 0 && slope < 1)) throw ConfigError("Leaky-ReLU slope must lie in (0, 1)");
  if (grid == 0 || patch % grid != 0)
    throw ConfigError("patch " + std::to_string(patch) + " is not divisible by S=" + std::to_string(grid));
  hypernet().validate();
}

MlpLayout TrainConfig::layout() const { return MlpLayout(3 + encoding_config().dim(), hidden_width, bands); }

HyperNetConfig TrainConfig::hypernet() const {
  HyperNetConfig h;
  h.grid = grid;
  h.patch_size = patch;
  h.channels = channels;
  h.estimator_blocks = estimator_blocks;
  h.slope = slope;
  h.mlp = layout();
  return h;
}

double lr_schedule(std::size_t epoch, const TrainConfig& cfg) {
  return cfg.lr0 * std::pow(cfg.decay_factor, static_cast<double>(epoch / cfg.decay_every));
}

template <typename T>
Tensor<T> crop_chw(const Tensor<T>& x, std::size_t r0, std::size_t c0, std::size_t h, std::size_t w) {
  if (x.rank() != 3 || r0 + h > x.dim(1) || c0 + w > x.dim(2))
    throw DimensionError("crop_chw: window exceeds " + to_string(x.shape()));
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  auto src = x.data();
  std::vector<T> out(C * h * w);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t r = 0; r < h; ++r)
      std::copy_n(src.begin() + static_cast<std::ptrdiff_t>((c * H + r0 + r) * W + c0), w,
                  out.begin() + static_cast<std::ptrdiff_t>((c * h + r) * w));
  return Tensor<T>({C, h, w}, std::move(out));
}

template <typename T>
Tensor<T> crop_hwd(const Tensor<T>& x, std::size_t r0, std::size_t c0, std::size_t h, std::size_t w) {
  if (x.rank() != 3 || r0 + h > x.dim(0) || c0 + w > x.dim(1))
    throw DimensionError("crop_hwd: window exceeds " + to_string(x.shape()));
  const std::size_t W = x.dim(1), D = x.dim(2);
  auto src = x.data();
  std::vector<T> out(h * w * D);
  for (std::size_t r = 0; r < h; ++r)
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(((r0 + r) * W + c0) * D), w * D,
                out.begin() + static_cast<std::ptrdiff_t>(r * w * D));
  return Tensor<T>({h, w, D}, std::move(out));
}

template <typename T>
Model<T>::Model(const TrainConfig& cfg, std::mt19937_64& rng)
    : cfg_(cfg), hcfg_(cfg.hypernet()), weights_(init_hypernet<T>(hcfg_, rng, cfg.head_bias_std)) {
  cfg_.validate();
  enc_ = encode_grid<T>(cfg_.patch, cfg_.patch, cfg_.encoding_config());
}

template <typename T>
Model<T>::Model(const TrainConfig& cfg, HyperNetWeights<T> weights)
    : cfg_(cfg), hcfg_(cfg.hypernet()), weights_(std::move(weights)) {
  cfg_.validate();
  enc_ = encode_grid<T>(cfg_.patch, cfg_.patch, cfg_.encoding_config());
}

template <typename T>
Tensor<T> Model<T>::forward_full(const Tensor<T>& rgb) const {
  const std::size_t P = cfg_.patch, S = cfg_.grid;
  if (rgb.rank() != 3 || rgb.dim(0) != 3 || rgb.dim(1) != P || rgb.dim(2) != P)
    throw ConfigError("forward_full: input " + to_string(rgb.shape()) + " is not a 3 x " + std::to_string(P) +
                      " x " + std::to_string(P) + " patch");
  const auto grid = build_grid(rgb, hcfg_, weights_);
  std::vector<Tensor<T>> cells;
  cells.reserve(S * S);
  for (std::size_t i = 0; i < S; ++i)
    for (std::size_t j = 0; j < S; ++j) {
      const auto reg = cell_region(i, j, S, P, P);
      const std::size_t h = reg.row1 - reg.row0, w = reg.col1 - reg.col0;
      cells.push_back(evaluate_patch(crop_chw(rgb, reg.row0, reg.col0, h, w),
                                     crop_hwd(enc_, reg.row0, reg.col0, h, w), grid.cell(i, j), hcfg_.mlp,
                                     cfg_.slope));
    }
  return stitch_cells(cells, S);
}

std::vector<PatchPair> sample_patches(const HsiCube& cube, const HsiCube& rgb, std::size_t count, std::size_t patch,
                                      std::mt19937_64& rng) {
  if (cube.width != rgb.width || cube.height != rgb.height)
    throw DimensionError("sample_patches: RGB and HSI spatial sizes differ");
  if (cube.width < patch || cube.height < patch)
    throw DimensionError("sample_patches: cube " + std::to_string(cube.height) + " x " + std::to_string(cube.width) +
                         " is smaller than patch " + std::to_string(patch));
  std::uniform_int_distribution<std::size_t> rows(0, cube.height - patch), cols(0, cube.width - patch);
  std::vector<PatchPair> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    PatchPair p;
    p.row = rows(rng);
    p.col = cols(rng);
    p.rgb = rgb.crop(p.row, p.col, patch, patch);
    p.hsi = cube.crop(p.row, p.col, patch, patch);
    out.push_back(std::move(p));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoint container

namespace {

void write_config(ByteWriter& w, const TrainConfig& c) {
  w.f64(c.lr0);
  w.u64(c.epochs);
  w.f64(c.decay_factor);
  w.u64(c.decay_every);
  w.u64(c.patch);
  w.u64(c.patches_per_image);
  w.u64(c.batch_size);
  w.u64(c.seed);
  w.u64(c.grid);
  w.u32(static_cast<std::uint32_t>(c.n_freqs));
  w.u32(c.encoding ? 1 : 0);
  w.u64(c.hidden_width);
  w.u64(c.bands);
  w.u32(static_cast<std::uint32_t>(c.channels.size()));
  for (auto ch : c.channels) w.u64(ch);
  w.u64(c.estimator_blocks);
  w.f64(c.slope);
  w.f64(c.head_bias_std);
  w.u32(c.precision == Precision::standard ? 32 : 64);
}

TrainConfig read_config(ByteReader& r) {
  TrainConfig c;
  c.lr0 = r.f64();
  c.epochs = r.u64();
  c.decay_factor = r.f64();
  c.decay_every = r.u64();
  c.patch = r.u64();
  c.patches_per_image = r.u64();
  c.batch_size = r.u64();
  c.seed = r.u64();
  c.grid = r.u64();
  c.n_freqs = static_cast<int>(r.u32());
  c.encoding = r.u32() != 0;
  c.hidden_width = r.u64();
  c.bands = r.u64();
  const std::size_t nc = r.u32();
  if (nc > 64) throw FormatError("implausible channel list length", r.offset() - 4);
  c.channels.resize(nc);
  for (auto& ch : c.channels) ch = r.u64();
  c.estimator_blocks = r.u64();
  c.slope = r.f64();
  c.head_bias_std = r.f64();
  const auto bits = r.u32();
  if (bits != 32 && bits != 64) throw FormatError("unknown precision tag", r.offset() - 4);
  c.precision = bits == 32 ? Precision::standard : Precision::verification;
  return c;
}

void write_floats(ByteWriter& w, const std::vector<float>& v) {
  for (float x : v) w.f32(x);
}

std::vector<float> read_floats(ByteReader& r, std::size_t n) {
  if (r.remaining() < 4 * n) throw FormatError("tensor payload truncated", r.offset());
  std::vector<float> v(n);
  for (auto& x : v) x = r.f32();
  return v;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  ByteWriter w;
  w.bytes("INRC");
  w.u32(kCheckpointVersion);
  write_config(w, ckpt.config);
  w.u32(static_cast<std::uint32_t>(ckpt.wavelengths.size()));
  for (double l : ckpt.wavelengths) w.f64(l);

  w.u32(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (std::size_t t = 0; t < ckpt.tensors.size(); ++t) {
    w.str(ckpt.names[t]);
    w.u32(static_cast<std::uint32_t>(ckpt.shapes[t].size()));
    for (auto d : ckpt.shapes[t]) w.u32(static_cast<std::uint32_t>(d));
    write_floats(w, ckpt.tensors[t]);
  }
  w.f64(ckpt.adam.beta1);
  w.f64(ckpt.adam.beta2);
  w.f64(ckpt.adam.epsilon);
  for (std::size_t t = 0; t < ckpt.tensors.size(); ++t) {
    w.u64(ckpt.adam_steps[t]);
    write_floats(w, ckpt.adam_m[t]);
    write_floats(w, ckpt.adam_v[t]);
  }
  w.u64(ckpt.epoch);
  w.u64(ckpt.step);
  w.str(ckpt.rng_state);
  return w.take();
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes);
  r.expect_magic("INRC");
  const auto version = r.u32();
  if (version != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version), r.offset() - 4);
  Checkpoint c;
  c.config = read_config(r);
  const std::size_t nl = r.u32();
  if (nl > 1u << 16) throw FormatError("implausible wavelength count", r.offset() - 4);
  c.wavelengths.resize(nl);
  for (auto& l : c.wavelengths) l = r.f64();

  const std::size_t nt = r.u32();
  if (nt > 1u << 16) throw FormatError("implausible tensor count", r.offset() - 4);
  for (std::size_t t = 0; t < nt; ++t) {
    c.names.push_back(r.str());
    const std::size_t rank = r.u32();
    if (rank == 0 || rank > 8) throw FormatError("implausible tensor rank", r.offset() - 4);
    Shape s(rank);
    for (auto& d : s) d = r.u32();
    c.shapes.push_back(s);
    c.tensors.push_back(read_floats(r, numel(s)));
  }
  c.adam.beta1 = r.f64();
  c.adam.beta2 = r.f64();
  c.adam.epsilon = r.f64();
  for (std::size_t t = 0; t < nt; ++t) {
    c.adam_steps.push_back(r.u64());
    c.adam_m.push_back(read_floats(r, c.tensors[t].size()));
    c.adam_v.push_back(read_floats(r, c.tensors[t].size()));
  }
  c.epoch = r.u64();
  c.step = r.u64();
  c.rng_state = r.str();
  if (r.remaining() != 0) throw FormatError("trailing bytes after checkpoint", r.offset());
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  write_file(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

template <typename T>
HyperNetWeights<T> weights_from_checkpoint(const Checkpoint& ckpt) {
  try {
    ckpt.config.validate();
  } catch (const ConfigError& e) {
    throw CompatibilityError(std::string("checkpoint config is invalid: ") + e.what());
  }
  // Initialize a template with the right shapes, then overwrite every tensor.
  std::mt19937_64 rng(0);
  auto w = init_hypernet<T>(ckpt.config.hypernet(), rng, 0.0);
  auto params = w.parameters();
  const auto names = w.parameter_names();
  if (params.size() != ckpt.tensors.size())
    throw CompatibilityError("checkpoint holds " + std::to_string(ckpt.tensors.size()) + " tensors, config needs " +
                             std::to_string(params.size()));
  for (std::size_t t = 0; t < params.size(); ++t) {
    if (params[t].shape() != ckpt.shapes[t] || names[t] != ckpt.names[t])
      throw CompatibilityError("checkpoint tensor '" + ckpt.names[t] + "' " + to_string(ckpt.shapes[t]) +
                               " does not match expected '" + names[t] + "' " + to_string(params[t].shape()));
    std::transform(ckpt.tensors[t].begin(), ckpt.tensors[t].end(), params[t].data_mut().begin(),
                   [](float v) { return static_cast<T>(v); });
  }
  return w;
}

// ---------------------------------------------------------------------------
// Trainer

template <typename T>
Trainer<T>::Trainer(const TrainConfig& cfg, std::vector<double> wavelengths)
    : Trainer(cfg, std::move(wavelengths), std::mt19937_64(cfg.seed)) {}

template <typename T>
Trainer<T>::Trainer(const TrainConfig& cfg, std::vector<double> wavelengths, std::mt19937_64 rng)
    : rng_(std::move(rng)), model_(cfg, rng_), wavelengths_(std::move(wavelengths)) {
  if (precision_of<T>() != cfg.precision)
    throw ConfigError(std::string("trainer precision does not match config (") + to_string(cfg.precision) + ")");
  if (wavelengths_.empty()) wavelengths_ = visible_wavelengths(cfg.bands);
  if (wavelengths_.size() != cfg.bands) throw ConfigError("wavelength list does not match band count");
  params_ = model_.weights().parameters();
  for (const auto& p : params_) adam_.emplace_back(p.size());
}

template <typename T>
Trainer<T> Trainer<T>::from_checkpoint(const Checkpoint& ckpt) {
  Trainer t(ckpt.config, ckpt.wavelengths);
  t.model_ = Model<T>(ckpt.config, weights_from_checkpoint<T>(ckpt));
  t.params_ = t.model_.weights().parameters();
  for (std::size_t i = 0; i < t.params_.size(); ++i) {
    AdamState<T> s(t.params_[i].size(), ckpt.adam);
    s.step_count = ckpt.adam_steps[i];
    std::transform(ckpt.adam_m[i].begin(), ckpt.adam_m[i].end(), s.m.begin(), [](float v) { return T(v); });
    std::transform(ckpt.adam_v[i].begin(), ckpt.adam_v[i].end(), s.v.begin(), [](float v) { return T(v); });
    t.adam_[i] = std::move(s);
  }
  t.epoch_ = ckpt.epoch;
  t.step_ = ckpt.step;
  std::istringstream is(ckpt.rng_state);
  is >> t.rng_;
  if (!is) throw FormatError("checkpoint RNG state is unreadable", 0);
  return t;
}

template <typename T>
double Trainer<T>::loss_of(const PatchPair& pair) const {
  NoGradGuard no_grad;
  return l1_loss(model_.forward_full(pair.rgb.to_tensor<T>()), pair.hsi.to_tensor<T>()).item();
}

template <typename T>
double Trainer<T>::training_step(std::span<const PatchPair> batch) {
  if (batch.empty()) throw InputError("training_step: empty batch");
  for (auto& p : params_) p.zero_grad();
  const double inv = 1.0 / static_cast<double>(batch.size());
  double total = 0;
  for (const auto& pair : batch) {
    if (pair.hsi.bands != model_.config().bands || pair.rgb.bands != 3)
      throw DimensionError("training_step: patch bands do not match the model");
    auto loss = l1_loss(model_.forward_full(pair.rgb.to_tensor<T>()), pair.hsi.to_tensor<T>());
    if (!std::isfinite(loss.item())) throw NumericError("training_step: non-finite loss");
    total += loss.item();
    scale(loss, inv).backward();
  }
  for (const auto& p : params_)
    for (T g : p.grad())
      if (!std::isfinite(g)) throw NumericError("training_step: non-finite gradient");
  const double lr = current_lr();
  for (std::size_t i = 0; i < params_.size(); ++i) adam_step(params_[i], adam_[i], lr);
  ++step_;
  return total * inv;
}

template <typename T>
double Trainer<T>::run_epoch(const std::vector<PatchPair>& patches) {
  if (patches.empty()) throw InputError("run_epoch: no patches");
  std::vector<std::size_t> order(patches.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng_);
  const std::size_t B = model_.config().batch_size;
  double sum = 0;
  std::size_t n = 0;
  std::vector<PatchPair> batch;
  for (std::size_t start = 0; start < order.size(); start += B) {
    batch.clear();
    for (std::size_t k = start; k < std::min(order.size(), start + B); ++k) batch.push_back(patches[order[k]]);
    sum += training_step(batch);
    ++n;
  }
  ++epoch_;
  return sum / static_cast<double>(n);
}

template <typename T>
Checkpoint Trainer<T>::checkpoint() const {
  Checkpoint c;
  c.config = model_.config();
  c.wavelengths = wavelengths_;
  c.names = model_.weights().parameter_names();
  for (std::size_t i = 0; i < params_.size(); ++i) {
    c.shapes.push_back(params_[i].shape());
    c.tensors.emplace_back(params_[i].data().begin(), params_[i].data().end());
    c.adam_steps.push_back(adam_[i].step_count);
    c.adam_m.emplace_back(adam_[i].m.begin(), adam_[i].m.end());
    c.adam_v.emplace_back(adam_[i].v.begin(), adam_[i].v.end());
  }
  c.adam = adam_.empty() ? AdamHyper{} : adam_.front().hyper;
  c.epoch = epoch_;
  c.step = step_;
  std::ostringstream os;
  os << rng_;
  c.rng_state = os.str();
  return c;
}

// ---------------------------------------------------------------------------
// Tiled inference

std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) {
  if (n == 1) return 0;
  const auto period = static_cast<std::ptrdiff_t>(2 * (n - 1));
  std::ptrdiff_t m = i % period;
  if (m < 0) m += period;
  return static_cast<std::size_t>(m < static_cast<std::ptrdiff_t>(n) ? m : period - m);
}

template <typename T>
Reconstruction reconstruct(const HsiCube& rgb, const Model<T>& model, const std::vector<double>& wavelengths) {
  if (rgb.bands != 3) throw CompatibilityError("reconstruct: input has " + std::to_string(rgb.bands) + " channels");
  const auto& cfg = model.config();
  if (wavelengths.size() != cfg.bands) throw CompatibilityError("reconstruct: wavelength list does not match model");
  const std::size_t P = cfg.patch, H = rgb.height, W = rgb.width;
  const std::size_t Hp = (H + P - 1) / P * P, Wp = (W + P - 1) / P * P;

  Reconstruction out;
  out.padded_height = Hp;
  out.padded_width = Wp;
  out.cube = HsiCube(W, H, wavelengths);
  for (std::size_t r = P; r < H; r += P) out.seam_rows.push_back(r);
  for (std::size_t c = P; c < W; c += P) out.seam_cols.push_back(c);

  NoGradGuard no_grad;
  CoverageMap coverage(Hp, Wp);
  std::vector<T> tile(3 * P * P);
  for (std::size_t tr = 0; tr < Hp; tr += P)
    for (std::size_t tc = 0; tc < Wp; tc += P) {
      coverage.mark(tr, tr + P, tc, tc + P);
      for (std::size_t ch = 0; ch < 3; ++ch)
        for (std::size_t r = 0; r < P; ++r)
          for (std::size_t c = 0; c < P; ++c)
            tile[(ch * P + r) * P + c] = static_cast<T>(rgb.at(ch, reflect_index(static_cast<std::ptrdiff_t>(tr + r), H),
                                                               reflect_index(static_cast<std::ptrdiff_t>(tc + c), W)));
      const auto y = model.forward_full(Tensor<T>({3, P, P}, tile));
      const auto yv = y.data();
      for (std::size_t b = 0; b < cfg.bands; ++b)
        for (std::size_t r = 0; r < P && tr + r < H; ++r)
          for (std::size_t c = 0; c < P && tc + c < W; ++c)
            out.cube.at(b, tr + r, tc + c) = static_cast<float>(yv[(b * P + r) * P + c]);
    }
  if (!coverage.complete()) throw LayoutError("reconstruct: tiles do not cover the padded image");
  return out;
}

Reconstruction reconstruct(const HsiCube& rgb, const Checkpoint& ckpt) {
  const Model<float> model(ckpt.config, weights_from_checkpoint<float>(ckpt));
  return reconstruct(rgb, model, ckpt.wavelengths);
}

#define HSINR_INSTANTIATE(T)                                                                         \
  template class Model<T>;                                                                           \
  template class Trainer<T>;                                                                         \
  template Tensor<T> crop_chw(const Tensor<T>&, std::size_t, std::size_t, std::size_t, std::size_t); \
  template Tensor<T> crop_hwd(const Tensor<T>&, std::size_t, std::size_t, std::size_t, std::size_t); \
  template HyperNetWeights<T> weights_from_checkpoint(const Checkpoint&);                            \
  template Reconstruction reconstruct(const HsiCube&, const Model<T>&, const std::vector<double>&);

HSINR_INSTANTIATE(float)
HSINR_INSTANTIATE(double)

}  // namespace hsinr
