#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "hsinr/adam.hpp"
#include "hsinr/cellmlp.hpp"
#include "hsinr/dataio.hpp"
#include "hsinr/encoding.hpp"
#include "hsinr/hypernet.hpp"
#include "hsinr/tensor.hpp"

namespace hsinr {

/// Every knob of a training run. Defaults follow the published recipe where it
/// names a value (Adam, lr 1e-4 decayed x0.1 every 200 epochs, 64x64 patches,
/// 1000 epochs, S = 16, N = 5); the rest are desk-scale choices.
struct TrainConfig {
  double lr0 = 1e-4;
  std::size_t epochs = 1000;
  double decay_factor = 0.1;
  std::size_t decay_every = 200;
  std::size_t patch = 64;
  std::size_t patches_per_image = 1000;
  std::size_t batch_size = 1;
  std::uint64_t seed = 0;

  std::size_t grid = 16;  // S
  int n_freqs = 5;        // N
  bool encoding = true;
  std::size_t hidden_width = 64;
  std::size_t bands = 31;  // L
  std::vector<std::size_t> channels{64, 128, 128, 256, 256};
  std::size_t estimator_blocks = 2;
  double slope = kDefaultLeakySlope;
  double head_bias_std = 1e-2;
  Precision precision = Precision::standard;

  /// Throws ConfigError on an inconsistent configuration (e.g. S not dividing the patch).
  void validate() const;
  EncodingConfig encoding_config() const { return {n_freqs, encoding}; }
  MlpLayout layout() const;
  HyperNetConfig hypernet() const;

  bool operator==(const TrainConfig&) const = default;
};

/// lr0 * decay_factor^floor(epoch / decay_every).
double lr_schedule(std::size_t epoch, const TrainConfig& cfg);

/// Hypernetwork weights plus the fixed coordinate encoding of one patch.
template <typename T>
class Model {
 public:
  Model(const TrainConfig& cfg, std::mt19937_64& rng);
  Model(const TrainConfig& cfg, HyperNetWeights<T> weights);

  /// [3 x P x P] RGB patch -> [L x P x P] spectra: build the parameter grid, run
  /// each cell's MLP over its pixels with globally-indexed encodings, stitch.
  Tensor<T> forward_full(const Tensor<T>& rgb) const;

  const TrainConfig& config() const { return cfg_; }
  const HyperNetConfig& hypernet_config() const { return hcfg_; }
  const MlpLayout& layout() const { return hcfg_.mlp; }
  const Tensor<T>& encoding() const { return enc_; }
  const HyperNetWeights<T>& weights() const { return weights_; }
  HyperNetWeights<T>& weights() { return weights_; }

 private:
  TrainConfig cfg_;
  HyperNetConfig hcfg_;
  HyperNetWeights<T> weights_;
  Tensor<T> enc_;
};

/// Copy of rows [r0, r0+h) x cols [c0, c0+w) of a [C x H x W] tensor, without history.
template <typename T>
Tensor<T> crop_chw(const Tensor<T>& x, std::size_t r0, std::size_t c0, std::size_t h, std::size_t w);
/// Same for an [H x W x D] tensor.
template <typename T>
Tensor<T> crop_hwd(const Tensor<T>& x, std::size_t r0, std::size_t c0, std::size_t h, std::size_t w);

/// An aligned RGB / HSI training crop.
struct PatchPair {
  std::size_t row = 0;
  std::size_t col = 0;
  HsiCube rgb;
  HsiCube hsi;
};

/// Uniformly random top-left corners; RGB and HSI crops share each corner.
std::vector<PatchPair> sample_patches(const HsiCube& cube, const HsiCube& rgb, std::size_t count, std::size_t patch,
                                      std::mt19937_64& rng);

/// Serialized training state (the INRC checkpoint file).
struct Checkpoint {
  TrainConfig config;
  std::vector<double> wavelengths;
  std::vector<std::string> names;
  std::vector<Shape> shapes;
  std::vector<std::vector<float>> tensors;
  AdamHyper adam;
  std::vector<std::uint64_t> adam_steps;
  std::vector<std::vector<float>> adam_m;
  std::vector<std::vector<float>> adam_v;
  std::uint64_t epoch = 0;
  std::uint64_t step = 0;
  std::string rng_state;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Rebuilds weights from a checkpoint, checking every tensor shape against the config.
template <typename T>
HyperNetWeights<T> weights_from_checkpoint(const Checkpoint& ckpt);

/// Single-writer training loop: Adam over every hypernetwork tensor, mean L1
/// over pixels, bands and the batch.
template <typename T>
class Trainer {
 public:
  explicit Trainer(const TrainConfig& cfg, std::vector<double> wavelengths = {});
  static Trainer from_checkpoint(const Checkpoint& ckpt);

  // Parameter handles alias the model's tensors; a copy would share them.
  Trainer(const Trainer&) = delete;
  Trainer& operator=(const Trainer&) = delete;
  Trainer(Trainer&&) noexcept = default;
  Trainer& operator=(Trainer&&) noexcept = default;

  /// Loss of the batch before the update; applies one Adam step at lr_schedule(epoch()).
  /// Throws NumericError (weights untouched) if the loss is not finite.
  double training_step(std::span<const PatchPair> batch);
  /// One pass over `patches` in a freshly shuffled order; returns the mean step loss.
  double run_epoch(const std::vector<PatchPair>& patches);

  /// Mean L1 loss of one aligned pair without updating anything.
  double loss_of(const PatchPair& pair) const;

  std::size_t epoch() const { return epoch_; }
  std::uint64_t steps() const { return step_; }
  double current_lr() const { return lr_schedule(epoch_, model_.config()); }
  const Model<T>& model() const { return model_; }
  Model<T>& model() { return model_; }
  Checkpoint checkpoint() const;

 private:
  Trainer(const TrainConfig& cfg, std::vector<double> wavelengths, std::mt19937_64 rng);

  std::mt19937_64 rng_;
  Model<T> model_;
  std::vector<double> wavelengths_;
  std::vector<Tensor<T>> params_;
  std::vector<AdamState<T>> adam_;
  std::size_t epoch_ = 0;
  std::uint64_t step_ = 0;
};

/// Full-image inference result.
struct Reconstruction {
  HsiCube cube;
  std::vector<std::size_t> seam_rows;  // tile boundaries inside the output
  std::vector<std::size_t> seam_cols;
  std::size_t padded_height = 0;
  std::size_t padded_width = 0;
};

/// Reflect-pads the image up to a multiple of the patch size, runs forward_full on
/// each non-overlapping tile (each tile's encoding is its own patch grid), and
/// crops back to the input size.
template <typename T>
Reconstruction reconstruct(const HsiCube& rgb, const Model<T>& model, const std::vector<double>& wavelengths);
Reconstruction reconstruct(const HsiCube& rgb, const Checkpoint& ckpt);

/// Reflection index for padding (mirror about the edge pixel, no repeat).
std::size_t reflect_index(std::ptrdiff_t i, std::size_t n);

}  // namespace hsinr
