// hsinr: synthesize scenes, train, reconstruct and evaluate from the command line.
//
// Exit codes: 0 success, 2 usage or configuration, 3 data or format, 4 numeric failure.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hsinr/dataio.hpp"
#include "hsinr/errors.hpp"
#include "hsinr/gradcheck.hpp"
#include "hsinr/metrics.hpp"
#include "hsinr/ops.hpp"
#include "hsinr/pipeline.hpp"
#include "manifest.hpp"

namespace fs = std::filesystem;
using namespace hsinr;
using hsinr::cli::RunManifest;
using json = nlohmann::ordered_json;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

fs::path output_dir(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("HSINR_OUTPUT_DIR"); env && *env) return env;
  return ".";
}

json config_json(const TrainConfig& c) {
  return {{"lr0", c.lr0},
          {"epochs", c.epochs},
          {"decay_factor", c.decay_factor},
          {"decay_every", c.decay_every},
          {"patch", c.patch},
          {"patches_per_image", c.patches_per_image},
          {"batch_size", c.batch_size},
          {"seed", c.seed},
          {"grid", c.grid},
          {"n_freqs", c.n_freqs},
          {"encoding", c.encoding},
          {"hidden_width", c.hidden_width},
          {"bands", c.bands},
          {"channels", c.channels},
          {"estimator_blocks", c.estimator_blocks},
          {"slope", c.slope},
          {"head_bias_std", c.head_bias_std},
          {"precision", to_string(c.precision)}};
}

/// Registers a flag for every TrainConfig field except the band count, which comes from the data.
std::vector<CLI::Option*> add_config_flags(CLI::App* cmd, TrainConfig& c, std::string& precision) {
  return {
      cmd->add_option("--s", c.grid, "Parameter grid size S (cells per side)")->capture_default_str(),
      cmd->add_option("--n-freqs", c.n_freqs, "Encoding frequencies N; 0 passes raw coordinates")
          ->capture_default_str(),
      cmd->add_flag("--no-encoding{false}", c.encoding, "Feed raw (x, y) instead of the periodic encoding"),
      cmd->add_option("--hidden", c.hidden_width, "Cell MLP hidden width")->capture_default_str(),
      cmd->add_option("--lr", c.lr0, "Initial learning rate")->capture_default_str(),
      cmd->add_option("--decay-factor", c.decay_factor, "Learning-rate decay factor")->capture_default_str(),
      cmd->add_option("--decay-every", c.decay_every, "Epochs between decays")->capture_default_str(),
      cmd->add_option("--patch", c.patch, "Training patch size P")->capture_default_str(),
      cmd->add_option("--patches-per-image", c.patches_per_image, "Patches sampled from each scene")
          ->capture_default_str(),
      cmd->add_option("--batch-size", c.batch_size, "Patches per Adam step")->capture_default_str(),
      cmd->add_option("--seed", c.seed, "Seed for initialization, sampling and shuffling")->capture_default_str(),
      cmd->add_option("--channels", c.channels, "Extractor channel schedule")->delimiter(',')->capture_default_str(),
      cmd->add_option("--estimator-blocks", c.estimator_blocks, "Modulated estimator blocks")
          ->capture_default_str(),
      cmd->add_option("--slope", c.slope, "Leaky ReLU negative slope")->capture_default_str(),
      cmd->add_option("--head-bias-std", c.head_bias_std, "Std of the head bias at initialization")
          ->capture_default_str(),
      cmd->add_option("--precision", precision, "standard (float) or verification (double)")
          ->check(CLI::IsMember({"standard", "verification"}))
          ->capture_default_str(),
  };
}

// synth --------------------------------------------------------------------

struct SynthArgs {
  std::size_t size = 64;
  std::size_t bands = 31;
  std::uint64_t seed = 0;
  std::size_t stripe = 0;
  std::string rgb_format = "hsrc";
  std::string out;
};

void cmd_synth(const SynthArgs& a, RunManifest& m) {
  const fs::path dir = output_dir(a.out);
  fs::create_directories(dir);
  SceneOptions opts;
  opts.stripe_period = a.stripe;
  const auto cube = synth_scene(a.size, a.size, a.bands, a.seed, opts);
  const auto rgb = project_rgb(cube, SpectralResponse::gaussian(cube.wavelengths));
  const auto cube_path = dir / "scene.hsrc";
  const auto rgb_path = dir / (a.rgb_format == "ppm" ? "rgb.ppm" : "rgb.hsrc");
  save_cube(cube, cube_path);
  if (a.rgb_format == "ppm")
    save_ppm(rgb, rgb_path);
  else
    save_cube(rgb, rgb_path);
  m.set_seed(a.seed);
  m.set_config({{"size", a.size}, {"bands", a.bands}, {"stripe_period", a.stripe}, {"rgb_format", a.rgb_format}});
  m.add_output(cube_path);
  m.add_output(rgb_path);
  m.write(dir / "synth.manifest.json");
  std::cout << cube_path.string() << '\n' << rgb_path.string() << '\n';
}

// train --------------------------------------------------------------------

struct TrainArgs {
  TrainConfig cfg;
  std::string precision = "standard";
  std::vector<std::string> data;
  std::string resume;
  std::string out;
  std::vector<CLI::Option*> config_flags;
  CLI::Option* epochs_flag = nullptr;
};

template <typename T>
void train_loop(Trainer<T>& trainer, const TrainConfig& cfg, const std::vector<PatchPair>& patches,
                const fs::path& dir, bool append) {
  const auto log_path = dir / "loss.log";
  const auto ckpt_path = dir / "checkpoint.inrc";
  std::ofstream log(log_path, append ? std::ios::app : std::ios::trunc);
  if (!log) throw InputError("cannot write " + log_path.string());
  char line[128];
  while (trainer.epoch() < cfg.epochs) {
    const double lr = trainer.current_lr();
    const double loss = trainer.run_epoch(patches);
    std::snprintf(line, sizeof line, "%zu %.6e %.9g", trainer.epoch(), lr, loss);
    log << line << '\n' << std::flush;
    std::cout << line << '\n' << std::flush;
    save_checkpoint(trainer.checkpoint(), ckpt_path);
  }
}

void cmd_train(TrainArgs& a, RunManifest& m) {
  const fs::path dir = output_dir(a.out);
  Checkpoint resume;
  TrainConfig cfg = a.cfg;
  cfg.precision = parse_precision(a.precision);
  if (!a.resume.empty()) {
    for (auto* o : a.config_flags)
      if (o->count() > 0)
        throw ConfigError("--resume takes its configuration from the checkpoint; " + o->get_name() +
                          " cannot change it");
    resume = load_checkpoint(a.resume);
    const std::size_t epochs = a.epochs_flag->count() > 0 ? cfg.epochs : resume.config.epochs;
    cfg = resume.config;
    cfg.epochs = epochs;
    m.add_input(a.resume);
  }

  std::vector<HsiCube> scenes;
  for (const auto& p : a.data) {
    scenes.push_back(load_cube(p));
    m.add_input(p);
  }
  cfg.bands = scenes.front().bands;
  for (const auto& s : scenes)
    if (s.bands != cfg.bands || s.wavelengths != scenes.front().wavelengths)
      throw CompatibilityError("training scenes disagree on their wavelength axis");
  if (!a.resume.empty() && resume.wavelengths != scenes.front().wavelengths)
    throw CompatibilityError("checkpoint wavelengths differ from the training data");
  cfg.validate();

  // Patches are drawn once from a stream separate from the trainer's, so a
  // resumed run sees the same list.
  std::mt19937_64 sampler(cfg.seed ^ 0x9e3779b97f4a7c15ull);
  std::vector<PatchPair> patches;
  for (const auto& s : scenes) {
    const auto rgb = project_rgb(s, SpectralResponse::gaussian(s.wavelengths));
    auto more = sample_patches(s, rgb, cfg.patches_per_image, cfg.patch, sampler);
    patches.insert(patches.end(), std::make_move_iterator(more.begin()), std::make_move_iterator(more.end()));
  }

  fs::create_directories(dir);
  const bool append = !a.resume.empty();
  if (append) resume.config.epochs = cfg.epochs;
  if (cfg.precision == Precision::verification) {
    auto tr = append ? Trainer<double>::from_checkpoint(resume) : Trainer<double>(cfg, scenes.front().wavelengths);
    train_loop(tr, cfg, patches, dir, append);
  } else {
    auto tr = append ? Trainer<float>::from_checkpoint(resume) : Trainer<float>(cfg, scenes.front().wavelengths);
    train_loop(tr, cfg, patches, dir, append);
  }

  m.set_seed(cfg.seed);
  m.set_config(config_json(cfg));
  m.add_output(dir / "checkpoint.inrc");
  m.add_output(dir / "loss.log");
  m.write(dir / "train.manifest.json");
}

// reconstruct --------------------------------------------------------------

struct ReconstructArgs {
  std::string checkpoint;
  std::string rgb;
  std::string out;
};

void cmd_reconstruct(const ReconstructArgs& a, RunManifest& m) {
  const auto ckpt = load_checkpoint(a.checkpoint);
  const auto rgb = load_rgb(a.rgb);
  m.add_input(a.checkpoint);
  m.add_input(a.rgb);
  const auto rec = reconstruct(rgb, ckpt);
  const fs::path dir = output_dir(a.out);
  fs::create_directories(dir);
  const auto path = dir / "reconstruction.hsrc";
  save_cube(rec.cube, path);
  m.set_seed(ckpt.config.seed);
  m.set_config(config_json(ckpt.config));
  m.add_output(path);
  m.set_result({{"padded_height", rec.padded_height},
                {"padded_width", rec.padded_width},
                {"seam_rows", rec.seam_rows},
                {"seam_cols", rec.seam_cols}});
  m.write(dir / "reconstruct.manifest.json");
  std::cout << path.string() << '\n';
}

// evaluate -----------------------------------------------------------------

struct EvaluateArgs {
  std::string ref;
  std::string est;
  bool reference_peak = false;
  std::string out;
};

void cmd_evaluate(const EvaluateArgs& a, RunManifest& m) {
  const auto ref = load_cube(a.ref), est = load_cube(a.est);
  m.add_input(a.ref);
  m.add_input(a.est);
  if (ref.wavelengths != est.wavelengths) throw CompatibilityError("cubes have different wavelength axes");
  PsnrOptions po;
  po.peak_from_reference = a.reference_peak;
  const auto report = evaluate(ref, est, po);
  const fs::path dir = output_dir(a.out);
  fs::create_directories(dir);
  const auto kv = dir / "metrics.txt", js = dir / "metrics.json";
  std::ofstream(kv) << to_key_value(report);
  std::ofstream(js) << to_json(report) << '\n';
  m.set_config({{"peak_from_reference", a.reference_peak}});
  m.add_output(kv);
  m.add_output(js);
  m.write(dir / "evaluate.manifest.json");
  std::cout << to_key_value(report);
}

// diffmap ------------------------------------------------------------------

struct DiffmapArgs {
  std::string ref;
  std::string est;
  std::vector<std::size_t> bands{3, 7, 11, 15, 19, 23, 27};
  std::string out;
};

void cmd_diffmap(const DiffmapArgs& a, RunManifest& m) {
  const auto ref = load_cube(a.ref), est = load_cube(a.est);
  m.add_input(a.ref);
  m.add_input(a.est);
  const auto maps = diff_map(ref, est, a.bands);
  const fs::path dir = output_dir(a.out);
  fs::create_directories(dir);
  json summary = json::array();
  for (const auto& d : maps) {
    char name[64];
    std::snprintf(name, sizeof name, "diff_band%02zu_%.0fnm.pgm", d.band, d.wavelength);
    const auto path = dir / name;
    save_pgm(d, path);
    m.add_output(path);
    summary.push_back({{"band", d.band}, {"wavelength_nm", d.wavelength}, {"max_abs_diff", d.max}});
    std::cout << path.string() << '\n';
  }
  m.set_config({{"bands", a.bands}});
  m.set_result(summary);
  m.write(dir / "diffmap.manifest.json");
}

// gradcheck ----------------------------------------------------------------

struct GradcheckArgs {
  TrainConfig cfg;
  std::size_t probes = 24;
  double h = 1e-5;
  double tolerance = 1e-6;
  std::string out;
};

GradcheckArgs default_gradcheck() {
  GradcheckArgs g;
  g.cfg.patch = 8;
  g.cfg.grid = 2;
  g.cfg.channels = {8, 16};
  g.cfg.hidden_width = 16;
  g.cfg.precision = Precision::verification;
  return g;
}

/// Returns true when every probe is within tolerance.
bool cmd_gradcheck(GradcheckArgs& a, RunManifest& m) {
  TrainConfig cfg = a.cfg;
  cfg.precision = Precision::verification;
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  Model<double> model(cfg, rng);
  // The head starts at zero, which would make every upstream gradient trivially zero.
  std::normal_distribution<double> n(0.0, 0.05);
  for (auto& v : model.weights().head.kernel.data_mut()) v = n(rng);

  const auto scene = synth_scene(cfg.patch, cfg.patch, cfg.bands, cfg.seed);
  const auto rgb = project_rgb(scene, SpectralResponse::gaussian(scene.wavelengths)).to_tensor<double>();
  const auto target = scene.to_tensor<double>();

  const auto params = model.weights().parameters();
  const auto names = model.weights().parameter_names();
  double worst = 0;
  std::size_t total = 0;
  json per_tensor = json::object();
  for (std::size_t t = 0; t < params.size(); ++t) {
    GradCheckOptions opt;
    opt.h = a.h;
    opt.max_probes = a.probes;
    opt.seed = cfg.seed + t;
    const auto r = grad_check([&] { return l1_loss(model.forward_full(rgb), target); }, {params[t]}, opt);
    worst = std::max(worst, r.max_rel_error);
    total += r.probes;
    per_tensor[names[t]] = r.max_rel_error;
  }
  const bool pass = worst <= a.tolerance;
  std::printf("%s max_rel_error=%.3e probes=%zu tolerance=%.1e\n", pass ? "PASS" : "FAIL", worst, total,
              a.tolerance);

  if (!a.out.empty() || std::getenv("HSINR_OUTPUT_DIR")) {
    const fs::path dir = output_dir(a.out);
    fs::create_directories(dir);
    m.set_seed(cfg.seed);
    auto c = config_json(cfg);
    c["probes_per_tensor"] = a.probes;
    c["fd_step"] = a.h;
    c["tolerance"] = a.tolerance;
    m.set_config(c);
    m.set_result({{"pass", pass}, {"max_rel_error", worst}, {"probes", total}, {"per_tensor", per_tensor}});
    m.write(dir / "gradcheck.manifest.json");
  }
  return pass;
}

int exit_code_for(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::configuration:
      return kExitUsage;
    case ErrorKind::numeric:
      return kExitNumeric;
    default:
      return kExitData;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hypernetwork implicit representation for RGB to hyperspectral reconstruction"};
  app.require_subcommand(1);
  const std::vector<std::string> args(argv, argv + argc);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Write a synthetic hyperspectral scene and its RGB projection");
  s->add_option("--size", synth.size, "Width and height in pixels")->capture_default_str()->check(CLI::PositiveNumber);
  s->add_option("--bands", synth.bands, "Spectral bands over 400-700 nm")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  s->add_option("--seed", synth.seed, "Scene seed")->capture_default_str();
  s->add_option("--stripe-period", synth.stripe, "Add metameric stripes with this period (0 = none)")
      ->capture_default_str();
  s->add_option("--rgb-format", synth.rgb_format, "hsrc (lossless) or ppm (8-bit)")
      ->check(CLI::IsMember({"hsrc", "ppm"}))
      ->capture_default_str();
  s->add_option("--out", synth.out, "Output directory");

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train on HSRC scenes; writes checkpoint.inrc and loss.log every epoch");
  train.config_flags = add_config_flags(t, train.cfg, train.precision);
  train.epochs_flag = t->add_option("--epochs", train.cfg.epochs, "Total epochs")->capture_default_str();
  t->add_option("--data", train.data, "Training cube(s) (HSRC)")->required()->check(CLI::ExistingFile);
  t->add_option("--resume", train.resume, "Continue from a checkpoint")->check(CLI::ExistingFile);
  t->add_option("--out", train.out, "Output directory");

  ReconstructArgs rec;
  auto* r = app.add_subcommand("reconstruct", "Reconstruct a hyperspectral cube from an RGB image");
  r->add_option("--checkpoint", rec.checkpoint, "Trained checkpoint")->required()->check(CLI::ExistingFile);
  r->add_option("--rgb", rec.rgb, "RGB image (PPM or 3-band HSRC)")->required()->check(CLI::ExistingFile);
  r->add_option("--out", rec.out, "Output directory");

  EvaluateArgs ev;
  auto* e = app.add_subcommand("evaluate", "PSNR, SSIM and SAM of an estimate against a reference");
  e->add_option("--ref", ev.ref, "Reference cube")->required()->check(CLI::ExistingFile);
  e->add_option("--est", ev.est, "Estimated cube")->required()->check(CLI::ExistingFile);
  e->add_flag("--reference-peak", ev.reference_peak, "Use the reference maximum as the PSNR peak instead of 1");
  e->add_option("--out", ev.out, "Output directory");

  DiffmapArgs dm;
  auto* d = app.add_subcommand("diffmap", "Absolute-difference images for selected bands");
  d->add_option("--ref", dm.ref, "Reference cube")->required()->check(CLI::ExistingFile);
  d->add_option("--est", dm.est, "Estimated cube")->required()->check(CLI::ExistingFile);
  d->add_option("--bands", dm.bands, "Band indices")->delimiter(',')->capture_default_str();
  d->add_option("--out", dm.out, "Output directory");

  GradcheckArgs gc = default_gradcheck();
  std::string gc_precision = "verification";
  auto* g = app.add_subcommand("gradcheck", "Finite-difference check of the full model gradient");
  add_config_flags(g, gc.cfg, gc_precision);
  g->add_option("--bands", gc.cfg.bands, "Spectral bands")->capture_default_str();
  g->add_option("--probes", gc.probes, "Probed coordinates per tensor")->capture_default_str();
  g->add_option("--fd-step", gc.h, "Central-difference step")->capture_default_str();
  g->add_option("--tolerance", gc.tolerance, "Maximum relative error")->capture_default_str();
  g->add_option("--out", gc.out, "Directory for the manifest (written only when set)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int rc = app.exit(err);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    RunManifest manifest(app.get_subcommands().front()->get_name(), args);
    if (s->parsed()) cmd_synth(synth, manifest);
    if (t->parsed()) cmd_train(train, manifest);
    if (r->parsed()) cmd_reconstruct(rec, manifest);
    if (e->parsed()) cmd_evaluate(ev, manifest);
    if (d->parsed()) cmd_diffmap(dm, manifest);
    if (g->parsed() && !cmd_gradcheck(gc, manifest)) return kExitNumeric;
    return 0;
  } catch (const Error& err) {
    std::cerr << "error: " << err.what() << '\n';
    return exit_code_for(err);
  } catch (const fs::filesystem_error& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kExitData;
  }
}
