// tdg: synthetic data, training, rendering and evaluation for thermal
// Gaussian splatting from the command line.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/core.h>

#include "tdg/bundle.hpp"
#include "tdg/checkpoint.hpp"
#include "tdg/error.hpp"
#include "tdg/image_io.hpp"
#include "tdg/metrics.hpp"
#include "tdg/optim.hpp"
#include "tdg/prior.hpp"
#include "tdg/rasterizer.hpp"
#include "tdg/synth.hpp"

namespace fs = std::filesystem;
using namespace tdg;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

/// Flags shared by every command that trains.
struct TrainFlags {
  std::string bundle;
  int iters = 3000;
  std::uint64_t seed = 0;
  double lambda_ssim = LossWeights{}.lambda_ssim;
  double lambda_smooth = LossWeights{}.lambda_smooth;
  double lambda_depth = LossWeights{}.lambda_depth;
  double t_end_frac = 0.5;
  std::string prior_space = "depth";
  std::string init = "points";
  std::size_t random_count = 0;
  std::size_t max_gaussians = TrainConfig{}.max_gaussians;

  void attach(CLI::App& app, bool with_init) {
    app.add_option("--bundle", bundle, "Bundle directory (COLMAP model, images/, depth/)")->required();
    app.add_option("--iters", iters, "Training iterations")->capture_default_str()->check(CLI::PositiveNumber);
    app.add_option("--seed", seed, "Seed for view order, random init and densification")->capture_default_str();
    app.add_option("--lambda-ssim", lambda_ssim, "SSIM weight in the thermal term")
        ->capture_default_str()
        ->check(CLI::Range(0.0, 1.0));
    app.add_option("--lambda-smooth", lambda_smooth, "Smoothness weight")->capture_default_str()->check(CLI::NonNegativeNumber);
    app.add_option("--lambda-depth", lambda_depth, "Depth supervision weight (0 disables priors)")
        ->capture_default_str()
        ->check(CLI::NonNegativeNumber);
    app.add_option("--t-end-frac", t_end_frac, "Fraction of iterations after which depth supervision is gone")
        ->capture_default_str()
        ->check(CLI::Range(0.0, 1.0));
    app.add_option("--prior-space", prior_space, "How depth prior files are interpreted")
        ->capture_default_str()
        ->check(CLI::IsMember({"depth", "inverse"}));
    if (with_init) {
      app.add_option("--init", init, "Initialization")->capture_default_str()->check(CLI::IsMember({"points", "random"}));
    }
    app.add_option("--random-count", random_count, "Gaussians for random init (0: as many as the sparse points)")
        ->capture_default_str();
    app.add_option("--max-gaussians", max_gaussians, "Densification cap")->capture_default_str()->check(CLI::PositiveNumber);
  }

  TrainingBundle load() const {
    BundleLoadOptions options;
    options.prior_space = prior_space == "inverse" ? PriorSpace::Inverse : PriorSpace::Depth;
    return load_bundle(bundle, options);
  }

  TrainConfig config() const {
    if (!(t_end_frac > 0.0)) throw Error(ErrorCode::InvalidConfig, "--t-end-frac must be positive");
    TrainConfig c = TrainConfig::for_iterations(iters, t_end_frac);
    c.weights.lambda_ssim = lambda_ssim;
    c.weights.lambda_smooth = lambda_smooth;
    c.weights.lambda_depth = lambda_depth;
    c.seed = seed;
    c.init = init == "random" ? InitMode::Random : InitMode::Points;
    c.random_init_count = random_count;
    c.max_gaussians = max_gaussians;
    c.validate();
    return c;
  }
};

std::string loss_csv(const std::vector<IterationLog>& log) {
  std::string out = "iteration,total,thermal_term,depth_term,decay_weight,gaussian_count\n";
  for (const IterationLog& row : log) {
    out += fmt::format("{},{},{},{},{},{}\n", row.iteration, row.loss.total, row.loss.thermal_term,
                       row.loss.depth_term, row.loss.decay_weight, row.gaussian_count);
  }
  return out;
}

fs::path with_suffix(const fs::path& path, const std::string& suffix) {
  fs::path p = path;
  p.replace_extension();
  return p.string() + suffix;
}

void ensure_parent(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

int run_synth(const SynthSpec& spec, const std::string& out) {
  const SynthScene scene = generate(spec);
  // Build next to the target and swap in, so a failure never leaves half a bundle.
  const fs::path target = fs::absolute(out);
  const fs::path staging = target.string() + ".tmp";
  fs::remove_all(staging);
  write_bundle(staging, scene.bundle);
  save_scene(staging / "ground_truth.tdgs", scene.truth);
  fs::remove_all(target);
  fs::rename(staging, target);
  fmt::print("wrote {} views ({} train, {} test) to {}\n", scene.bundle.views.size(), scene.bundle.split.train.size(),
             scene.bundle.split.test.size(), out);
  return 0;
}

int run_train(const TrainFlags& flags, const std::string& out, const std::string& csv_path) {
  const TrainingBundle bundle = flags.load();
  const TrainConfig config = flags.config();
  const TrainResult result = train(bundle, config);
  const fs::path checkpoint = out;
  const fs::path csv = csv_path.empty() ? with_suffix(checkpoint, ".loss.csv") : fs::path(csv_path);
  ensure_parent(checkpoint);
  ensure_parent(csv);
  write_file_atomic(csv, loss_csv(result.log));
  save_scene(checkpoint, result.scene);
  fmt::print("trained {} iterations: {} Gaussians, final loss {:.6f}\n", result.log.size(), result.scene.count(),
             result.log.empty() ? 0.0 : result.log.back().loss.total);
  fmt::print("training time {:.2f} s\n", result.seconds);
  fmt::print("wrote {} and {}\n", checkpoint.string(), csv.string());
  return 0;
}

struct RenderFlags {
  std::string checkpoint;
  std::string bundle;
  std::vector<std::size_t> views;
  int orbit = 0;
  double radius = 4.0;
  double height = 1.0;
  double fov = 60.0;
  int width = 64;
  int image_height = 64;
};

int run_render(const RenderFlags& f, const std::string& out) {
  const GaussianScene scene = load_scene(f.checkpoint);
  std::vector<std::pair<std::string, Camera>> cameras;
  std::optional<TrainingBundle> bundle;
  if (!f.bundle.empty()) bundle = load_bundle(f.bundle);
  for (std::size_t v : f.views) {
    if (!bundle) throw Error(ErrorCode::InvalidInput, "--view needs --bundle");
    if (v >= bundle->views.size()) {
      throw Error(ErrorCode::InvalidInput,
                  fmt::format("view index {} out of range (bundle has {} views)", v, bundle->views.size()));
    }
    cameras.emplace_back(bundle->views[v].name, bundle->views[v].camera);
  }
  if (f.orbit > 0) {
    int w = f.width, h = f.image_height;
    double fx = 0.5 * w / std::tan(0.5 * f.fov * std::numbers::pi / 180.0), fy = fx;
    if (bundle && !bundle->views.empty()) {
      const Camera& ref = bundle->views.front().camera;
      w = ref.width;
      h = ref.height;
      fx = ref.fx;
      fy = ref.fy;
    }
    for (int k = 0; k < f.orbit; ++k) {
      const double a = 2.0 * std::numbers::pi * k / f.orbit;
      const Vec3 eye(f.radius * std::cos(a), f.radius * std::sin(a), f.height);
      cameras.emplace_back(fmt::format("orbit_{:03d}", k), Camera::look_at(eye, Vec3::Zero(), Vec3::UnitZ(), fx, fy, w, h));
    }
  }
  if (cameras.empty()) throw Error(ErrorCode::InvalidInput, "nothing to render: pass --view or --orbit");

  const fs::path target = fs::absolute(out);
  const fs::path staging = target.string() + ".tmp";
  fs::remove_all(staging);
  for (const auto& [name, camera] : cameras) write_render(render(scene, camera), staging, name);
  fs::create_directories(target);
  for (const auto& entry : fs::directory_iterator(staging)) fs::rename(entry.path(), target / entry.path().filename());
  fs::remove_all(staging);
  fmt::print("rendered {} view(s) into {}\n", cameras.size(), out);
  return 0;
}

int run_eval(const std::string& checkpoint, const std::string& bundle_dir, const std::string& split,
             const std::string& out) {
  const GaussianScene scene = load_scene(checkpoint);
  const TrainingBundle bundle = load_bundle(bundle_dir);
  std::vector<std::size_t> views = split == "train" ? bundle.split.train : bundle.split.test;
  if (split == "all") {
    views.resize(bundle.views.size());
    for (std::size_t i = 0; i < views.size(); ++i) views[i] = i;
  }
  const EvalReport report = evaluate(scene, bundle, views);
  const std::string csv = format_metrics_csv(report);
  if (out.empty()) {
    fmt::print("{}", csv);
  } else {
    ensure_parent(out);
    write_file_atomic(out, csv);
    fmt::print("mean PSNR {:.4f} dB, mean SSIM {:.4f} over {} view(s); wrote {}\n", report.mean_psnr,
               report.mean_ssim, report.views.size(), out);
  }
  return 0;
}

int run_ablate(const TrainFlags& flags, const std::string& out) {
  const TrainingBundle bundle = flags.load();
  struct Row {
    std::string label;
    std::string stem;
    InitMode mode;
    EvalReport report;
    TrainResult result;
  };
  std::vector<Row> rows{{"Random initialization", "random", InitMode::Random, {}, {}},
                        {"Sparse-point initialization", "points", InitMode::Points, {}, {}}};
  for (Row& row : rows) {
    TrainConfig config = flags.config();
    config.init = row.mode;
    row.result = train(bundle, config);
    row.report = evaluate(row.result.scene, bundle);
    fmt::print("{}: PSNR {:.2f} dB, SSIM {:.4f}, {} Gaussians, {:.1f} s\n", row.label, row.report.mean_psnr,
               row.report.mean_ssim, row.result.scene.count(), row.result.seconds);
  }

  std::string table = "| Initialization | PSNR | SSIM | LPIPS |\n|---|---|---|---|\n";
  for (const Row& row : rows) {
    table += fmt::format("| {} | {:.2f} | {:.4f} | n/a |\n", row.label, row.report.mean_psnr, row.report.mean_ssim);
  }
  table += fmt::format("\nHeld-out views: {}. Iterations: {}. LPIPS is not computed.\n", bundle.split.test.size(),
                       flags.iters);
  fmt::print("\n{}", table);

  if (!out.empty()) {
    const fs::path target = fs::absolute(out);
    const fs::path staging = target.string() + ".tmp";
    fs::remove_all(staging);
    fs::create_directories(staging);
    write_file_atomic(staging / "table.md", table);
    for (const Row& row : rows) {
      save_scene(staging / (row.stem + ".tdgs"), row.result.scene);
      write_file_atomic(staging / (row.stem + ".loss.csv"), loss_csv(row.result.log));
      write_file_atomic(staging / (row.stem + ".metrics.csv"), format_metrics_csv(row.report));
    }
    fs::remove_all(target);
    fs::rename(staging, target);
    fmt::print("wrote {}\n", out);
  }
  return 0;
}

void add_config_option(CLI::App& sub, std::string& target) {
  sub.add_option("--config", target, "key = value file using the long flag names; flags win");
}

/// Arguments with the entries of a --config file inserted straight after the
/// subcommand, ahead of the user's flags. Returned in the reversed order
/// CLI::App::parse expects for vectors.
std::vector<std::string> with_config(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (!path.empty() && !args.empty()) {
    std::vector<std::string> injected;
    for (const CLI::ConfigItem& item : CLI::ConfigTOML().from_file(path)) {
      if (!item.parents.empty() || item.name == "config") continue;
      injected.push_back("--" + item.name);
      injected.insert(injected.end(), item.inputs.begin(), item.inputs.end());
    }
    args.insert(args.begin() + 1, injected.begin(), injected.end());
  }
  std::reverse(args.begin(), args.end());
  return args;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Thermal Gaussian splatting with depth-prior supervision"};
  app.require_subcommand(1);
  app.fallthrough(false);
  // Repeated options keep the last value, which lets command-line flags
  // override the spliced-in config entries.
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  std::string config_file;

  SynthSpec spec;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic bundle with exact depth priors");
  add_config_option(*synth, config_file);
  synth->add_option("--out", synth_out, "Output bundle directory")->required();
  synth->add_option("--gaussians", spec.n_gaussians, "Ground-truth Gaussians")->capture_default_str();
  synth->add_option("--views", spec.n_views, "Cameras on the orbit")->capture_default_str();
  synth->add_option("--width", spec.width, "Image width")->capture_default_str();
  synth->add_option("--height", spec.height, "Image height")->capture_default_str();
  synth->add_option("--orbit-radius", spec.orbit_radius, "Orbit radius")->capture_default_str();
  synth->add_option("--seed", spec.seed, "Generator seed")->capture_default_str();
  synth->add_option("--prior-noise", spec.prior_noise, "Std. dev. of Gaussian noise on the depth priors")
      ->capture_default_str();
  synth->add_option("--train-ratio", spec.train_ratio, "Fraction of views used for training")->capture_default_str();

  TrainFlags train_flags;
  std::string train_out, train_csv;
  auto* train_cmd = app.add_subcommand("train", "Train from a bundle; writes a checkpoint and a loss CSV");
  add_config_option(*train_cmd, config_file);
  train_flags.attach(*train_cmd, true);
  train_cmd->add_option("--out", train_out, "Checkpoint path")->required();
  train_cmd->add_option("--loss-csv", train_csv, "Loss log path (default: <out stem>.loss.csv)");

  RenderFlags render_flags;
  std::string render_out;
  auto* render_cmd = app.add_subcommand("render", "Render a checkpoint from bundle views or an orbit");
  add_config_option(*render_cmd, config_file);
  render_cmd->add_option("--checkpoint", render_flags.checkpoint, "Checkpoint to render")->required();
  render_cmd->add_option("--bundle", render_flags.bundle, "Bundle supplying cameras");
  render_cmd->add_option("--view", render_flags.views, "Bundle view index (repeatable)");
  render_cmd->add_option("--orbit", render_flags.orbit, "Number of orbit cameras around the origin");
  render_cmd->add_option("--radius", render_flags.radius, "Orbit radius")->capture_default_str();
  render_cmd->add_option("--height", render_flags.height, "Orbit height")->capture_default_str();
  render_cmd->add_option("--fov", render_flags.fov, "Orbit field of view in degrees (without --bundle)")
      ->capture_default_str();
  render_cmd->add_option("--width", render_flags.width, "Orbit image width (without --bundle)")->capture_default_str();
  render_cmd->add_option("--image-height", render_flags.image_height, "Orbit image height (without --bundle)")
      ->capture_default_str();
  render_cmd->add_option("--out", render_out, "Output directory")->required();

  std::string eval_checkpoint, eval_bundle, eval_split = "test", eval_out;
  auto* eval_cmd = app.add_subcommand("eval", "PSNR/SSIM of a checkpoint on a bundle split");
  add_config_option(*eval_cmd, config_file);
  eval_cmd->add_option("--checkpoint", eval_checkpoint, "Checkpoint to evaluate")->required();
  eval_cmd->add_option("--bundle", eval_bundle, "Bundle directory")->required();
  eval_cmd->add_option("--split", eval_split, "Views to score")
      ->capture_default_str()
      ->check(CLI::IsMember({"test", "train", "all"}));
  eval_cmd->add_option("--out", eval_out, "Metrics CSV path (default: stdout)");

  TrainFlags ablate_flags;
  std::string ablate_out;
  auto* ablate_cmd = app.add_subcommand("ablate-init", "Train with random and sparse-point init and compare");
  add_config_option(*ablate_cmd, config_file);
  ablate_flags.attach(*ablate_cmd, false);
  ablate_cmd->add_option("--out", ablate_out, "Directory for the table, checkpoints and logs");

  try {
    app.parse(with_config(argc, argv));
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*synth) return run_synth(spec, synth_out);
    if (*train_cmd) return run_train(train_flags, train_out, train_csv);
    if (*render_cmd) return run_render(render_flags, render_out);
    if (*eval_cmd) return run_eval(eval_checkpoint, eval_bundle, eval_split, eval_out);
    if (*ablate_cmd) return run_ablate(ablate_flags, ablate_out);
  } catch (const Error& e) {
    fmt::print(stderr, "error ({}): {}\n", to_string(e.code()), e.what());
    return kExitData;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitData;
  }
  return kExitUsage;
}
