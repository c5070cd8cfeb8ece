#include "tdg/optim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <string>

#include <Eigen/Dense>

#include "tdg/rasterizer.hpp"
#include "tdg/rng.hpp"

namespace tdg {

TrainConfig TrainConfig::for_iterations(int iterations, double t_end_frac) {
  TrainConfig c;
  c.iterations = iterations;
  c.weights.t_start = 1;
  c.weights.t_end = std::max(2, static_cast<int>(std::lround(iterations * t_end_frac)));
  c.densify_until = iterations / 2;
  return c;
}

void TrainConfig::validate() const {
  weights.validate();
  if (iterations <= 0) throw Error(ErrorCode::InvalidConfig, "iterations must be positive");
  if (weights.t_end > iterations) {
    throw Error(ErrorCode::InvalidConfig, "t_end (" + std::to_string(weights.t_end) +
                                              ") exceeds the iteration count (" + std::to_string(iterations) + ")");
  }
  for (double lr : {lr_position, lr_position_final, lr_scale, lr_rotation, lr_opacity, lr_thermal}) {
    if (!(lr > 0.0)) throw Error(ErrorCode::InvalidConfig, "learning rates must be positive");
  }
  if (densify_interval <= 0) throw Error(ErrorCode::InvalidConfig, "densify_interval must be positive");
  if (max_gaussians == 0) throw Error(ErrorCode::InvalidConfig, "max_gaussians must be positive");
}

OptimizerState OptimizerState::for_scene(const GaussianScene& scene) {
  return {GaussianScene::zeros(scene.count()), GaussianScene::zeros(scene.count()), 0};
}

void adam_step(GaussianScene& scene, const GaussianScene& gradients, OptimizerState& state,
               const GroupLearningRates& learning_rates) {
  scene.validate_shape();
  const std::size_t n = scene.count();
  if (gradients.count() != n || state.first_moment.count() != n || state.second_moment.count() != n) {
    throw Error(ErrorCode::InvalidState, "adam_step: scene, gradient and moment shapes differ");
  }
  gradients.validate_shape();
  state.first_moment.validate_shape();
  state.second_moment.validate_shape();

  ++state.step;
  const double bias1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(state.step));
  const double bias2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(state.step));
  auto params = scene.groups();
  const auto grads = gradients.groups();
  auto m = state.first_moment.groups();
  auto v = state.second_moment.groups();
  for (std::size_t k = 0; k < GaussianScene::kGroupCount; ++k) {
    const double lr = learning_rates[k];
    for (std::size_t i = 0; i < params[k]->size(); ++i) {
      const double g = (*grads[k])[i];
      double& mi = (*m[k])[i];
      double& vi = (*v[k])[i];
      mi = kAdamBeta1 * mi + (1.0 - kAdamBeta1) * g;
      vi = kAdamBeta2 * vi + (1.0 - kAdamBeta2) * g * g;
      const double m_hat = mi / bias1;
      const double v_hat = vi / bias2;
      (*params[k])[i] -= lr * m_hat / (std::sqrt(v_hat) + kAdamEpsilon);
    }
  }
}

void DensityStats::add(const std::vector<double>& norms, const std::vector<bool>& visible) {
  for (std::size_t i = 0; i < grad_sum.size(); ++i) {
    if (!visible[i]) continue;
    grad_sum[i] += norms[i];
    ++observations[i];
  }
}

std::vector<double> DensityStats::mean() const {
  std::vector<double> out(grad_sum.size(), 0.0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (observations[i] > 0) out[i] = grad_sum[i] / observations[i];
  }
  return out;
}

namespace {

constexpr int kSplitCopies = 2;
constexpr double kSplitShrink = 0.8 * kSplitCopies;

void append_zero_rows(GaussianScene& s, std::size_t n) {
  auto g = s.groups();
  for (std::size_t k = 0; k < GaussianScene::kGroupCount; ++k) g[k]->resize(g[k]->size() + kGroupStrides[k] * n, 0.0);
}

}  // namespace

DensifyOutcome densify_and_prune(GaussianScene& scene, OptimizerState& state, const std::vector<double>& mean_grad_norms,
                                 const TrainConfig& config, int iteration, double scene_extent, std::uint64_t seed) {
  DensifyOutcome outcome;
  if (iteration % config.densify_interval != 0 || iteration > config.densify_until) return outcome;
  const std::size_t n = scene.count();
  if (mean_grad_norms.size() != n) throw Error(ErrorCode::InvalidState, "densify_and_prune: gradient stats shape mismatch");

  // Candidates ordered by gradient so the cap keeps the strongest.
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < n; ++i) {
    if (mean_grad_norms[i] >= config.densify_grad_threshold) candidates.push_back(i);
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [&](std::size_t a, std::size_t b) { return mean_grad_norms[a] > mean_grad_norms[b]; });

  const double split_cutoff = config.percent_dense * scene_extent;
  std::vector<std::size_t> clones, splits;
  std::size_t budget = config.max_gaussians > n ? config.max_gaussians - n : 0;
  for (std::size_t i : candidates) {
    // Both operations add one Gaussian net.
    if (budget == 0) break;
    --budget;
    (scene.scale(i).maxCoeff() <= split_cutoff ? clones : splits).push_back(i);
  }
  std::sort(clones.begin(), clones.end());
  std::sort(splits.begin(), splits.end());

  Rng rng(seed ^ (0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(iteration)));
  const GaussianScene original = scene;
  for (std::size_t i : clones) scene.append_from(original, i);
  for (std::size_t i : splits) {
    const Mat3 rot = quat_to_rotation(original.rotation(i));
    const Vec3 scale = original.scale(i);
    for (int c = 0; c < kSplitCopies; ++c) {
      const Vec3 offset(rng.normal() * scale.x(), rng.normal() * scale.y(), rng.normal() * scale.z());
      scene.append_from(original, i);
      const std::size_t j = scene.count() - 1;
      scene.set_position(j, original.position(i) + rot * offset);
      scene.set_log_scale(j, (scale / kSplitShrink).array().log().matrix());
    }
  }
  outcome.cloned = clones.size();
  outcome.split = splits.size();
  const std::size_t added = scene.count() - n;
  append_zero_rows(state.first_moment, added);
  append_zero_rows(state.second_moment, added);

  std::vector<bool> keep(scene.count(), true);
  for (std::size_t i : splits) keep[i] = false;
  for (std::size_t i = 0; i < scene.count(); ++i) {
    if (scene.opacity(i) < config.prune_opacity_threshold) keep[i] = false;
  }
  if (std::none_of(keep.begin(), keep.end(), [](bool k) { return k; })) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < scene.count(); ++i) {
      if (scene.opacity_logits[i] > scene.opacity_logits[best]) best = i;
    }
    keep[best] = true;
  }
  outcome.pruned = static_cast<std::size_t>(std::count(keep.begin(), keep.end(), false)) - splits.size();
  scene.keep(keep);
  state.first_moment.keep(keep);
  state.second_moment.keep(keep);
  scene.round_to_storage_precision();
  return outcome;
}

double camera_extent(const std::vector<Camera>& cameras) {
  if (cameras.empty()) return 1.0;
  Vec3 mean = Vec3::Zero();
  for (const auto& c : cameras) mean += c.center();
  mean /= static_cast<double>(cameras.size());
  double radius = 0.0;
  for (const auto& c : cameras) radius = std::max(radius, (c.center() - mean).norm());
  return radius > 0.0 ? 1.1 * radius : 1.0;
}

GaussianScene initial_scene(const TrainingBundle& bundle, const TrainConfig& config) {
  if (config.init == InitMode::Points) return init_from_points(bundle.initial_points);
  const std::vector<Camera> cams = bundle.cameras();
  Vec3 mean = Vec3::Zero();
  for (const auto& c : cams) mean += c.center();
  mean /= static_cast<double>(std::max<std::size_t>(1, cams.size()));
  double half = 0.0;
  for (const auto& c : cams) half = std::max(half, (c.center() - mean).norm());
  half = half > 0.0 ? 0.5 * half : 1.0;
  std::size_t n = config.random_init_count;
  if (n == 0) n = std::max<std::size_t>(1, bundle.initial_points.size());
  return init_random(n, Bounds{mean.array() - half, mean.array() + half}, config.seed);
}

TrainResult train(const TrainingBundle& bundle, const TrainConfig& config, const TrainObserver& observer) {
  return train_from(initial_scene(bundle, config), bundle, config, observer);
}

TrainResult train_from(GaussianScene scene, const TrainingBundle& bundle, const TrainConfig& config,
                       const TrainObserver& observer) {
  config.validate();
  bundle.validate();
  scene.validate_shape();
  if (scene.empty()) throw Error(ErrorCode::EmptyInput, "train: initial scene is empty");
  const std::vector<std::size_t>& train_views = bundle.split.train;
  if (train_views.size() < 2) throw Error(ErrorCode::InvalidInput, "train: need at least 2 training views");

  const bool use_depth = config.weights.lambda_depth > 0.0;
  if (use_depth) {
    std::string missing;
    for (std::size_t v : train_views) {
      if (!bundle.views[v].depth_prior) missing += (missing.empty() ? "" : ", ") + bundle.views[v].name;
    }
    if (!missing.empty()) {
      throw Error(ErrorCode::InvalidConfig,
                  "depth supervision enabled (lambda_depth > 0) but these training views have no depth prior: " +
                      missing);
    }
  }

  const auto started = std::chrono::steady_clock::now();
  double spatial = config.spatial_lr_scale;
  if (!(spatial > 0.0)) spatial = camera_extent(bundle.cameras());
  const double extent = camera_extent(bundle.cameras());

  scene.round_to_storage_precision();
  OptimizerState state = OptimizerState::for_scene(scene);
  DensityStats stats(scene.count());
  Rng view_rng(config.seed);
  std::vector<std::size_t> order;
  std::size_t cursor = 0;

  TrainResult result;
  result.log.reserve(static_cast<std::size_t>(config.iterations));
  const double reset_logit = logit(0.01);

  for (int t = 1; t <= config.iterations; ++t) {
    if (cursor == order.size()) {
      order = train_views;
      view_rng.shuffle(order);
      cursor = 0;
    }
    const View& view = bundle.views[order[cursor++]];

    const RenderOutput rendered = render(scene, view.camera);
    const TotalLoss loss =
        use_depth ? total_loss(rendered.thermal, view.thermal, rendered.depth, *view.depth_prior, config.weights, t)
                  : thermal_only_loss(rendered.thermal, view.thermal, rendered.depth, config.weights, t);
    const RenderGradients grads = render_backward(scene, rendered.tape, loss.grad_thermal, loss.grad_depth);
    stats.add(grads.screen_grad_norm, grads.visible);

    const double progress =
        config.iterations > 1 ? static_cast<double>(t - 1) / static_cast<double>(config.iterations - 1) : 0.0;
    const double lr_pos = std::exp((1.0 - progress) * std::log(config.lr_position * spatial) +
                                   progress * std::log(config.lr_position_final * spatial));
    adam_step(scene, grads.params, state,
              {lr_pos, config.lr_scale, config.lr_rotation, config.lr_opacity, config.lr_thermal});
    scene.round_to_storage_precision();

    if (t >= config.densify_from && t <= config.densify_until && t % config.densify_interval == 0) {
      densify_and_prune(scene, state, stats.mean(), config, t, extent, config.seed);
      stats = DensityStats(scene.count());
    }
    if (config.opacity_reset_interval > 0 && t % config.opacity_reset_interval == 0 && t <= config.densify_until) {
      for (double& l : scene.opacity_logits) l = std::min(l, reset_logit);
      scene.round_to_storage_precision();
      std::fill(state.first_moment.opacity_logits.begin(), state.first_moment.opacity_logits.end(), 0.0);
      std::fill(state.second_moment.opacity_logits.begin(), state.second_moment.opacity_logits.end(), 0.0);
    }

    result.log.push_back({t, loss.report, scene.count()});
    if (observer && !observer(t, scene)) break;
  }
  result.scene = std::move(scene);
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

Split split_train_test(std::size_t view_count, double ratio, std::uint64_t seed) {
  if (view_count < 2) throw Error(ErrorCode::InvalidInput, "split_train_test: need at least 2 views");
  if (!(ratio > 0.0 && ratio < 1.0)) throw Error(ErrorCode::InvalidInput, "split_train_test: ratio must lie in (0, 1)");
  std::vector<std::size_t> order(view_count);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);
  std::size_t n_train = static_cast<std::size_t>(std::llround(static_cast<double>(view_count) * ratio));
  n_train = std::clamp<std::size_t>(n_train, 1, view_count - 1);
  Split split;
  split.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  split.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

}  // namespace tdg
