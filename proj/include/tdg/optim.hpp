#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <vector>

#include "tdg/bundle.hpp"
#include "tdg/losses.hpp"
#include "tdg/scene.hpp"

namespace tdg {

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEpsilon = 1e-15;

enum class InitMode { Points, Random };

struct TrainConfig {
  int iterations = 30000;

  double lr_position = 1.6e-4;
  double lr_position_final = 1.6e-6;
  double lr_scale = 5e-3;
  double lr_rotation = 1e-3;
  double lr_opacity = 5e-2;
  double lr_thermal = 2.5e-3;
  /// Multiplies the position rates; 0 derives it from the camera spread.
  double spatial_lr_scale = 0.0;

  int densify_interval = 100;
  int densify_from = 500;
  int densify_until = 15000;
  double densify_grad_threshold = 2e-4;
  /// Gaussians larger than this fraction of the scene extent are split, smaller ones cloned.
  double percent_dense = 0.01;
  double prune_opacity_threshold = 0.005;
  int opacity_reset_interval = 3000;
  std::size_t max_gaussians = 20000;

  LossWeights weights;
  std::uint64_t seed = 0;

  InitMode init = InitMode::Points;
  /// Gaussians drawn by random init; 0 matches the bundle's point count.
  std::size_t random_init_count = 0;

  /// Defaults for a run of `iterations` steps with the depth term fading out
  /// after `t_end_frac` of them; densification stops at the same point.
  static TrainConfig for_iterations(int iterations, double t_end_frac = 0.5);

  void validate() const;
};

/// Adaptive moment estimates, shaped like the scene.
struct OptimizerState {
  GaussianScene first_moment;
  GaussianScene second_moment;
  long step = 0;

  static OptimizerState for_scene(const GaussianScene& scene);
};

/// Learning rate per parameter group, in checkpoint field order.
using GroupLearningRates = std::array<double, GaussianScene::kGroupCount>;

void adam_step(GaussianScene& scene, const GaussianScene& gradients, OptimizerState& state,
               const GroupLearningRates& learning_rates);

/// Running screen-space gradient statistics between densification events.
struct DensityStats {
  std::vector<double> grad_sum;
  std::vector<int> observations;

  explicit DensityStats(std::size_t n = 0) : grad_sum(n, 0.0), observations(n, 0) {}
  void add(const std::vector<double>& norms, const std::vector<bool>& visible);
  std::vector<double> mean() const;
};

struct DensifyOutcome {
  std::size_t cloned = 0;
  std::size_t split = 0;
  std::size_t pruned = 0;
};

/// Clones or splits Gaussians whose mean screen gradient exceeds the threshold,
/// then prunes near-transparent ones. Moments of new Gaussians start at zero.
/// A no-op outside the densification schedule.
DensifyOutcome densify_and_prune(GaussianScene& scene, OptimizerState& state, const std::vector<double>& mean_grad_norms,
                                 const TrainConfig& config, int iteration, double scene_extent, std::uint64_t seed);

struct IterationLog {
  int iteration = 0;
  LossReport loss;
  std::size_t gaussian_count = 0;
};

/// Called after every iteration; return false to stop early.
using TrainObserver = std::function<bool(int iteration, const GaussianScene& scene)>;

struct TrainResult {
  GaussianScene scene;
  std::vector<IterationLog> log;
  double seconds = 0.0;
};

/// Radius of the camera centres around their mean, padded by 10%.
double camera_extent(const std::vector<Camera>& cameras);

/// Initial scene for `config.init`.
GaussianScene initial_scene(const TrainingBundle& bundle, const TrainConfig& config);

TrainResult train(const TrainingBundle& bundle, const TrainConfig& config, const TrainObserver& observer = {});

TrainResult train_from(GaussianScene scene, const TrainingBundle& bundle, const TrainConfig& config,
                       const TrainObserver& observer = {});

/// Seeded split: the first round(n * ratio) views of a shuffled order train,
/// the rest test. Both sides keep at least one view.
Split split_train_test(std::size_t view_count, double ratio, std::uint64_t seed);

}  // namespace tdg
