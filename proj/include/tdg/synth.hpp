#pragma once

#include <cstdint>

#include "tdg/bundle.hpp"
#include "tdg/scene.hpp"

namespace tdg {

struct SynthSpec {
  std::size_t n_gaussians = 5;
  std::size_t n_views = 12;
  int width = 64;
  int height = 64;
  double orbit_radius = 4.0;
  /// Camera height above the orbit plane (world z is up).
  double orbit_height = 1.0;
  double fov_degrees = 60.0;
  std::uint64_t seed = 3;
  /// Standard deviation of additive noise on the depth priors.
  double prior_noise = 0.0;
  double train_ratio = 0.8;

  void validate() const;
};

struct SynthScene {
  GaussianScene truth;
  TrainingBundle bundle;
};

/// Warm Gaussian blobs inside the unit ball, viewed from an orbit of cameras
/// looking at the origin. Thermal frames and depth priors are renders of the
/// ground truth; initial points are the true centres.
SynthScene generate(const SynthSpec& spec);

}  // namespace tdg
