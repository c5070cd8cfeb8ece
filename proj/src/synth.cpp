#include "tdg/synth.hpp"

#include <cmath>
#include <numbers>

#include <fmt/core.h>

#include "tdg/optim.hpp"
#include "tdg/prior.hpp"
#include "tdg/rasterizer.hpp"
#include "tdg/rng.hpp"

namespace tdg {
namespace {

constexpr double kMinBlobScale = 0.15;
constexpr double kMaxBlobScale = 0.35;
constexpr double kMinBlobOpacity = 0.8;
constexpr double kMaxBlobOpacity = 0.95;
constexpr double kMinThermal = 0.2;
constexpr double kMaxThermal = 1.0;

}  // namespace

void SynthSpec::validate() const {
  if (n_gaussians < 1) throw Error(ErrorCode::InvalidConfig, "synth: need at least one Gaussian");
  if (n_views < 2) throw Error(ErrorCode::InvalidConfig, "synth: need at least two views");
  if (width < 1 || height < 1) throw Error(ErrorCode::InvalidConfig, "synth: resolution must be positive");
  // Cameras must sit outside the populated unit ball.
  if (!(orbit_radius > 1.5)) throw Error(ErrorCode::InvalidConfig, "synth: orbit radius must exceed 1.5");
  if (!(fov_degrees > 1.0 && fov_degrees < 170.0)) throw Error(ErrorCode::InvalidConfig, "synth: fov out of range");
  if (!(prior_noise >= 0.0)) throw Error(ErrorCode::InvalidConfig, "synth: prior noise must be non-negative");
  if (!(train_ratio > 0.0 && train_ratio < 1.0)) throw Error(ErrorCode::InvalidConfig, "synth: train ratio must lie in (0, 1)");
}

SynthScene generate(const SynthSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  SynthScene out;
  GaussianScene& truth = out.truth;
  truth = GaussianScene::zeros(spec.n_gaussians);
  for (std::size_t i = 0; i < spec.n_gaussians; ++i) {
    Vec3 p;
    do {
      p = Vec3(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
    } while (p.squaredNorm() > 1.0);
    truth.set_position(i, p);
    Vec3 log_scale;
    for (int k = 0; k < 3; ++k) log_scale[k] = rng.uniform(std::log(kMinBlobScale), std::log(kMaxBlobScale));
    truth.set_log_scale(i, log_scale);
    Quat q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    truth.set_rotation(i, q.normalized());
    truth.opacity_logits[i] = logit(rng.uniform(kMinBlobOpacity, kMaxBlobOpacity));
    truth.thermal_features[i] = rng.uniform(kMinThermal, kMaxThermal);
  }
  truth.round_to_storage_precision();

  TrainingBundle& bundle = out.bundle;
  bundle.scene_name = fmt::format("synthetic-seed{}", spec.seed);
  const double focal = 0.5 * spec.width / std::tan(0.5 * spec.fov_degrees * std::numbers::pi / 180.0);
  Rng noise(spec.seed ^ 0xD1B54A32D192ED03ULL);
  for (std::size_t v = 0; v < spec.n_views; ++v) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(v) / static_cast<double>(spec.n_views);
    const Vec3 eye(spec.orbit_radius * std::cos(angle), spec.orbit_radius * std::sin(angle), spec.orbit_height);
    View view;
    view.name = fmt::format("view_{:03d}.pgm", v);
    view.camera = Camera::look_at(eye, Vec3::Zero(), Vec3::UnitZ(), focal, focal, spec.width, spec.height);
    const RenderOutput r = render(truth, view.camera);
    view.thermal = r.thermal;
    Image prior = r.depth;
    if (spec.prior_noise > 0.0) {
      for (double& d : prior.data) d += spec.prior_noise * noise.normal();
    }
    view.depth_prior = std::move(prior);
    view.provenance = PriorProvenance::SyntheticOracle;
    bundle.views.push_back(std::move(view));
  }
  for (std::size_t i = 0; i < truth.count(); ++i) {
    bundle.initial_points.push_back({truth.position(i), truth.thermal_features[i]});
  }
  bundle.split = split_train_test(spec.n_views, spec.train_ratio, spec.seed);
  return out;
}

}  // namespace tdg
