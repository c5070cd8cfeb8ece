#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "tdg/image.hpp"
#include "tdg/scene.hpp"

namespace tdg {

/// Added to the projected covariance diagonal (pixel^2).
inline constexpr double kLowPassFloor = 0.3;
inline constexpr double kMaxSplatAlpha = 0.99;
inline constexpr double kTransmittanceCutoff = 1e-4;
/// Contributions below this alpha are skipped; bounds the per-splat footprint.
inline constexpr double kMinSplatAlpha = 1e-8;
/// Squared Mahalanobis radius holding 99% of a 2D Gaussian's mass (-2 ln 0.01).
inline constexpr double kMass99Radius2 = 9.210340371976184;
inline constexpr int kTileSize = 16;

/// A Gaussian after projection into one camera.
struct Splat2D {
  Vec2 mean2d = Vec2::Zero();
  /// Projected covariance including the low-pass floor.
  Mat2 cov2d = Mat2::Identity();
  double depth_z = 0.0;
  std::size_t source_index = 0;

  // Cached for blending.
  Mat2 conic = Mat2::Identity();
  double opacity = 0.0;
  double thermal = 0.0;
  /// Half-extent of the footprint where alpha can reach kMinSplatAlpha.
  double footprint_radius = 0.0;
};

/// J W Sigma W^T J^T for a camera-space centre, without the low-pass floor.
Mat2 project_covariance(const Mat3& cov3d, const Vec3& cam_point, const Camera& camera);

/// Projects Gaussian `index`; std::nullopt when culled (behind the near plane
/// or with its 99%-mass ellipse entirely outside the image).
std::optional<Splat2D> project_gaussian(const GaussianScene& scene, std::size_t index, const Camera& camera);

/// Everything the backward pass needs to replay one render.
struct RenderTape {
  std::uint64_t scene_fingerprint = 0;
  Camera camera;
  /// Visible splats sorted front to back.
  std::vector<Splat2D> splats;
  int tiles_x = 0;
  int tiles_y = 0;
  /// Per-tile ranges into `tile_entries` (indices into `splats`), front to back.
  std::vector<std::size_t> tile_offsets;
  std::vector<std::uint32_t> tile_entries;
  /// Per pixel: number of tile entries visited before blending stopped.
  std::vector<std::uint32_t> visited;
  std::vector<double> final_transmittance;
  /// Per pixel: true when the thermal sum was clamped into [0, 1].
  std::vector<std::uint8_t> thermal_clamped;
};

struct RenderOutput {
  Image thermal;
  Image depth;
  Image alpha_acc;
  RenderTape tape;
};

/// Front-to-back alpha blending of thermal features and camera-space depth.
RenderOutput render(const GaussianScene& scene, const Camera& camera);

/// Parameter gradients, laid out exactly like the scene.
struct RenderGradients {
  GaussianScene params;
  /// Per Gaussian: norm of the screen-space mean gradient in NDC units
  /// (0 for Gaussians not visible in this view).
  std::vector<double> screen_grad_norm;
  std::vector<bool> visible;
};

/// Gradients of sum(grad_thermal * thermal + grad_depth * depth) with respect
/// to the raw scene parameters. `scene` must be the one passed to render().
RenderGradients render_backward(const GaussianScene& scene, const RenderTape& tape,
                                const Image& grad_thermal, const Image& grad_depth);

}  // namespace tdg
