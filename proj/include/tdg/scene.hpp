#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

namespace tdg {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;

/// Quaternion stored as (w, x, y, z).
using Quat = Eigen::Vector4d;

/// Optimizable Gaussian set in raw-parameter form.
///
/// Fields are flat arrays with a fixed stride per Gaussian (3 for positions
/// and log-scales, 4 for rotations, 1 for opacity logits and thermal
/// features). The same layout doubles as the container for gradients and
/// optimizer moments, so shapes stay in lockstep through densification.
struct GaussianScene {
  std::vector<double> positions;
  std::vector<double> log_scales;
  std::vector<double> rotations;
  std::vector<double> opacity_logits;
  std::vector<double> thermal_features;

  static constexpr std::size_t kGroupCount = 5;

  std::size_t count() const noexcept { return opacity_logits.size(); }
  bool empty() const noexcept { return count() == 0; }

  /// Zero-filled container with `n` Gaussians.
  static GaussianScene zeros(std::size_t n);

  /// Throws InvalidScene when field lengths disagree with count().
  void validate_shape() const;

  Vec3 position(std::size_t i) const { return {positions[3 * i], positions[3 * i + 1], positions[3 * i + 2]}; }
  Vec3 log_scale(std::size_t i) const { return {log_scales[3 * i], log_scales[3 * i + 1], log_scales[3 * i + 2]}; }
  Quat rotation(std::size_t i) const {
    return {rotations[4 * i], rotations[4 * i + 1], rotations[4 * i + 2], rotations[4 * i + 3]};
  }
  void set_position(std::size_t i, const Vec3& p);
  void set_log_scale(std::size_t i, const Vec3& s);
  void set_rotation(std::size_t i, const Quat& q);

  double opacity(std::size_t i) const;
  Vec3 scale(std::size_t i) const;

  /// Appends Gaussian `i` of `src`.
  void append_from(const GaussianScene& src, std::size_t i);
  /// Keeps Gaussians whose mask entry is true, preserving order.
  void keep(const std::vector<bool>& mask);

  /// Parameter groups in checkpoint order.
  std::array<std::vector<double>*, kGroupCount> groups() {
    return {&positions, &log_scales, &rotations, &opacity_logits, &thermal_features};
  }
  std::array<const std::vector<double>*, kGroupCount> groups() const {
    return {&positions, &log_scales, &rotations, &opacity_logits, &thermal_features};
  }

  /// Rounds every parameter to the nearest float; checkpoints store f32.
  void round_to_storage_precision();

  /// FNV-1a over the raw bytes of every field.
  std::uint64_t fingerprint() const;

  friend bool operator==(const GaussianScene&, const GaussianScene&) = default;
};

inline constexpr std::array<std::size_t, GaussianScene::kGroupCount> kGroupStrides{3, 3, 4, 1, 1};

double sigmoid(double x) noexcept;
double logit(double p) noexcept;

/// Rotation matrix of a quaternion after normalization.
Mat3 quat_to_rotation(const Quat& q);

/// Sigma = R S S^T R^T with S = diag(exp(log_scale)).
Mat3 build_covariance(const Vec3& log_scale, const Quat& rotation);

/// A seed point for initialization (e.g. a COLMAP 3D point).
struct SeedPoint {
  Vec3 position = Vec3::Zero();
  double intensity = 0.5;
};

struct Bounds {
  Vec3 lo = Vec3::Zero();
  Vec3 hi = Vec3::Ones();
};

inline constexpr double kInitialOpacity = 0.1;
inline constexpr double kDefaultIntensity = 0.5;
inline constexpr int kInitNeighbors = 3;

GaussianScene init_from_points(const std::vector<SeedPoint>& points);
GaussianScene init_random(std::size_t n, const Bounds& bounds, std::uint64_t seed);

/// Pinhole camera with a world-to-camera pose (x right, y down, z forward).
struct Camera {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  double near_clip = 0.01;

  /// Throws InvalidParameter on a non-orthonormal rotation or non-positive intrinsics.
  void validate() const;

  Vec3 to_camera(const Vec3& world) const { return rotation * world + translation; }
  Vec3 center() const { return -rotation.transpose() * translation; }

  /// Camera at `eye` looking at `target`; `up` fixes roll.
  static Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double fx, double fy,
                        int width, int height);
};

}  // namespace tdg
