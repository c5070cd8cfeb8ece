#include "tdg/scene.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <string>

#include <Eigen/Dense>

#include "tdg/error.hpp"
#include "tdg/rng.hpp"

namespace tdg {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidParameter: return "invalid parameter";
    case ErrorCode::EmptyInput: return "empty input";
    case ErrorCode::InvalidScene: return "invalid scene";
    case ErrorCode::ContractViolation: return "contract violation";
    case ErrorCode::InvalidInput: return "invalid input";
    case ErrorCode::InvalidConfig: return "invalid config";
    case ErrorCode::InvalidState: return "invalid state";
    case ErrorCode::Parse: return "parse error";
    case ErrorCode::UnsupportedModel: return "unsupported model";
    case ErrorCode::UnsupportedFormat: return "unsupported format";
    case ErrorCode::Io: return "i/o error";
    case ErrorCode::IncompatibleCheckpoint: return "incompatible checkpoint";
  }
  return "unknown error";
}

GaussianScene GaussianScene::zeros(std::size_t n) {
  GaussianScene s;
  s.positions.assign(3 * n, 0.0);
  s.log_scales.assign(3 * n, 0.0);
  s.rotations.assign(4 * n, 0.0);
  s.opacity_logits.assign(n, 0.0);
  s.thermal_features.assign(n, 0.0);
  return s;
}

void GaussianScene::validate_shape() const {
  const std::size_t n = count();
  const auto g = groups();
  for (std::size_t k = 0; k < kGroupCount; ++k) {
    if (g[k]->size() != kGroupStrides[k] * n) {
      throw Error(ErrorCode::InvalidScene,
                  "scene field " + std::to_string(k) + " has " + std::to_string(g[k]->size()) +
                      " values, expected " + std::to_string(kGroupStrides[k] * n));
    }
  }
}

void GaussianScene::set_position(std::size_t i, const Vec3& p) {
  for (int k = 0; k < 3; ++k) positions[3 * i + k] = p[k];
}

void GaussianScene::set_log_scale(std::size_t i, const Vec3& s) {
  for (int k = 0; k < 3; ++k) log_scales[3 * i + k] = s[k];
}

void GaussianScene::set_rotation(std::size_t i, const Quat& q) {
  for (int k = 0; k < 4; ++k) rotations[4 * i + k] = q[k];
}

double GaussianScene::opacity(std::size_t i) const { return sigmoid(opacity_logits[i]); }

Vec3 GaussianScene::scale(std::size_t i) const { return log_scale(i).array().exp(); }

void GaussianScene::append_from(const GaussianScene& src, std::size_t i) {
  auto dst = groups();
  const auto from = src.groups();
  for (std::size_t k = 0; k < kGroupCount; ++k) {
    const std::size_t stride = kGroupStrides[k];
    dst[k]->insert(dst[k]->end(), from[k]->begin() + static_cast<std::ptrdiff_t>(stride * i),
                   from[k]->begin() + static_cast<std::ptrdiff_t>(stride * (i + 1)));
  }
}

void GaussianScene::keep(const std::vector<bool>& mask) {
  const std::size_t n = count();
  auto g = groups();
  for (std::size_t k = 0; k < kGroupCount; ++k) {
    const std::size_t stride = kGroupStrides[k];
    std::vector<double>& field = *g[k];
    std::size_t out = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!mask[i]) continue;
      for (std::size_t c = 0; c < stride; ++c) field[out * stride + c] = field[i * stride + c];
      ++out;
    }
    field.resize(out * stride);
  }
}

void GaussianScene::round_to_storage_precision() {
  for (auto* field : groups()) {
    for (double& v : *field) v = static_cast<double>(static_cast<float>(v));
  }
}

std::uint64_t GaussianScene::fingerprint() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* data, std::size_t bytes) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < bytes; ++i) {
      h ^= p[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto* field : groups()) {
    const std::uint64_t n = field->size();
    mix(&n, sizeof n);
    mix(field->data(), field->size() * sizeof(double));
  }
  return h;
}

double sigmoid(double x) noexcept { return 1.0 / (1.0 + std::exp(-x)); }

double logit(double p) noexcept { return std::log(p / (1.0 - p)); }

Mat3 quat_to_rotation(const Quat& q_raw) {
  const double norm = q_raw.norm();
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    throw Error(ErrorCode::InvalidParameter, "quaternion must have finite non-zero norm");
  }
  const Quat q = q_raw / norm;
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3 r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

Mat3 build_covariance(const Vec3& log_scale, const Quat& rotation) {
  if (!log_scale.allFinite() || !rotation.allFinite()) {
    throw Error(ErrorCode::InvalidParameter, "build_covariance: non-finite input");
  }
  const Mat3 r = quat_to_rotation(rotation);
  const Vec3 s = log_scale.array().exp();
  if (!s.allFinite()) throw Error(ErrorCode::InvalidParameter, "build_covariance: scale overflow");
  const Mat3 m = r * s.asDiagonal();
  return m * m.transpose();
}

namespace {

// Mean distance to the nearest `k` other points, brute force. Desk-scale
// point clouds are small enough that a spatial index is not worth it.
std::vector<double> mean_neighbor_distance(const std::vector<Vec3>& pts, int k) {
  const std::size_t n = pts.size();
  std::vector<double> out(n, 0.0);
  std::vector<double> d;
  for (std::size_t i = 0; i < n; ++i) {
    d.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) d.push_back((pts[i] - pts[j]).norm());
    }
    const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(k), d.size());
    std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(take), d.end());
    double sum = 0.0;
    for (std::size_t t = 0; t < take; ++t) sum += d[t];
    out[i] = take > 0 ? sum / static_cast<double>(take) : 0.0;
  }
  return out;
}

constexpr double kMinInitScale = 1e-4;
// Used when a lone point has no neighbours to measure against.
constexpr double kIsolatedPointScale = 0.01;

GaussianScene seed_scene(const std::vector<Vec3>& positions, const std::vector<double>& intensities) {
  const std::size_t n = positions.size();
  GaussianScene s = GaussianScene::zeros(n);
  const std::vector<double> dist = mean_neighbor_distance(positions, kInitNeighbors);
  const double init_logit = logit(kInitialOpacity);
  for (std::size_t i = 0; i < n; ++i) {
    s.set_position(i, positions[i]);
    const double scale = n > 1 ? std::max(dist[i], kMinInitScale) : kIsolatedPointScale;
    s.set_log_scale(i, Vec3::Constant(std::log(scale)));
    s.set_rotation(i, Quat(1.0, 0.0, 0.0, 0.0));
    s.opacity_logits[i] = init_logit;
    s.thermal_features[i] = intensities[i];
  }
  s.round_to_storage_precision();
  return s;
}

}  // namespace

GaussianScene init_from_points(const std::vector<SeedPoint>& points) {
  if (points.empty()) throw Error(ErrorCode::EmptyInput, "init_from_points: no points");
  std::vector<Vec3> pos;
  std::vector<double> intensity;
  pos.reserve(points.size());
  intensity.reserve(points.size());
  for (const auto& p : points) {
    if (!p.position.allFinite() || !std::isfinite(p.intensity)) {
      throw Error(ErrorCode::InvalidInput, "init_from_points: non-finite point");
    }
    pos.push_back(p.position);
    intensity.push_back(p.intensity);
  }
  return seed_scene(pos, intensity);
}

GaussianScene init_random(std::size_t n, const Bounds& bounds, std::uint64_t seed) {
  if (n == 0) throw Error(ErrorCode::EmptyInput, "init_random: n must be at least 1");
  const Vec3 extent = bounds.hi - bounds.lo;
  if (!(extent.minCoeff() > 0.0) || !extent.allFinite()) {
    throw Error(ErrorCode::InvalidParameter, "init_random: bounds must have positive volume");
  }
  Rng rng(seed);
  std::vector<Vec3> pos(n);
  for (auto& p : pos) {
    for (int k = 0; k < 3; ++k) p[k] = rng.uniform(bounds.lo[k], bounds.hi[k]);
  }
  return seed_scene(pos, std::vector<double>(n, kDefaultIntensity));
}

void Camera::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0) || width <= 0 || height <= 0 || !(near_clip > 0.0)) {
    throw Error(ErrorCode::InvalidParameter, "camera: focal lengths, size and near_clip must be positive");
  }
  const double ortho = (rotation * rotation.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (!(ortho <= 1e-6) || std::abs(rotation.determinant() - 1.0) > 1e-6) {
    throw Error(ErrorCode::InvalidParameter, "camera: rotation must be orthonormal with determinant +1");
  }
  if (!translation.allFinite()) throw Error(ErrorCode::InvalidParameter, "camera: non-finite translation");
}

Camera Camera::look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double fx, double fy,
                       int width, int height) {
  const Vec3 forward = (target - eye).normalized();
  // Rows (right, down, forward) form a right-handed frame with image y down.
  const Vec3 right = forward.cross(up).normalized();
  const Vec3 down = forward.cross(right).normalized();
  Camera cam;
  cam.fx = fx;
  cam.fy = fy;
  cam.width = width;
  cam.height = height;
  cam.cx = width / 2.0;
  cam.cy = height / 2.0;
  cam.rotation.row(0) = right.transpose();
  cam.rotation.row(1) = down.transpose();
  cam.rotation.row(2) = forward.transpose();
  cam.translation = -cam.rotation * eye;
  return cam;
}

}  // namespace tdg
