#include "tdg/rasterizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Dense>

#include "tdg/error.hpp"
#include "tdg/parallel.hpp"

namespace tdg {
namespace {

using Mat23 = Eigen::Matrix<double, 2, 3>;

Mat23 projection_jacobian(const Vec3& t, const Camera& cam) {
  const double iz = 1.0 / t.z();
  Mat23 j;
  j << cam.fx * iz, 0.0, -cam.fx * t.x() * iz * iz,
       0.0, cam.fy * iz, -cam.fy * t.y() * iz * iz;
  return j;
}

double largest_eigenvalue(const Mat2& m) {
  const double mid = 0.5 * (m(0, 0) + m(1, 1));
  const double det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
  return mid + std::sqrt(std::max(0.0, mid * mid - det));
}

struct PixelSpan {
  int x0, x1, y0, y1;  // inclusive
};

PixelSpan footprint_pixels(const Splat2D& s, int width, int height) {
  const double r = s.footprint_radius;
  // Pixel x has centre x + 0.5.
  PixelSpan span{
      static_cast<int>(std::ceil(s.mean2d.x() - r - 0.5)),
      static_cast<int>(std::floor(s.mean2d.x() + r - 0.5)),
      static_cast<int>(std::ceil(s.mean2d.y() - r - 0.5)),
      static_cast<int>(std::floor(s.mean2d.y() + r - 0.5)),
  };
  span.x0 = std::max(span.x0, 0);
  span.y0 = std::max(span.y0, 0);
  span.x1 = std::min(span.x1, width - 1);
  span.y1 = std::min(span.y1, height - 1);
  return span;
}

// Alpha of a splat at a pixel centre, before the 0.99 clamp.
inline double raw_alpha(const Splat2D& s, double px, double py, double& dx, double& dy, double& g) {
  dx = s.mean2d.x() - px;
  dy = s.mean2d.y() - py;
  const double power = s.conic(0, 0) * dx * dx + 2.0 * s.conic(0, 1) * dx * dy + s.conic(1, 1) * dy * dy;
  g = std::exp(-0.5 * power);
  return s.opacity * g;
}

}  // namespace

Mat2 project_covariance(const Mat3& cov3d, const Vec3& cam_point, const Camera& camera) {
  const Mat23 j = projection_jacobian(cam_point, camera);
  const Mat23 t = j * camera.rotation;
  return t * cov3d * t.transpose();
}

std::optional<Splat2D> project_gaussian(const GaussianScene& scene, std::size_t index, const Camera& camera) {
  if (index >= scene.count()) throw Error(ErrorCode::InvalidParameter, "project_gaussian: index out of range");
  const Vec3 t = camera.to_camera(scene.position(index));
  if (t.z() <= camera.near_clip) return std::nullopt;

  Splat2D s;
  s.source_index = index;
  s.depth_z = t.z();
  s.mean2d = {camera.fx * t.x() / t.z() + camera.cx, camera.fy * t.y() / t.z() + camera.cy};
  s.cov2d = project_covariance(build_covariance(scene.log_scale(index), scene.rotation(index)), t, camera);
  s.cov2d(0, 0) += kLowPassFloor;
  s.cov2d(1, 1) += kLowPassFloor;
  // Symmetrize away round-off so the conic is exactly symmetric.
  s.cov2d(0, 1) = s.cov2d(1, 0) = 0.5 * (s.cov2d(0, 1) + s.cov2d(1, 0));

  const double lambda_max = largest_eigenvalue(s.cov2d);
  const double r99 = std::sqrt(kMass99Radius2 * lambda_max);
  if (s.mean2d.x() + r99 < 0.0 || s.mean2d.x() - r99 > camera.width || s.mean2d.y() + r99 < 0.0 ||
      s.mean2d.y() - r99 > camera.height) {
    return std::nullopt;
  }

  const double det = s.cov2d.determinant();
  s.conic << s.cov2d(1, 1) / det, -s.cov2d(0, 1) / det, -s.cov2d(1, 0) / det, s.cov2d(0, 0) / det;
  s.opacity = scene.opacity(index);
  s.thermal = scene.thermal_features[index];
  s.footprint_radius = s.opacity > kMinSplatAlpha
                           ? std::sqrt(2.0 * lambda_max * std::log(s.opacity / kMinSplatAlpha))
                           : 0.0;
  return s;
}

RenderOutput render(const GaussianScene& scene, const Camera& camera) {
  scene.validate_shape();
  camera.validate();
  const int w = camera.width;
  const int h = camera.height;

  RenderOutput out;
  out.thermal = Image(w, h);
  out.depth = Image(w, h);
  out.alpha_acc = Image(w, h);
  RenderTape& tape = out.tape;
  tape.scene_fingerprint = scene.fingerprint();
  tape.camera = camera;

  for (std::size_t i = 0; i < scene.count(); ++i) {
    if (auto s = project_gaussian(scene, i, camera)) tape.splats.push_back(*s);
  }
  std::sort(tape.splats.begin(), tape.splats.end(), [](const Splat2D& a, const Splat2D& b) {
    return a.depth_z != b.depth_z ? a.depth_z < b.depth_z : a.source_index < b.source_index;
  });

  tape.tiles_x = (w + kTileSize - 1) / kTileSize;
  tape.tiles_y = (h + kTileSize - 1) / kTileSize;
  const std::size_t n_tiles = static_cast<std::size_t>(tape.tiles_x) * tape.tiles_y;
  std::vector<std::vector<std::uint32_t>> bins(n_tiles);
  for (std::size_t k = 0; k < tape.splats.size(); ++k) {
    const Splat2D& s = tape.splats[k];
    if (s.footprint_radius <= 0.0) continue;
    const PixelSpan span = footprint_pixels(s, w, h);
    if (span.x0 > span.x1 || span.y0 > span.y1) continue;
    for (int ty = span.y0 / kTileSize; ty <= span.y1 / kTileSize; ++ty) {
      for (int tx = span.x0 / kTileSize; tx <= span.x1 / kTileSize; ++tx) {
        bins[static_cast<std::size_t>(ty) * tape.tiles_x + tx].push_back(static_cast<std::uint32_t>(k));
      }
    }
  }
  tape.tile_offsets.assign(n_tiles + 1, 0);
  for (std::size_t t = 0; t < n_tiles; ++t) tape.tile_offsets[t + 1] = tape.tile_offsets[t] + bins[t].size();
  tape.tile_entries.reserve(tape.tile_offsets.back());
  for (const auto& bin : bins) tape.tile_entries.insert(tape.tile_entries.end(), bin.begin(), bin.end());

  const std::size_t n_pixels = static_cast<std::size_t>(w) * h;
  tape.visited.assign(n_pixels, 0);
  tape.final_transmittance.assign(n_pixels, 1.0);
  tape.thermal_clamped.assign(n_pixels, 0);

  parallel_for(n_tiles, [&](std::size_t tile) {
    const int tx = static_cast<int>(tile % tape.tiles_x);
    const int ty = static_cast<int>(tile / tape.tiles_x);
    const std::size_t begin = tape.tile_offsets[tile];
    const std::size_t end = tape.tile_offsets[tile + 1];
    for (int y = ty * kTileSize; y < std::min(h, (ty + 1) * kTileSize); ++y) {
      for (int x = tx * kTileSize; x < std::min(w, (tx + 1) * kTileSize); ++x) {
        const double px = x + 0.5;
        const double py = y + 0.5;
        double transmittance = 1.0;
        double thermal = 0.0, depth = 0.0, alpha_acc = 0.0;
        std::size_t e = begin;
        for (; e < end; ++e) {
          const Splat2D& s = tape.splats[tape.tile_entries[e]];
          double dx, dy, g;
          double alpha = raw_alpha(s, px, py, dx, dy, g);
          if (alpha < kMinSplatAlpha) continue;
          alpha = std::min(alpha, kMaxSplatAlpha);
          const double weight = alpha * transmittance;
          thermal += s.thermal * weight;
          depth += s.depth_z * weight;
          alpha_acc += weight;
          transmittance *= 1.0 - alpha;
          if (transmittance < kTransmittanceCutoff) {
            ++e;
            break;
          }
        }
        const std::size_t p = static_cast<std::size_t>(y) * w + x;
        tape.visited[p] = static_cast<std::uint32_t>(e - begin);
        tape.final_transmittance[p] = transmittance;
        if (thermal < 0.0 || thermal > 1.0) tape.thermal_clamped[p] = 1;
        out.thermal[p] = std::clamp(thermal, 0.0, 1.0);
        out.depth[p] = depth;
        out.alpha_acc[p] = std::min(alpha_acc, 1.0);
      }
    }
  });
  return out;
}

namespace {

// Per tile-entry accumulator layout.
enum Slot { kMeanU, kMeanV, kConicA, kConicB, kConicC, kOpacity, kThermal, kDepth, kSlots };

// dR/dq for a unit quaternion (w, x, y, z), one matrix per component.
std::array<Mat3, 4> rotation_partials(const Quat& q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  std::array<Mat3, 4> d;
  d[0] << 0, -2 * z, 2 * y, 2 * z, 0, -2 * x, -2 * y, 2 * x, 0;
  d[1] << 0, 2 * y, 2 * z, 2 * y, -4 * x, -2 * w, 2 * z, 2 * w, -4 * x;
  d[2] << -4 * y, 2 * x, 2 * w, 2 * x, 0, 2 * z, -2 * w, 2 * z, -4 * y;
  d[3] << -4 * z, -2 * w, 2 * x, 2 * w, -4 * z, 2 * y, 2 * x, 2 * y, 0;
  return d;
}

}  // namespace

RenderGradients render_backward(const GaussianScene& scene, const RenderTape& tape, const Image& grad_thermal,
                                const Image& grad_depth) {
  if (scene.fingerprint() != tape.scene_fingerprint) {
    throw Error(ErrorCode::ContractViolation, "render_backward: scene changed since the render that produced the tape");
  }
  const Camera& cam = tape.camera;
  const int w = cam.width;
  const int h = cam.height;
  if (grad_thermal.width != w || grad_thermal.height != h || grad_depth.width != w || grad_depth.height != h) {
    throw Error(ErrorCode::InvalidInput, "render_backward: upstream gradient size does not match the camera");
  }

  RenderGradients result;
  result.params = GaussianScene::zeros(scene.count());
  result.screen_grad_norm.assign(scene.count(), 0.0);
  result.visible.assign(scene.count(), false);

  std::vector<double> entry_grads(tape.tile_entries.size() * kSlots, 0.0);
  const std::size_t n_tiles = tape.tile_offsets.size() - 1;

  parallel_for(n_tiles, [&](std::size_t tile) {
    const int tx = static_cast<int>(tile % tape.tiles_x);
    const int ty = static_cast<int>(tile / tape.tiles_x);
    const std::size_t begin = tape.tile_offsets[tile];
    for (int y = ty * kTileSize; y < std::min(h, (ty + 1) * kTileSize); ++y) {
      for (int x = tx * kTileSize; x < std::min(w, (tx + 1) * kTileSize); ++x) {
        const std::size_t p = static_cast<std::size_t>(y) * w + x;
        const double g_thermal = tape.thermal_clamped[p] ? 0.0 : grad_thermal[p];
        const double g_depth = grad_depth[p];
        if (g_thermal == 0.0 && g_depth == 0.0) continue;
        const double px = x + 0.5;
        const double py = y + 0.5;
        double transmittance = tape.final_transmittance[p];
        double later_thermal = 0.0;
        double later_depth = 0.0;
        for (std::size_t e = begin + tape.visited[p]; e-- > begin;) {
          const Splat2D& s = tape.splats[tape.tile_entries[e]];
          double dx, dy, g;
          const double raw = raw_alpha(s, px, py, dx, dy, g);
          if (raw < kMinSplatAlpha) continue;
          const double alpha = std::min(raw, kMaxSplatAlpha);
          transmittance /= 1.0 - alpha;
          const double weight = alpha * transmittance;

          double* acc = &entry_grads[e * kSlots];
          acc[kThermal] += g_thermal * weight;
          acc[kDepth] += g_depth * weight;
          const double d_alpha =
              transmittance * (g_thermal * (s.thermal - later_thermal) + g_depth * (s.depth_z - later_depth));
          later_thermal = alpha * s.thermal + (1.0 - alpha) * later_thermal;
          later_depth = alpha * s.depth_z + (1.0 - alpha) * later_depth;
          if (raw > kMaxSplatAlpha) continue;

          acc[kOpacity] += d_alpha * g;
          const double d_power = -0.5 * s.opacity * g * d_alpha;
          acc[kMeanU] += d_power * 2.0 * (s.conic(0, 0) * dx + s.conic(0, 1) * dy);
          acc[kMeanV] += d_power * 2.0 * (s.conic(0, 1) * dx + s.conic(1, 1) * dy);
          acc[kConicA] += d_power * dx * dx;
          acc[kConicB] += d_power * 2.0 * dx * dy;
          acc[kConicC] += d_power * dy * dy;
        }
      }
    }
  });

  std::vector<double> splat_grads(tape.splats.size() * kSlots, 0.0);
  for (std::size_t e = 0; e < tape.tile_entries.size(); ++e) {
    double* dst = &splat_grads[tape.tile_entries[e] * kSlots];
    for (int k = 0; k < kSlots; ++k) dst[k] += entry_grads[e * kSlots + k];
  }

  for (std::size_t k = 0; k < tape.splats.size(); ++k) {
    const Splat2D& s = tape.splats[k];
    const std::size_t i = s.source_index;
    const double* gs = &splat_grads[k * kSlots];
    result.visible[i] = true;
    result.params.thermal_features[i] = gs[kThermal];
    const double o = s.opacity;
    result.params.opacity_logits[i] = gs[kOpacity] * o * (1.0 - o);
    result.screen_grad_norm[i] = std::hypot(gs[kMeanU] * 0.5 * w, gs[kMeanV] * 0.5 * h);

    // Conic -> 2D covariance.
    const double a = s.cov2d(0, 0), b = s.cov2d(0, 1), c = s.cov2d(1, 1);
    const double det = a * c - b * b;
    const double inv_det2 = 1.0 / (det * det);
    const double ga = gs[kConicA], gb = gs[kConicB], gc = gs[kConicC];
    const double d_cov_a = (-c * c * ga + b * c * gb - b * b * gc) * inv_det2;
    const double d_cov_b = (2.0 * b * c * ga - (a * c + b * b) * gb + 2.0 * a * b * gc) * inv_det2;
    const double d_cov_c = (-b * b * ga + a * b * gb - a * a * gc) * inv_det2;
    Mat2 g_cov2d;
    g_cov2d << d_cov_a, 0.5 * d_cov_b, 0.5 * d_cov_b, d_cov_c;

    const Vec3 t = cam.to_camera(scene.position(i));
    const Mat23 jac = projection_jacobian(t, cam);
    const Mat3& rot_cam = cam.rotation;
    const Quat q_raw = scene.rotation(i);
    const double q_norm = q_raw.norm();
    const Quat q = q_raw / q_norm;
    const Mat3 rot = quat_to_rotation(q);
    const Vec3 scale = scene.scale(i);
    const Mat3 m = rot * scale.asDiagonal();
    const Mat3 sigma = m * m.transpose();
    const Mat3 v = rot_cam * sigma * rot_cam.transpose();

    const Mat3 g_v = jac.transpose() * g_cov2d * jac;
    const Mat23 g_jac = 2.0 * g_cov2d * jac * v;
    const Mat3 g_sigma = rot_cam.transpose() * g_v * rot_cam;
    const Mat3 g_m = 2.0 * g_sigma * m;

    Vec3 g_log_scale;
    Mat3 g_rot;
    for (int col = 0; col < 3; ++col) {
      g_rot.col(col) = g_m.col(col) * scale[col];
      g_log_scale[col] = g_m.col(col).dot(rot.col(col)) * scale[col];
    }
    const auto d_rot = rotation_partials(q);
    Quat g_q_unit;
    for (int k4 = 0; k4 < 4; ++k4) g_q_unit[k4] = (g_rot.array() * d_rot[k4].array()).sum();
    const Quat g_q = (g_q_unit - q * q.dot(g_q_unit)) / q_norm;

    const double iz = 1.0 / t.z();
    const double iz2 = iz * iz;
    Vec3 g_t = Vec3::Zero();
    g_t.x() += gs[kMeanU] * cam.fx * iz;
    g_t.y() += gs[kMeanV] * cam.fy * iz;
    g_t.z() += -gs[kMeanU] * cam.fx * t.x() * iz2 - gs[kMeanV] * cam.fy * t.y() * iz2;
    g_t.z() += gs[kDepth];
    g_t.x() += g_jac(0, 2) * (-cam.fx * iz2);
    g_t.y() += g_jac(1, 2) * (-cam.fy * iz2);
    g_t.z() += g_jac(0, 0) * (-cam.fx * iz2) + g_jac(0, 2) * (2.0 * cam.fx * t.x() * iz2 * iz) +
               g_jac(1, 1) * (-cam.fy * iz2) + g_jac(1, 2) * (2.0 * cam.fy * t.y() * iz2 * iz);
    const Vec3 g_pos = rot_cam.transpose() * g_t;

    result.params.set_position(i, g_pos);
    result.params.set_log_scale(i, g_log_scale);
    result.params.set_rotation(i, g_q);
  }
  return result;
}

}  // namespace tdg
