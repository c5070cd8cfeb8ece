#include "tdg/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tdg/ssim.hpp"

namespace tdg {
namespace {

constexpr double kMinDepthRange = 1e-8;

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

struct Normalized {
  Image values;
  std::size_t argmin = 0;
  std::size_t argmax = 0;
  double range = 0.0;
  bool degenerate = true;
};

Normalized normalize_with_extrema(const Image& depth) {
  Normalized n;
  n.values = Image(depth.width, depth.height);
  if (depth.empty()) return n;
  for (std::size_t i = 0; i < depth.size(); ++i) {
    if (!std::isfinite(depth[i])) throw Error(ErrorCode::InvalidInput, "minmax_normalize: non-finite value");
    if (depth[i] < depth[n.argmin]) n.argmin = i;
    if (depth[i] > depth[n.argmax]) n.argmax = i;
  }
  const double lo = depth[n.argmin];
  n.range = depth[n.argmax] - lo;
  n.degenerate = n.range < kMinDepthRange;
  if (!n.degenerate) {
    for (std::size_t i = 0; i < depth.size(); ++i) n.values[i] = (depth[i] - lo) / n.range;
  }
  return n;
}

}  // namespace

void LossWeights::validate() const {
  if (!(lambda_ssim >= 0.0 && lambda_ssim <= 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "lambda_ssim must lie in [0, 1]");
  }
  if (!(lambda_smooth >= 0.0) || !(lambda_depth >= 0.0)) {
    throw Error(ErrorCode::InvalidConfig, "lambda_smooth and lambda_depth must be non-negative");
  }
  if (t_start < 0 || t_end <= t_start) {
    throw Error(ErrorCode::InvalidConfig, "decay window needs t_end > t_start >= 0 (got t_start=" +
                                              std::to_string(t_start) + ", t_end=" + std::to_string(t_end) + ")");
  }
}

LossWithGrad smoothness_loss(const Image& image) {
  const int w = image.width, h = image.height;
  if (w < 1 || h < 1) throw Error(ErrorCode::InvalidInput, "smoothness_loss: empty image");
  const double norm = 1.0 / (4.0 * static_cast<double>(image.size()));
  LossWithGrad out;
  out.grad = Image(w, h);
  double sum = 0.0;
  // Each unordered neighbour pair appears twice in the 4-neighbour sum.
  auto pair = [&](int x0, int y0, int x1, int y1) {
    const double d = image.at(x1, y1) - image.at(x0, y0);
    sum += 2.0 * std::abs(d);
    const double g = 2.0 * sign(d) * norm;
    out.grad.at(x1, y1) += g;
    out.grad.at(x0, y0) -= g;
  };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (x + 1 < w) pair(x, y, x + 1, y);
      if (y + 1 < h) pair(x, y, x, y + 1);
    }
  }
  out.value = sum * norm;
  return out;
}

Image minmax_normalize(const Image& depth) { return normalize_with_extrema(depth).values; }

DepthLoss depth_loss(const Image& rendered, const Image& prior) {
  require_same_shape(rendered, prior, "depth_loss");
  const Normalized r = normalize_with_extrema(rendered);
  const Normalized d = normalize_with_extrema(prior);
  const std::size_t n = rendered.size();
  const double inv_n = 1.0 / static_cast<double>(n);

  DepthLoss out;
  Image g_norm(rendered.width, rendered.height);
  double l1 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double diff = r.values[i] - d.values[i];
    l1 += std::abs(diff);
    g_norm[i] = sign(diff) * inv_n;
  }
  const SsimResult s = ssim(r.values, d.values, true);
  out.l1 = l1 * inv_n;
  out.ssim = s.value;
  out.value = out.l1 + (1.0 - s.value);
  for (std::size_t i = 0; i < n; ++i) g_norm[i] -= s.grad[i];

  out.grad = Image(rendered.width, rendered.height);
  if (r.degenerate) return out;
  // n_i = (x_i - x_min) / (x_max - x_min)
  double to_min = 0.0, to_max = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out.grad[i] = g_norm[i] / r.range;
    to_min += g_norm[i] * (r.values[i] - 1.0);
    to_max -= g_norm[i] * r.values[i];
  }
  out.grad[r.argmin] += to_min / r.range;
  out.grad[r.argmax] += to_max / r.range;
  return out;
}

ThermalLoss thermal_loss(const Image& rendered, const Image& gt, const LossWeights& weights) {
  require_same_shape(rendered, gt, "thermal_loss");
  const std::size_t n = rendered.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  ThermalLoss out;
  out.grad = Image(rendered.width, rendered.height);
  double l1 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double diff = rendered[i] - gt[i];
    l1 += std::abs(diff);
    out.grad[i] = (1.0 - weights.lambda_ssim) * sign(diff) * inv_n;
  }
  out.l1 = l1 * inv_n;
  // SSIM is symmetric in value; the gradient is taken on the rendered side.
  const SsimResult s = ssim(rendered, gt, weights.lambda_ssim != 0.0);
  out.ssim = s.value;
  out.value = (1.0 - weights.lambda_ssim) * out.l1 + weights.lambda_ssim * (1.0 - s.value);
  if (weights.lambda_ssim != 0.0) {
    for (std::size_t i = 0; i < n; ++i) out.grad[i] -= weights.lambda_ssim * s.grad[i];
  }
  if (weights.lambda_smooth != 0.0) {
    const LossWithGrad smooth = smoothness_loss(rendered);
    out.smooth = smooth.value;
    out.value += weights.lambda_smooth * smooth.value;
    for (std::size_t i = 0; i < n; ++i) out.grad[i] += weights.lambda_smooth * smooth.grad[i];
  } else {
    out.smooth = smoothness_loss(rendered).value;
  }
  return out;
}

double decay_weight(int t, int t_start, int t_end) {
  if (t_end <= t_start) {
    throw Error(ErrorCode::InvalidConfig, "decay_weight: t_end must exceed t_start");
  }
  const double w = 1.0 - static_cast<double>(t - t_start) / static_cast<double>(t_end - t_start);
  return std::clamp(w, 0.0, 1.0);
}

namespace {

TotalLoss assemble(const ThermalLoss& thermal, const DepthLoss* depth, const Image& rendered_depth,
                   const LossWeights& weights, int t) {
  TotalLoss out;
  LossReport& r = out.report;
  r.decay_weight = decay_weight(t, weights.t_start, weights.t_end);
  r.thermal_term = thermal.value;
  r.l1_thermal = thermal.l1;
  r.ssim_thermal = thermal.ssim;
  r.smooth_thermal = thermal.smooth;
  if (depth != nullptr) {
    r.depth_term = depth->value;
    r.l1_depth = depth->l1;
    r.ssim_depth = depth->ssim;
  }
  const double depth_scale = r.decay_weight * weights.lambda_depth;
  r.total = r.thermal_term + depth_scale * r.depth_term;
  out.grad_thermal = thermal.grad;
  out.grad_depth = Image(rendered_depth.width, rendered_depth.height);
  if (depth != nullptr && depth_scale != 0.0) {
    for (std::size_t i = 0; i < out.grad_depth.size(); ++i) out.grad_depth[i] = depth_scale * depth->grad[i];
  }
  return out;
}

}  // namespace

TotalLoss total_loss(const Image& rendered_thermal, const Image& gt_thermal, const Image& rendered_depth,
                     const Image& prior_depth, const LossWeights& weights, int t) {
  require_same_shape(rendered_thermal, rendered_depth, "total_loss");
  const ThermalLoss thermal = thermal_loss(rendered_thermal, gt_thermal, weights);
  const DepthLoss depth = depth_loss(rendered_depth, prior_depth);
  return assemble(thermal, &depth, rendered_depth, weights, t);
}

TotalLoss thermal_only_loss(const Image& rendered_thermal, const Image& gt_thermal, const Image& rendered_depth,
                            const LossWeights& weights, int t) {
  require_same_shape(rendered_thermal, rendered_depth, "thermal_only_loss");
  return assemble(thermal_loss(rendered_thermal, gt_thermal, weights), nullptr, rendered_depth, weights, t);
}

}  // namespace tdg
