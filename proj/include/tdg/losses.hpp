#pragma once

#include "tdg/image.hpp"

namespace tdg {

struct LossWeights {
  double lambda_ssim = 0.2;
  double lambda_smooth = 0.001;
  double lambda_depth = 0.5;
  int t_start = 1;
  int t_end = 15000;

  /// Throws InvalidConfig when a weight or the decay window is out of range.
  void validate() const;
};

struct LossReport {
  double total = 0.0;
  double thermal_term = 0.0;
  double depth_term = 0.0;
  double decay_weight = 0.0;
  double l1_thermal = 0.0;
  double ssim_thermal = 0.0;
  double smooth_thermal = 0.0;
  double l1_depth = 0.0;
  double ssim_depth = 0.0;
};

struct LossWithGrad {
  double value = 0.0;
  Image grad;
};

/// Mean absolute 4-neighbour difference, normalized by 4 * pixel count.
/// Out-of-bounds neighbours contribute nothing.
LossWithGrad smoothness_loss(const Image& image);

/// (d - min) / (max - min); all zeros when the range is below 1e-8.
Image minmax_normalize(const Image& depth);

struct DepthLoss {
  double value = 0.0;
  double l1 = 0.0;
  double ssim = 0.0;
  /// d value / d rendered.
  Image grad;
};

/// L1 + (1 - SSIM) between min-max normalized rendered and prior depth.
DepthLoss depth_loss(const Image& rendered, const Image& prior);

struct ThermalLoss {
  double value = 0.0;
  double l1 = 0.0;
  double ssim = 0.0;
  double smooth = 0.0;
  /// d value / d rendered.
  Image grad;
};

ThermalLoss thermal_loss(const Image& rendered, const Image& gt, const LossWeights& weights);

/// Linear fade of the depth term: 1 at t_start, 0 from t_end on.
double decay_weight(int t, int t_start, int t_end);

struct TotalLoss {
  LossReport report;
  Image grad_thermal;
  Image grad_depth;
};

TotalLoss total_loss(const Image& rendered_thermal, const Image& gt_thermal, const Image& rendered_depth,
                     const Image& prior_depth, const LossWeights& weights, int t);

/// Thermal-only variant for runs without depth supervision.
TotalLoss thermal_only_loss(const Image& rendered_thermal, const Image& gt_thermal, const Image& rendered_depth,
                            const LossWeights& weights, int t);

}  // namespace tdg
