#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "tdg/bundle.hpp"
#include "tdg/image.hpp"
#include "tdg/scene.hpp"

namespace tdg {

/// Reported for identical images so tables stay finite.
inline constexpr double kPsnrSentinel = 100.0;

/// 10 log10(1 / MSE) for dynamic range 1.
double psnr(const Image& a, const Image& b);

struct ViewMetrics {
  std::string view;
  double psnr = 0.0;
  double ssim = 0.0;
};

struct EvalReport {
  std::vector<ViewMetrics> views;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
};

/// Renders every view in `view_indices` and scores it against its thermal frame.
EvalReport evaluate(const GaussianScene& scene, const TrainingBundle& bundle, const std::vector<std::size_t>& view_indices);

/// Held-out evaluation over the bundle's test split.
EvalReport evaluate(const GaussianScene& scene, const TrainingBundle& bundle);

/// CSV with columns view,psnr,ssim and a trailing "mean" row.
std::string format_metrics_csv(const EvalReport& report);

}  // namespace tdg
