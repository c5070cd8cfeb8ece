#include "tdg/metrics.hpp"

#include <cmath>

#include <fmt/core.h>

#include "tdg/rasterizer.hpp"
#include "tdg/ssim.hpp"

namespace tdg {

double psnr(const Image& a, const Image& b) {
  require_same_shape(a, b, "psnr");
  if (a.empty()) throw Error(ErrorCode::InvalidInput, "psnr: empty image");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  const double mse = sum / static_cast<double>(a.size());
  if (mse == 0.0) return kPsnrSentinel;
  return 10.0 * std::log10(1.0 / mse);
}

EvalReport evaluate(const GaussianScene& scene, const TrainingBundle& bundle,
                    const std::vector<std::size_t>& view_indices) {
  if (view_indices.empty()) throw Error(ErrorCode::InvalidInput, "evaluate: no views to evaluate");
  EvalReport report;
  for (std::size_t v : view_indices) {
    if (v >= bundle.views.size()) throw Error(ErrorCode::InvalidInput, "evaluate: view index out of range");
    const View& view = bundle.views[v];
    const Image rendered = render(scene, view.camera).thermal;
    report.views.push_back({view.name, psnr(rendered, view.thermal), ssim(rendered, view.thermal).value});
  }
  for (const auto& row : report.views) {
    report.mean_psnr += row.psnr;
    report.mean_ssim += row.ssim;
  }
  report.mean_psnr /= static_cast<double>(report.views.size());
  report.mean_ssim /= static_cast<double>(report.views.size());
  return report;
}

EvalReport evaluate(const GaussianScene& scene, const TrainingBundle& bundle) {
  return evaluate(scene, bundle, bundle.split.test);
}

std::string format_metrics_csv(const EvalReport& report) {
  std::string out = "# held-out thermal metrics; LPIPS is not computed\n";
  out += "view,psnr,ssim\n";
  for (const auto& row : report.views) out += fmt::format("{},{:.6f},{:.6f}\n", row.view, row.psnr, row.ssim);
  out += fmt::format("mean,{:.6f},{:.6f}\n", report.mean_psnr, report.mean_ssim);
  return out;
}

}  // namespace tdg
