#include "tdg/prior.hpp"

#include <algorithm>
#include <fstream>

#include <fmt/core.h>

#include "tdg/image_io.hpp"
#include "tdg/rasterizer.hpp"

namespace tdg {

std::size_t DepthPriorSet::available() const {
  return static_cast<std::size_t>(std::count_if(maps.begin(), maps.end(), [](const auto& m) { return m.has_value(); }));
}

double DepthPriorSet::coverage() const {
  return maps.empty() ? 0.0 : static_cast<double>(available()) / static_cast<double>(maps.size());
}

DepthPriorSet prior_set(const TrainingBundle& bundle) {
  DepthPriorSet set;
  for (const auto& v : bundle.views) {
    set.maps.push_back(v.depth_prior);
    set.provenance.push_back(v.depth_prior ? v.provenance : PriorProvenance::None);
  }
  return set;
}

void attach_priors(TrainingBundle& bundle, const std::filesystem::path& dir, PriorSpace space) {
  // A marker written by the synthetic generator; anything else is treated as
  // the output of an external estimator.
  PriorProvenance provenance = PriorProvenance::ExternalEstimator;
  if (std::ifstream marker(dir / "PROVENANCE"); marker) {
    std::string tag;
    marker >> tag;
    if (tag == "synthetic-oracle") provenance = PriorProvenance::SyntheticOracle;
  }
  for (View& view : bundle.views) {
    const std::filesystem::path file = dir / (view_stem(view.name) + ".pfm");
    if (!std::filesystem::exists(file)) {
      view.depth_prior.reset();
      view.provenance = PriorProvenance::None;
      continue;
    }
    DepthMap depth = read_depth_map(file);
    if (depth.values.width != view.camera.width || depth.values.height != view.camera.height) {
      throw Error(ErrorCode::InvalidInput,
                  fmt::format("depth prior {} is {}x{} but view {} is {}x{}", file.string(), depth.values.width,
                              depth.values.height, view.name, view.camera.width, view.camera.height));
    }
    if (space == PriorSpace::Inverse) {
      for (double& v : depth.values.data) v = 1.0 / std::max(v, kInverseDepthFloor);
    }
    view.depth_prior = std::move(depth.values);
    view.provenance = provenance;
  }
}

Image oracle_depth(const GaussianScene& scene, const Camera& camera) { return render(scene, camera).depth; }

std::vector<std::string> uncovered_training_views(const TrainingBundle& bundle) {
  std::vector<std::string> out;
  for (std::size_t v : bundle.split.train) {
    if (!bundle.views[v].depth_prior) out.push_back(bundle.views[v].name);
  }
  return out;
}

}  // namespace tdg
