#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "tdg/bundle.hpp"

namespace tdg {

inline constexpr double kInverseDepthFloor = 1e-6;

/// Read-only summary of the per-view priors held by a bundle.
struct DepthPriorSet {
  std::vector<std::optional<Image>> maps;
  std::vector<PriorProvenance> provenance;

  std::size_t available() const;
  /// Fraction of views with a prior, in [0, 1].
  double coverage() const;
};

DepthPriorSet prior_set(const TrainingBundle& bundle);

/// Loads <stem>.pfm from `dir` for every view; views without a file stay
/// prior-less. With PriorSpace::Inverse each value x becomes 1 / max(x, 1e-6).
/// Throws InvalidInput naming the file on a resolution mismatch.
void attach_priors(TrainingBundle& bundle, const std::filesystem::path& dir, PriorSpace space = PriorSpace::Depth);

/// Expected-depth render of a known scene; an exact prior for synthetic data.
Image oracle_depth(const GaussianScene& scene, const Camera& camera);

/// Names of training views lacking a prior.
std::vector<std::string> uncovered_training_views(const TrainingBundle& bundle);

}  // namespace tdg
