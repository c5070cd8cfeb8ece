#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tdg/image.hpp"
#include "tdg/scene.hpp"

namespace tdg {

enum class PriorProvenance { None, ExternalEstimator, SyntheticOracle };

struct View {
  std::string name;
  Camera camera;
  Image thermal;
  std::optional<Image> depth_prior;
  PriorProvenance provenance = PriorProvenance::None;
};

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Posed thermal frames, their depth priors, and the initialization points.
struct TrainingBundle {
  std::string scene_name;
  std::vector<View> views;
  std::vector<SeedPoint> initial_points;
  Split split;

  /// Throws InvalidInput on mixed resolutions or an invalid split.
  void validate() const;

  std::vector<Camera> cameras() const;
};

/// Value interpretation of prior files.
enum class PriorSpace { Depth, Inverse };

struct BundleLoadOptions {
  PriorSpace prior_space = PriorSpace::Depth;
  /// Used when the bundle has no split.txt.
  double train_ratio = 0.8;
  std::uint64_t split_seed = 0;
};

/// On-disk layout:
///   sparse/0/{cameras,images,points3D}.{bin,txt}   COLMAP model (bin preferred)
///   images/<name>                                    thermal frames (PGM or PNG)
///   depth/<stem>.pfm                                 optional depth priors
///   split.txt                                        optional "train|test <name>" lines
TrainingBundle load_bundle(const std::filesystem::path& dir, const BundleLoadOptions& options = {});

/// Writes `bundle` in the layout load_bundle reads (COLMAP text model,
/// 8-bit PGM thermal frames, PFM priors, split.txt).
void write_bundle(const std::filesystem::path& dir, const TrainingBundle& bundle);

/// File stem of a view name ("view_003.pgm" -> "view_003").
std::string view_stem(const std::string& name);

}  // namespace tdg

#include "tdg/rasterizer.hpp"

namespace tdg {

/// Writes <view>_thermal.pgm (8-bit), <view>_depth.pfm and <view>_alpha.pgm
/// into `dir`, creating it if needed.
void write_render(const RenderOutput& output, const std::filesystem::path& dir, const std::string& view_name);

}  // namespace tdg
