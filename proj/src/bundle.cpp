#include "tdg/bundle.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <Eigen/Geometry>
#include <fmt/core.h>

#include "tdg/colmap.hpp"
#include "tdg/image_io.hpp"
#include "tdg/optim.hpp"
#include "tdg/prior.hpp"

namespace tdg {

namespace fs = std::filesystem;

void TrainingBundle::validate() const {
  if (views.empty()) throw Error(ErrorCode::InvalidInput, "bundle has no views");
  const int w = views.front().camera.width;
  const int h = views.front().camera.height;
  for (const auto& v : views) {
    if (v.camera.width != w || v.camera.height != h) {
      throw Error(ErrorCode::InvalidInput, fmt::format("view {} is {}x{}, expected the shared resolution {}x{}",
                                                       v.name, v.camera.width, v.camera.height, w, h));
    }
    if (v.thermal.width != w || v.thermal.height != h) {
      throw Error(ErrorCode::InvalidInput, fmt::format("thermal frame of view {} does not match its camera", v.name));
    }
    if (v.depth_prior && !v.depth_prior->same_shape(v.thermal)) {
      throw Error(ErrorCode::InvalidInput, fmt::format("depth prior of view {} does not match its camera", v.name));
    }
  }
  std::set<std::size_t> seen;
  for (const auto* list : {&split.train, &split.test}) {
    for (std::size_t i : *list) {
      if (i >= views.size()) throw Error(ErrorCode::InvalidInput, fmt::format("split index {} out of range", i));
      if (!seen.insert(i).second) throw Error(ErrorCode::InvalidInput, fmt::format("view {} appears twice in split", i));
    }
  }
}

std::vector<Camera> TrainingBundle::cameras() const {
  std::vector<Camera> out;
  out.reserve(views.size());
  for (const auto& v : views) out.push_back(v.camera);
  return out;
}

std::string view_stem(const std::string& name) { return fs::path(name).stem().string(); }

namespace {

fs::path sparse_dir(const fs::path& dir) {
  for (const fs::path& candidate : {dir / "sparse" / "0", dir / "sparse"}) {
    if (fs::exists(candidate / "cameras.bin") || fs::exists(candidate / "cameras.txt")) return candidate;
  }
  throw Error(ErrorCode::Io, fmt::format("{}: no COLMAP model under sparse/0 or sparse", dir.string()));
}

Split read_split(const fs::path& file, const std::vector<View>& views) {
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < views.size(); ++i) index[views[i].name] = i;
  std::ifstream in(file);
  Split split;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ss(line);
    std::string kind, name;
    if (!(ss >> kind) || kind[0] == '#') continue;
    if (!(ss >> name) || (kind != "train" && kind != "test")) {
      throw Error(ErrorCode::Parse, fmt::format("{}: malformed entry on line {}", file.string(), line_no));
    }
    const auto it = index.find(name);
    if (it == index.end()) {
      throw Error(ErrorCode::InvalidInput, fmt::format("{}: unknown view {} on line {}", file.string(), name, line_no));
    }
    (kind == "train" ? split.train : split.test).push_back(it->second);
  }
  return split;
}

}  // namespace

TrainingBundle load_bundle(const fs::path& dir, const BundleLoadOptions& options) {
  const ColmapModel model = read_colmap_sparse(sparse_dir(dir));
  TrainingBundle bundle;
  bundle.scene_name = fs::absolute(dir).lexically_normal().filename().string();
  if (bundle.scene_name.empty()) bundle.scene_name = fs::absolute(dir).parent_path().filename().string();

  std::vector<ColmapImage> images = model.images;
  std::sort(images.begin(), images.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
  for (const auto& im : images) {
    View view;
    view.name = im.name;
    view.camera = model.pinhole(im);
    view.thermal = read_gray_image(dir / "images" / im.name);
    if (view.thermal.width != view.camera.width || view.thermal.height != view.camera.height) {
      throw Error(ErrorCode::InvalidInput, fmt::format("image {} is {}x{} but its camera is {}x{}", im.name,
                                                       view.thermal.width, view.thermal.height, view.camera.width,
                                                       view.camera.height));
    }
    bundle.views.push_back(std::move(view));
  }
  bundle.initial_points = model.seed_points();
  if (fs::exists(dir / "depth")) attach_priors(bundle, dir / "depth", options.prior_space);
  bundle.split = fs::exists(dir / "split.txt")
                     ? read_split(dir / "split.txt", bundle.views)
                     : split_train_test(bundle.views.size(), options.train_ratio, options.split_seed);
  bundle.validate();
  return bundle;
}

void write_bundle(const fs::path& dir, const TrainingBundle& bundle) {
  bundle.validate();
  fs::create_directories(dir / "images");
  ColmapModel model;
  const Camera& first = bundle.views.front().camera;
  model.cameras.push_back({1, "PINHOLE", static_cast<std::uint64_t>(first.width),
                           static_cast<std::uint64_t>(first.height), {first.fx, first.fy, first.cx, first.cy}});
  for (std::size_t i = 0; i < bundle.views.size(); ++i) {
    const View& v = bundle.views[i];
    if (v.camera.fx != first.fx || v.camera.fy != first.fy || v.camera.cx != first.cx || v.camera.cy != first.cy) {
      throw Error(ErrorCode::InvalidInput, "write_bundle: views must share intrinsics");
    }
    const Eigen::Quaterniond q(v.camera.rotation);
    model.images.push_back({static_cast<std::uint32_t>(i + 1),
                            {q.w(), q.x(), q.y(), q.z()},
                            {v.camera.translation.x(), v.camera.translation.y(), v.camera.translation.z()},
                            1,
                            v.name});
    write_pgm8(dir / "images" / v.name, v.thermal);
  }
  for (std::size_t i = 0; i < bundle.initial_points.size(); ++i) {
    const SeedPoint& p = bundle.initial_points[i];
    const auto g = static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(p.intensity, 0.0, 1.0)));
    model.points.push_back({i + 1, {p.position.x(), p.position.y(), p.position.z()}, {g, g, g}, 0.0, {}});
  }
  write_colmap_text(dir / "sparse" / "0", model);

  const bool any_prior =
      std::any_of(bundle.views.begin(), bundle.views.end(), [](const View& v) { return v.depth_prior.has_value(); });
  if (any_prior) {
    fs::create_directories(dir / "depth");
    bool synthetic = true;
    for (const View& v : bundle.views) {
      if (!v.depth_prior) continue;
      write_pfm(dir / "depth" / (view_stem(v.name) + ".pfm"), *v.depth_prior);
      synthetic = synthetic && v.provenance == PriorProvenance::SyntheticOracle;
    }
    if (synthetic) write_file_atomic(dir / "depth" / "PROVENANCE", "synthetic-oracle\n");
  }

  std::string split;
  for (std::size_t i : bundle.split.train) split += "train " + bundle.views[i].name + "\n";
  for (std::size_t i : bundle.split.test) split += "test " + bundle.views[i].name + "\n";
  write_file_atomic(dir / "split.txt", split);
}

void write_render(const RenderOutput& output, const fs::path& dir, const std::string& view_name) {
  fs::create_directories(dir);
  const std::string stem = view_stem(view_name);
  write_pgm8(dir / (stem + "_thermal.pgm"), output.thermal);
  write_pfm(dir / (stem + "_depth.pfm"), output.depth);
  write_pgm8(dir / (stem + "_alpha.pgm"), output.alpha_acc);
}

}  // namespace tdg
