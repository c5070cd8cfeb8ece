#include "tdg/colmap.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include <Eigen/Geometry>
#include <fmt/core.h>

#include "tdg/error.hpp"
#include "tdg/image_io.hpp"

namespace tdg {
namespace {

namespace fs = std::filesystem;

// COLMAP camera model ids and parameter counts, in enum order.
struct ModelInfo {
  const char* name;
  int id;
  std::size_t num_params;
};
constexpr ModelInfo kModels[] = {
    {"SIMPLE_PINHOLE", 0, 3}, {"PINHOLE", 1, 4},       {"SIMPLE_RADIAL", 2, 4},
    {"RADIAL", 3, 5},         {"OPENCV", 4, 8},        {"OPENCV_FISHEYE", 5, 8},
    {"FULL_OPENCV", 6, 12},   {"FOV", 7, 5},           {"SIMPLE_RADIAL_FISHEYE", 8, 4},
    {"RADIAL_FISHEYE", 9, 5}, {"THIN_PRISM_FISHEYE", 10, 12},
};

const ModelInfo* model_by_name(const std::string& name) {
  for (const auto& m : kModels) {
    if (name == m.name) return &m;
  }
  return nullptr;
}

const ModelInfo* model_by_id(int id) {
  for (const auto& m : kModels) {
    if (id == m.id) return &m;
  }
  return nullptr;
}

void require_supported(const std::string& model, const std::string& source) {
  if (model != "PINHOLE" && model != "SIMPLE_PINHOLE") {
    throw Error(ErrorCode::UnsupportedModel,
                fmt::format("{}: unsupported camera model {} (only PINHOLE and SIMPLE_PINHOLE)", source, model));
  }
}

std::string read_all(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, fmt::format("cannot open {}", path.string()));
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class BinaryReader {
 public:
  BinaryReader(std::string bytes, std::string source) : bytes_(std::move(bytes)), source_(std::move(source)) {}

  template <typename T>
  T read() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) {
      auto* p = reinterpret_cast<unsigned char*>(&v);
      std::reverse(p, p + sizeof(T));
    }
    pos_ += sizeof(T);
    return v;
  }

  std::string read_cstring() {
    const std::size_t end = bytes_.find('\0', pos_);
    if (end == std::string::npos) fail("unterminated string");
    std::string s = bytes_.substr(pos_, end - pos_);
    pos_ = end + 1;
    return s;
  }

  std::size_t offset() const { return pos_; }

  [[noreturn]] void fail(const std::string& what) const {
    throw Error(ErrorCode::Parse, fmt::format("{}: {} at byte offset {}", source_, what, pos_));
  }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) fail(fmt::format("truncated file (need {} more bytes)", n));
  }

  std::string bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

class BinaryWriter {
 public:
  template <typename T>
  void write(T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) std::reverse(buf, buf + sizeof(T));
    bytes_.append(buf, sizeof(T));
  }
  void write_cstring(const std::string& s) {
    bytes_ += s;
    bytes_.push_back('\0');
  }
  const std::string& bytes() const { return bytes_; }

 private:
  std::string bytes_;
};

// Line-oriented reader for the text layout; tracks the line number for errors.
class TextLines {
 public:
  TextLines(const fs::path& path) : in_(read_all(path)), source_(path.string()) {}

  /// Next non-empty, non-comment line.
  bool next_record(std::string& line) {
    while (next_raw(line)) {
      if (!line.empty() && line[0] != '#') return true;
    }
    return false;
  }

  bool next_raw(std::string& line) {
    if (!std::getline(in_, line)) return false;
    ++line_no_;
    const auto b = line.find_first_not_of(" \t\r");
    const auto e = line.find_last_not_of(" \t\r");
    line = b == std::string::npos ? std::string() : line.substr(b, e - b + 1);
    return true;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw Error(ErrorCode::Parse, fmt::format("{}: {} on line {}", source_, what, line_no_));
  }

  const std::string& source() const { return source_; }

 private:
  std::istringstream in_;
  std::string source_;
  int line_no_ = 0;
};

template <typename T>
T field(std::istringstream& ss, const TextLines& lines, const char* what) {
  T v;
  if (!(ss >> v)) lines.fail(fmt::format("missing or malformed {}", what));
  return v;
}

}  // namespace

double ColmapPoint::intensity() const { return luma(rgb[0], rgb[1], rgb[2]) / 255.0; }

const ColmapCamera& ColmapModel::camera(std::uint32_t id) const {
  for (const auto& c : cameras) {
    if (c.id == id) return c;
  }
  throw Error(ErrorCode::InvalidInput, fmt::format("COLMAP model has no camera with id {}", id));
}

Camera ColmapModel::pinhole(const ColmapImage& image) const {
  const ColmapCamera& c = camera(image.camera_id);
  Camera cam;
  cam.width = static_cast<int>(c.width);
  cam.height = static_cast<int>(c.height);
  if (c.model == "SIMPLE_PINHOLE") {
    cam.fx = cam.fy = c.params.at(0);
    cam.cx = c.params.at(1);
    cam.cy = c.params.at(2);
  } else if (c.model == "PINHOLE") {
    cam.fx = c.params.at(0);
    cam.fy = c.params.at(1);
    cam.cx = c.params.at(2);
    cam.cy = c.params.at(3);
  } else {
    require_supported(c.model, "camera " + std::to_string(c.id));
  }
  const Eigen::Quaterniond q(image.qvec[0], image.qvec[1], image.qvec[2], image.qvec[3]);
  cam.rotation = q.normalized().toRotationMatrix();
  cam.translation = Vec3(image.tvec[0], image.tvec[1], image.tvec[2]);
  return cam;
}

std::vector<SeedPoint> ColmapModel::seed_points() const {
  std::vector<SeedPoint> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back({Vec3(p.xyz[0], p.xyz[1], p.xyz[2]), p.intensity()});
  return out;
}

ColmapModel read_colmap_text(const fs::path& dir) {
  ColmapModel model;
  std::string line;
  {
    TextLines lines(dir / "cameras.txt");
    while (lines.next_record(line)) {
      std::istringstream ss(line);
      ColmapCamera c;
      c.id = field<std::uint32_t>(ss, lines, "CAMERA_ID");
      c.model = field<std::string>(ss, lines, "MODEL");
      require_supported(c.model, lines.source());
      c.width = field<std::uint64_t>(ss, lines, "WIDTH");
      c.height = field<std::uint64_t>(ss, lines, "HEIGHT");
      double p;
      while (ss >> p) c.params.push_back(p);
      if (c.params.size() != model_by_name(c.model)->num_params) lines.fail("wrong parameter count for " + c.model);
      model.cameras.push_back(std::move(c));
    }
  }
  {
    TextLines lines(dir / "images.txt");
    while (lines.next_record(line)) {
      std::istringstream ss(line);
      ColmapImage im;
      im.id = field<std::uint32_t>(ss, lines, "IMAGE_ID");
      for (double& q : im.qvec) q = field<double>(ss, lines, "quaternion");
      for (double& t : im.tvec) t = field<double>(ss, lines, "translation");
      im.camera_id = field<std::uint32_t>(ss, lines, "CAMERA_ID");
      im.name = field<std::string>(ss, lines, "NAME");
      model.images.push_back(std::move(im));
      // Second line of each record lists 2D observations; not needed here.
      lines.next_raw(line);
    }
  }
  {
    TextLines lines(dir / "points3D.txt");
    while (lines.next_record(line)) {
      std::istringstream ss(line);
      ColmapPoint p;
      p.id = field<std::uint64_t>(ss, lines, "POINT3D_ID");
      for (double& v : p.xyz) v = field<double>(ss, lines, "coordinate");
      for (auto& c : p.rgb) {
        const int v = field<int>(ss, lines, "colour");
        if (v < 0 || v > 255) lines.fail("colour component out of range");
        c = static_cast<std::uint8_t>(v);
      }
      p.error = field<double>(ss, lines, "ERROR");
      std::uint32_t image_id, idx;
      while (ss >> image_id) {
        idx = field<std::uint32_t>(ss, lines, "POINT2D_IDX");
        p.track.emplace_back(image_id, idx);
      }
      model.points.push_back(std::move(p));
    }
  }
  return model;
}

ColmapModel read_colmap_binary(const fs::path& dir) {
  ColmapModel model;
  {
    BinaryReader r(read_all(dir / "cameras.bin"), (dir / "cameras.bin").string());
    const auto n = r.read<std::uint64_t>();
    for (std::uint64_t i = 0; i < n; ++i) {
      ColmapCamera c;
      c.id = r.read<std::uint32_t>();
      const int model_id = r.read<std::int32_t>();
      const ModelInfo* info = model_by_id(model_id);
      if (info == nullptr) r.fail(fmt::format("unknown camera model id {}", model_id));
      c.model = info->name;
      require_supported(c.model, (dir / "cameras.bin").string());
      c.width = r.read<std::uint64_t>();
      c.height = r.read<std::uint64_t>();
      for (std::size_t k = 0; k < info->num_params; ++k) c.params.push_back(r.read<double>());
      model.cameras.push_back(std::move(c));
    }
  }
  {
    BinaryReader r(read_all(dir / "images.bin"), (dir / "images.bin").string());
    const auto n = r.read<std::uint64_t>();
    for (std::uint64_t i = 0; i < n; ++i) {
      ColmapImage im;
      im.id = r.read<std::uint32_t>();
      for (double& q : im.qvec) q = r.read<double>();
      for (double& t : im.tvec) t = r.read<double>();
      im.camera_id = r.read<std::uint32_t>();
      im.name = r.read_cstring();
      const auto n2d = r.read<std::uint64_t>();
      for (std::uint64_t k = 0; k < n2d; ++k) {
        r.read<double>();
        r.read<double>();
        r.read<std::int64_t>();
      }
      model.images.push_back(std::move(im));
    }
  }
  {
    BinaryReader r(read_all(dir / "points3D.bin"), (dir / "points3D.bin").string());
    const auto n = r.read<std::uint64_t>();
    for (std::uint64_t i = 0; i < n; ++i) {
      ColmapPoint p;
      p.id = r.read<std::uint64_t>();
      for (double& v : p.xyz) v = r.read<double>();
      for (auto& c : p.rgb) c = r.read<std::uint8_t>();
      p.error = r.read<double>();
      const auto track_len = r.read<std::uint64_t>();
      for (std::uint64_t k = 0; k < track_len; ++k) {
        const auto image_id = r.read<std::uint32_t>();
        const auto idx = r.read<std::uint32_t>();
        p.track.emplace_back(image_id, idx);
      }
      model.points.push_back(std::move(p));
    }
  }
  return model;
}

ColmapModel read_colmap_sparse(const fs::path& dir) {
  const bool binary = fs::exists(dir / "cameras.bin") && fs::exists(dir / "images.bin") &&
                      fs::exists(dir / "points3D.bin");
  return binary ? read_colmap_binary(dir) : read_colmap_text(dir);
}

void write_colmap_text(const fs::path& dir, const ColmapModel& model) {
  fs::create_directories(dir);
  std::string cams = "# Camera list with one line of data per camera:\n#   CAMERA_ID, MODEL, WIDTH, HEIGHT, PARAMS[]\n";
  cams += fmt::format("# Number of cameras: {}\n", model.cameras.size());
  for (const auto& c : model.cameras) {
    cams += fmt::format("{} {} {} {}", c.id, c.model, c.width, c.height);
    for (double p : c.params) cams += fmt::format(" {}", p);
    cams += '\n';
  }
  write_file_atomic(dir / "cameras.txt", cams);

  std::string imgs =
      "# Image list with two lines of data per image:\n"
      "#   IMAGE_ID, QW, QX, QY, QZ, TX, TY, TZ, CAMERA_ID, NAME\n"
      "#   POINTS2D[] as (X, Y, POINT3D_ID)\n";
  imgs += fmt::format("# Number of images: {}\n", model.images.size());
  for (const auto& im : model.images) {
    imgs += fmt::format("{} {} {} {} {} {} {} {} {} {}\n\n", im.id, im.qvec[0], im.qvec[1], im.qvec[2], im.qvec[3],
                        im.tvec[0], im.tvec[1], im.tvec[2], im.camera_id, im.name);
  }
  write_file_atomic(dir / "images.txt", imgs);

  std::string pts =
      "# 3D point list with one line of data per point:\n"
      "#   POINT3D_ID, X, Y, Z, R, G, B, ERROR, TRACK[] as (IMAGE_ID, POINT2D_IDX)\n";
  pts += fmt::format("# Number of points: {}\n", model.points.size());
  for (const auto& p : model.points) {
    pts += fmt::format("{} {} {} {} {} {} {} {}", p.id, p.xyz[0], p.xyz[1], p.xyz[2], p.rgb[0], p.rgb[1], p.rgb[2],
                       p.error);
    for (const auto& [image_id, idx] : p.track) pts += fmt::format(" {} {}", image_id, idx);
    pts += '\n';
  }
  write_file_atomic(dir / "points3D.txt", pts);
}

void write_colmap_binary(const fs::path& dir, const ColmapModel& model) {
  fs::create_directories(dir);
  {
    BinaryWriter w;
    w.write<std::uint64_t>(model.cameras.size());
    for (const auto& c : model.cameras) {
      const ModelInfo* info = model_by_name(c.model);
      if (info == nullptr) throw Error(ErrorCode::UnsupportedModel, "unknown camera model " + c.model);
      w.write<std::uint32_t>(c.id);
      w.write<std::int32_t>(info->id);
      w.write<std::uint64_t>(c.width);
      w.write<std::uint64_t>(c.height);
      for (double p : c.params) w.write<double>(p);
    }
    write_file_atomic(dir / "cameras.bin", w.bytes());
  }
  {
    BinaryWriter w;
    w.write<std::uint64_t>(model.images.size());
    for (const auto& im : model.images) {
      w.write<std::uint32_t>(im.id);
      for (double q : im.qvec) w.write<double>(q);
      for (double t : im.tvec) w.write<double>(t);
      w.write<std::uint32_t>(im.camera_id);
      w.write_cstring(im.name);
      w.write<std::uint64_t>(0);
    }
    write_file_atomic(dir / "images.bin", w.bytes());
  }
  {
    BinaryWriter w;
    w.write<std::uint64_t>(model.points.size());
    for (const auto& p : model.points) {
      w.write<std::uint64_t>(p.id);
      for (double v : p.xyz) w.write<double>(v);
      for (auto c : p.rgb) w.write<std::uint8_t>(c);
      w.write<double>(p.error);
      w.write<std::uint64_t>(p.track.size());
      for (const auto& [image_id, idx] : p.track) {
        w.write<std::uint32_t>(image_id);
        w.write<std::uint32_t>(idx);
      }
    }
    write_file_atomic(dir / "points3D.bin", w.bytes());
  }
}

}  // namespace tdg
