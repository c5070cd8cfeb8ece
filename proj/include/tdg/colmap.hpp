#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tdg/scene.hpp"

namespace tdg {

struct ColmapCamera {
  std::uint32_t id = 0;
  std::string model;  // "PINHOLE" or "SIMPLE_PINHOLE"
  std::uint64_t width = 0;
  std::uint64_t height = 0;
  std::vector<double> params;

  friend bool operator==(const ColmapCamera&, const ColmapCamera&) = default;
};

/// A registered image; the pose maps world to camera coordinates.
struct ColmapImage {
  std::uint32_t id = 0;
  std::array<double, 4> qvec{1.0, 0.0, 0.0, 0.0};  // w, x, y, z
  std::array<double, 3> tvec{0.0, 0.0, 0.0};
  std::uint32_t camera_id = 0;
  std::string name;

  friend bool operator==(const ColmapImage&, const ColmapImage&) = default;
};

struct ColmapPoint {
  std::uint64_t id = 0;
  std::array<double, 3> xyz{0.0, 0.0, 0.0};
  std::array<std::uint8_t, 3> rgb{0, 0, 0};
  double error = 0.0;
  /// (image_id, point2D_idx) pairs.
  std::vector<std::pair<std::uint32_t, std::uint32_t>> track;

  /// (0.299 R + 0.587 G + 0.114 B) / 255.
  double intensity() const;

  friend bool operator==(const ColmapPoint&, const ColmapPoint&) = default;
};

struct ColmapModel {
  std::vector<ColmapCamera> cameras;
  std::vector<ColmapImage> images;
  std::vector<ColmapPoint> points;

  const ColmapCamera& camera(std::uint32_t id) const;
  /// Pinhole camera for image `image`, with intrinsics from its camera entry.
  Camera pinhole(const ColmapImage& image) const;
  std::vector<SeedPoint> seed_points() const;

  friend bool operator==(const ColmapModel&, const ColmapModel&) = default;
};

/// Reads cameras/images/points3D from `dir`, preferring the binary layout
/// when all three .bin files exist.
ColmapModel read_colmap_sparse(const std::filesystem::path& dir);
ColmapModel read_colmap_text(const std::filesystem::path& dir);
ColmapModel read_colmap_binary(const std::filesystem::path& dir);

void write_colmap_text(const std::filesystem::path& dir, const ColmapModel& model);
void write_colmap_binary(const std::filesystem::path& dir, const ColmapModel& model);

}  // namespace tdg
