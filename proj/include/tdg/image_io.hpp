#pragma once

#include <filesystem>
#include <string>

#include "tdg/image.hpp"

namespace tdg {

/// Luma weights shared by COLMAP point colours and RGB thermal frames.
inline double luma(double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

/// PGM (P5, maxval up to 65535) or PNG (8/16-bit gray, gray+alpha, RGB, RGBA)
/// scaled to [0, 1]. Colour inputs are reduced by luma.
Image read_gray_image(const std::filesystem::path& path);

struct DepthMap {
  Image values;
  /// NaN/Inf pixels that were replaced by 0.
  std::size_t invalid_pixels = 0;
};

/// PFM (single channel) or 16-bit PGM with raw values preserved.
DepthMap read_depth_map(const std::filesystem::path& path);

/// 8-bit PGM, value = round(255 * clamp(v, 0, 1)).
void write_pgm8(const std::filesystem::path& path, const Image& image);
/// 16-bit PGM of raw values rounded and clamped to [0, 65535].
void write_pgm16(const std::filesystem::path& path, const Image& image);
/// Little-endian single-channel PFM, rows stored bottom-up.
void write_pfm(const std::filesystem::path& path, const Image& image);

/// Writes `bytes` to a sibling temporary file and renames it over `path`,
/// so readers never observe a partial file.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);

}  // namespace tdg
