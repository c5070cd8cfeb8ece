#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "tdg/scene.hpp"

namespace tdg {

inline constexpr char kCheckpointMagic[4] = {'T', 'D', 'G', 'S'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Layout: "TDGS", u32 version, u32 count, then positions, log_scales,
/// rotations, opacity_logits, thermal_features as little-endian f32.
std::string encode_scene(const GaussianScene& scene);
GaussianScene decode_scene(const std::string& bytes, const std::string& source = "checkpoint");

/// Written atomically; a failed save leaves no file behind.
void save_scene(const std::filesystem::path& path, const GaussianScene& scene);
GaussianScene load_scene(const std::filesystem::path& path);

}  // namespace tdg
