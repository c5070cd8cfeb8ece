#include "tdg/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <fmt/core.h>

#include "tdg/error.hpp"
#include "tdg/image_io.hpp"

namespace tdg {
namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xFF));
}

std::uint32_t get_u32(const std::string& in, std::size_t offset) {
  std::uint32_t v = 0;
  for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[offset + b])) << (8 * b);
  return v;
}

constexpr std::size_t kHeaderBytes = 12;

}  // namespace

std::string encode_scene(const GaussianScene& scene) {
  scene.validate_shape();
  std::string out(kCheckpointMagic, sizeof kCheckpointMagic);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(scene.count()));
  for (const auto* field : scene.groups()) {
    for (double v : *field) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  return out;
}

GaussianScene decode_scene(const std::string& bytes, const std::string& source) {
  if (bytes.size() < kHeaderBytes) {
    throw Error(ErrorCode::Parse, fmt::format("{}: truncated header at byte offset {}", source, bytes.size()));
  }
  if (std::memcmp(bytes.data(), kCheckpointMagic, sizeof kCheckpointMagic) != 0) {
    throw Error(ErrorCode::IncompatibleCheckpoint, source + ": bad magic (expected TDGS)");
  }
  const std::uint32_t version = get_u32(bytes, 4);
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::IncompatibleCheckpoint,
                fmt::format("{}: checkpoint version {} is not supported (expected {})", source, version,
                            kCheckpointVersion));
  }
  const std::size_t n = get_u32(bytes, 8);
  std::size_t floats = 0;
  for (std::size_t stride : kGroupStrides) floats += stride * n;
  const std::size_t expected = kHeaderBytes + 4 * floats;
  if (bytes.size() < expected) {
    throw Error(ErrorCode::Parse, fmt::format("{}: truncated at byte offset {} (expected {} bytes)", source,
                                              bytes.size(), expected));
  }
  if (bytes.size() > expected) {
    throw Error(ErrorCode::Parse, fmt::format("{}: trailing data at byte offset {}", source, expected));
  }
  GaussianScene scene = GaussianScene::zeros(n);
  std::size_t offset = kHeaderBytes;
  for (auto* field : scene.groups()) {
    for (double& v : *field) {
      v = static_cast<double>(std::bit_cast<float>(get_u32(bytes, offset)));
      offset += 4;
    }
  }
  return scene;
}

void save_scene(const std::filesystem::path& path, const GaussianScene& scene) {
  write_file_atomic(path, encode_scene(scene));
}

GaussianScene load_scene(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, fmt::format("cannot open {}", path.string()));
  const std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return decode_scene(bytes, path.string());
}

}  // namespace tdg
