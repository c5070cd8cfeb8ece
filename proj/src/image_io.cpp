#include "tdg/image_io.hpp"

#include <png.h>

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <memory>
#include <sstream>

#include <fmt/core.h>

namespace tdg {
namespace {

std::string read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, fmt::format("cannot open {}", path.string()));
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Netpbm-style header tokenizer with '#' comments.
class HeaderReader {
 public:
  HeaderReader(const std::string& bytes, std::string source) : bytes_(bytes), source_(std::move(source)) {}

  std::string token() {
    skip_space();
    const std::size_t start = pos_;
    while (pos_ < bytes_.size() && !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) ++pos_;
    if (start == pos_) fail("unexpected end of header");
    return bytes_.substr(start, pos_ - start);
  }

  long integer() {
    const std::string t = token();
    char* end = nullptr;
    const long v = std::strtol(t.c_str(), &end, 10);
    if (end == t.c_str() || *end != '\0') fail("expected an integer, got '" + t + "'");
    return v;
  }

  double real() {
    const std::string t = token();
    char* end = nullptr;
    const double v = std::strtod(t.c_str(), &end);
    if (end == t.c_str() || *end != '\0') fail("expected a number, got '" + t + "'");
    return v;
  }

  /// Consumes the single whitespace byte that ends a header.
  std::size_t end_of_header() {
    if (pos_ >= bytes_.size() || !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
      fail("missing whitespace after header");
    }
    return ++pos_;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw Error(ErrorCode::Parse, fmt::format("{}: {} at byte offset {}", source_, what, pos_));
  }

 private:
  void skip_space() {
    while (pos_ < bytes_.size()) {
      if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  const std::string& bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

struct RawPgm {
  Image samples;  // raw integer sample values
  long maxval = 0;
};

RawPgm parse_pgm(const std::string& bytes, const std::string& source) {
  HeaderReader header(bytes, source);
  if (header.token() != "P5") header.fail("not a binary PGM (P5)");
  const long w = header.integer();
  const long h = header.integer();
  const long maxval = header.integer();
  if (w <= 0 || h <= 0) header.fail("non-positive dimensions");
  if (maxval <= 0 || maxval > 65535) {
    throw Error(ErrorCode::UnsupportedFormat, fmt::format("{}: unsupported PGM maxval {}", source, maxval));
  }
  const std::size_t offset = header.end_of_header();
  const std::size_t bytes_per_sample = maxval < 256 ? 1 : 2;
  const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  if (bytes.size() - offset < n * bytes_per_sample) {
    throw Error(ErrorCode::Parse, fmt::format("{}: truncated pixel data at byte offset {} (need {} bytes, have {})",
                                              source, bytes.size(), n * bytes_per_sample, bytes.size() - offset));
  }
  RawPgm out{Image(static_cast<int>(w), static_cast<int>(h)), maxval};
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + offset);
  for (std::size_t i = 0; i < n; ++i) {
    out.samples[i] = bytes_per_sample == 1 ? p[i] : (p[2 * i] << 8) | p[2 * i + 1];
  }
  return out;
}

Image read_png(const std::filesystem::path& path) {
  const std::string bytes = read_all(path);
  if (bytes.size() < 8 || png_sig_cmp(reinterpret_cast<png_const_bytep>(bytes.data()), 0, 8) != 0) {
    throw Error(ErrorCode::Parse, fmt::format("{}: bad PNG signature at byte offset 0", path.string()));
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  struct Reader {
    const std::string* data;
    std::size_t pos;
  } reader{&bytes, 0};
  std::vector<unsigned char> buffer;
  std::size_t stride = 0;
  int width = 0, height = 0, channels = 0, depth = 0;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::Parse, fmt::format("{}: corrupt PNG data near byte offset {}", path.string(), reader.pos));
  }
  png_set_read_fn(png, &reader, [](png_structp p, png_bytep out, png_size_t len) {
    auto* r = static_cast<Reader*>(png_get_io_ptr(p));
    if (r->pos + len > r->data->size()) png_error(p, "truncated");
    std::memcpy(out, r->data->data() + r->pos, len);
    r->pos += len;
  });
  png_read_info(png, info);
  const int color_type = png_get_color_type(png, info);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
  png_read_update_info(png, info);
  width = static_cast<int>(png_get_image_width(png, info));
  height = static_cast<int>(png_get_image_height(png, info));
  channels = png_get_channels(png, info);
  depth = png_get_bit_depth(png, info);
  stride = png_get_rowbytes(png, info);
  buffer.resize(stride * static_cast<std::size_t>(height));
  std::vector<png_bytep> rows(static_cast<std::size_t>(height));
  for (int y = 0; y < height; ++y) rows[static_cast<std::size_t>(y)] = buffer.data() + stride * static_cast<std::size_t>(y);
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  if (depth != 8 && depth != 16) {
    throw Error(ErrorCode::UnsupportedFormat, fmt::format("{}: unsupported PNG bit depth {}", path.string(), depth));
  }
  const double full = depth == 16 ? 65535.0 : 255.0;
  Image out(width, height);
  for (int y = 0; y < height; ++y) {
    const unsigned char* row = buffer.data() + stride * static_cast<std::size_t>(y);
    for (int x = 0; x < width; ++x) {
      auto sample = [&](int c) -> double {
        const std::size_t idx = static_cast<std::size_t>(x) * channels + c;
        return depth == 16 ? static_cast<double>((row[2 * idx] << 8) | row[2 * idx + 1]) : row[idx];
      };
      // Gray(+alpha) uses the first channel, RGB(A) reduces by luma.
      const double v = channels >= 3 ? luma(sample(0), sample(1), sample(2)) : sample(0);
      out.at(x, y) = v / full;
    }
  }
  return out;
}

bool has_extension(const std::filesystem::path& path, const char* ext) {
  std::string e = path.extension().string();
  for (char& c : e) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return e == ext;
}

Image parse_pfm(const std::string& bytes, const std::string& source) {
  HeaderReader header(bytes, source);
  const std::string magic = header.token();
  if (magic == "PF") {
    throw Error(ErrorCode::UnsupportedFormat, source + ": colour PFM is not supported; expected single-channel 'Pf'");
  }
  if (magic != "Pf") header.fail("not a PFM file");
  const long w = header.integer();
  const long h = header.integer();
  const double scale = header.real();
  if (w <= 0 || h <= 0) header.fail("non-positive dimensions");
  if (scale == 0.0 || !std::isfinite(scale)) header.fail("invalid scale factor");
  const std::size_t offset = header.end_of_header();
  const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  if (bytes.size() - offset < n * 4) {
    throw Error(ErrorCode::Parse, fmt::format("{}: truncated pixel data at byte offset {}", source, bytes.size()));
  }
  const bool little = scale < 0.0;
  Image out(static_cast<int>(w), static_cast<int>(h));
  for (long row = 0; row < h; ++row) {
    for (long x = 0; x < w; ++x) {
      const std::size_t src = offset + 4 * (static_cast<std::size_t>(row) * w + x);
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) {
        const auto byte = static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[src + b]));
        bits |= little ? byte << (8 * b) : byte << (8 * (3 - b));
      }
      // PFM rows run bottom to top.
      out.at(static_cast<int>(x), static_cast<int>(h - 1 - row)) = static_cast<double>(std::bit_cast<float>(bits));
    }
  }
  return out;
}

}  // namespace

Image read_gray_image(const std::filesystem::path& path) {
  if (has_extension(path, ".png")) return read_png(path);
  const RawPgm pgm = parse_pgm(read_all(path), path.string());
  Image out = pgm.samples;
  for (double& v : out.data) v /= static_cast<double>(pgm.maxval);
  return out;
}

DepthMap read_depth_map(const std::filesystem::path& path) {
  const std::string bytes = read_all(path);
  DepthMap out;
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '5') {
    RawPgm pgm = parse_pgm(bytes, path.string());
    if (pgm.maxval < 256) {
      throw Error(ErrorCode::UnsupportedFormat, path.string() + ": depth PGM must be 16-bit");
    }
    out.values = std::move(pgm.samples);
  } else {
    out.values = parse_pfm(bytes, path.string());
  }
  for (double& v : out.values.data) {
    if (!std::isfinite(v)) {
      v = 0.0;
      ++out.invalid_pixels;
    }
  }
  if (out.invalid_pixels > 0) {
    fmt::print(stderr, "warning: {}: replaced {} non-finite depth value(s) with 0\n", path.string(), out.invalid_pixels);
  }
  return out;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, fmt::format("cannot write {}", path.string()));
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw Error(ErrorCode::Io, fmt::format("failed writing {}", path.string()));
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error(ErrorCode::Io, fmt::format("cannot move {} into place", path.string()));
  }
}

void write_pgm8(const std::filesystem::path& path, const Image& image) {
  std::string bytes = fmt::format("P5\n{} {}\n255\n", image.width, image.height);
  for (double v : image.data) {
    bytes.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * std::clamp(v, 0.0, 1.0)))));
  }
  write_file_atomic(path, bytes);
}

void write_pgm16(const std::filesystem::path& path, const Image& image) {
  std::string bytes = fmt::format("P5\n{} {}\n65535\n", image.width, image.height);
  for (double v : image.data) {
    const auto s = static_cast<std::uint16_t>(std::clamp<long>(std::lround(v), 0, 65535));
    bytes.push_back(static_cast<char>(s >> 8));
    bytes.push_back(static_cast<char>(s & 0xFF));
  }
  write_file_atomic(path, bytes);
}

void write_pfm(const std::filesystem::path& path, const Image& image) {
  std::string bytes = fmt::format("Pf\n{} {}\n-1.0\n", image.width, image.height);
  bytes.reserve(bytes.size() + image.size() * 4);
  for (int y = image.height - 1; y >= 0; --y) {
    for (int x = 0; x < image.width; ++x) {
      const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(image.at(x, y)));
      for (int b = 0; b < 4; ++b) bytes.push_back(static_cast<char>((bits >> (8 * b)) & 0xFF));
    }
  }
  write_file_atomic(path, bytes);
}

}  // namespace tdg
