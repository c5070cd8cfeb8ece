#include <doctest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "test_support.hpp"
#include "tdg/bundle.hpp"
#include "tdg/checkpoint.hpp"
#include "tdg/colmap.hpp"
#include "tdg/error.hpp"
#include "tdg/image_io.hpp"
#include "tdg/prior.hpp"

using namespace tdg;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = TDG_FIXTURE_DIR;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  out << bytes;
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return ErrorCode::InvalidInput;
}

std::string message_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("colmap text fixture parses to the hand-written values") {
  const ColmapModel m = read_colmap_text(kFixtures / "colmap_text");
  REQUIRE(m.cameras.size() == 2);
  CHECK(m.cameras[0].model == "PINHOLE");
  CHECK(m.cameras[0].params == std::vector<double>{100, 100, 50, 50});
  CHECK(m.cameras[1].model == "SIMPLE_PINHOLE");
  CHECK(m.cameras[1].width == 64);
  REQUIRE(m.images.size() == 2);
  CHECK(m.images[0].name == "frame_a.pgm");
  CHECK(m.images[1].qvec[0] == std::sqrt(0.5));
  CHECK(m.images[1].tvec[2] == 3.5);
  REQUIRE(m.points.size() == 3);
  CHECK(m.points[0].xyz == std::array<double, 3>{1, 2, 3});
  CHECK(m.points[0].intensity() == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(m.points[1].intensity() == doctest::Approx((0.299 * 10 + 0.587 * 200 + 0.114 * 30) / 255.0));
  CHECK(m.points[1].track.size() == 2);
  CHECK(m.points[2].track.empty());

  const Camera a = m.pinhole(m.images[0]);
  CHECK(a.fx == 100);
  CHECK(a.cx == 50);
  CHECK(a.rotation == Mat3::Identity());
  const Camera b = m.pinhole(m.images[1]);
  CHECK(b.fx == 52.5);
  CHECK(b.fy == 52.5);
  CHECK(b.cy == 24.0);
  CHECK(b.width == 64);
  CHECK(b.height == 48);
}

TEST_CASE("colmap binary and text parses agree exactly") {
  const ColmapModel text = read_colmap_text(kFixtures / "colmap_text");
  const ColmapModel bin = read_colmap_binary(kFixtures / "colmap_bin");
  CHECK(text == bin);
  CHECK(read_colmap_sparse(kFixtures / "colmap_bin") == text);
}

TEST_CASE("colmap writers round-trip") {
  const ColmapModel m = read_colmap_text(kFixtures / "colmap_text");
  const fs::path dir = tdg::testing::temp_dir("colmap_rt");
  write_colmap_text(dir / "t", m);
  write_colmap_binary(dir / "b", m);
  CHECK(read_colmap_text(dir / "t") == m);
  CHECK(read_colmap_binary(dir / "b") == m);
  CHECK(slurp(dir / "b" / "cameras.bin") == slurp(kFixtures / "colmap_bin" / "cameras.bin"));
  CHECK(slurp(dir / "b" / "points3D.bin") == slurp(kFixtures / "colmap_bin" / "points3D.bin"));
}

TEST_CASE("colmap: empty points, unsupported model and truncation") {
  const fs::path dir = tdg::testing::temp_dir("colmap_err");
  fs::copy(kFixtures / "colmap_text", dir / "empty");
  spit(dir / "empty" / "points3D.txt", "# no points\n");
  CHECK(read_colmap_text(dir / "empty").points.empty());

  CHECK(code_of([] { read_colmap_text(kFixtures / "colmap_opencv"); }) == ErrorCode::UnsupportedModel);
  CHECK(message_of([] { read_colmap_text(kFixtures / "colmap_opencv"); }).find("OPENCV") != std::string::npos);

  fs::copy(kFixtures / "colmap_bin", dir / "cut");
  const std::string images = slurp(kFixtures / "colmap_bin" / "images.bin");
  spit(dir / "cut" / "images.bin", images.substr(0, 40));
  CHECK(code_of([&] { read_colmap_binary(dir / "cut"); }) == ErrorCode::Parse);
  CHECK(message_of([&] { read_colmap_binary(dir / "cut"); }).find("offset") != std::string::npos);
}

TEST_CASE("PGM reads scale by maxval") {
  const Image g = read_gray_image(kFixtures / "gray_2x2.pgm");
  REQUIRE(g.width == 2);
  CHECK(g.at(0, 0) == 0.0);
  CHECK(g.at(1, 0) == 128.0 / 255.0);
  CHECK(g.at(0, 1) == 1.0);
  CHECK(g.at(1, 1) == 64.0 / 255.0);
  CHECK(read_gray_image(kFixtures / "gray16_full.pgm")[0] == 1.0);
  CHECK(code_of([] { read_gray_image(kFixtures / "truncated.pgm"); }) == ErrorCode::Parse);
}

TEST_CASE("PNG reads: gray, 16-bit and luma-reduced RGB") {
  const Image g = read_gray_image(kFixtures / "gray8.png");
  CHECK(g.data == std::vector<double>{0.0, 51.0 / 255.0, 1.0});
  const Image g16 = read_gray_image(kFixtures / "gray16.png");
  CHECK(g16.data == std::vector<double>{0.0, 1.0});
  const Image rgb = read_gray_image(kFixtures / "rgb.png");
  CHECK(rgb[0] == doctest::Approx(0.299));
  CHECK(rgb[1] == doctest::Approx((0.299 * 10 + 0.587 * 200 + 0.114 * 30) / 255.0));
}

TEST_CASE("depth maps: PFM row order, endianness, raw PGM and NaN handling") {
  const DepthMap a = read_depth_map(kFixtures / "depth_1x2.pfm");
  CHECK(a.values.width == 2);
  CHECK(a.values.data == std::vector<double>{1.5, 3.0});
  const DepthMap be = read_depth_map(kFixtures / "depth_2x2_be.pfm");
  CHECK(be.values.data == std::vector<double>{1.0, 2.0, 3.0, 4.5});
  const DepthMap raw = read_depth_map(kFixtures / "depth16.pgm");
  CHECK(raw.values.data == std::vector<double>{32768.0, 7.0});
  const DepthMap nan = read_depth_map(kFixtures / "depth_nan.pfm");
  CHECK(nan.invalid_pixels == 1);
  CHECK(nan.values.data == std::vector<double>{1.0, 0.0, 2.0, 0.5});
}

TEST_CASE("image writers round-trip") {
  const fs::path dir = tdg::testing::temp_dir("image_rt");
  Image img = tdg::testing::random_image(7, 5, 3);
  for (double& v : img.data) v = static_cast<float>(v * 10.0);
  write_pfm(dir / "d.pfm", img);
  CHECK(read_depth_map(dir / "d.pfm").values == img);

  Image unit = tdg::testing::random_image(7, 5, 4);
  write_pgm8(dir / "g.pgm", unit);
  const Image back = read_gray_image(dir / "g.pgm");
  for (std::size_t i = 0; i < unit.size(); ++i) {
    CHECK(back[i] == std::round(255.0 * unit[i]) / 255.0);
    CHECK(std::abs(back[i] - unit[i]) <= 0.5 / 255.0 + 1e-15);
  }

  Image raw(3, 1);
  raw.data = {0.0, 1234.0, 65535.0};
  write_pgm16(dir / "r.pgm", raw);
  CHECK(read_depth_map(dir / "r.pgm").values == raw);
}

TEST_CASE("write_render: quantized thermal and bit-exact depth") {
  const fs::path dir = tdg::testing::temp_dir("write_render");
  RenderOutput out;
  out.thermal = Image(2, 1);
  out.thermal.data = {0.5, 0.0};
  out.depth = Image(2, 1);
  out.depth.data = {1.25, static_cast<float>(3.7)};
  out.alpha_acc = Image(2, 1);
  write_render(out, dir, "view_007.pgm");
  const std::string bytes = slurp(dir / "view_007_thermal.pgm");
  CHECK(static_cast<unsigned char>(bytes[bytes.size() - 2]) == 128);
  CHECK(read_gray_image(dir / "view_007_thermal.pgm")[0] == 128.0 / 255.0);
  CHECK(read_depth_map(dir / "view_007_depth.pfm").values == out.depth);
  CHECK(read_gray_image(dir / "view_007_alpha.pgm") == Image(2, 1));
}

TEST_CASE("checkpoint: committed fixture decodes to its declared values") {
  const GaussianScene s = load_scene(kFixtures / "scene_v1.tdgs");
  REQUIRE(s.count() == 2);
  CHECK(s.positions == std::vector<double>{0.5, -1.0, 2.0, 0.25, 0.0, -3.5});
  CHECK(s.rotations[5] == 0.5);
  CHECK(s.opacity_logits == std::vector<double>{2.0, -4.0});
  CHECK(s.thermal_features[1] == static_cast<float>(0.2));
  CHECK(encode_scene(s) == slurp(kFixtures / "scene_v1.tdgs"));
}

TEST_CASE("checkpoint: round-trip, truncation and versioning") {
  GaussianScene s = tdg::testing::random_scene(100, 9);
  s.round_to_storage_precision();
  const fs::path dir = tdg::testing::temp_dir("ckpt");
  save_scene(dir / "s.tdgs", s);
  const GaussianScene back = load_scene(dir / "s.tdgs");
  CHECK(back == s);
  CHECK(std::memcmp(back.positions.data(), s.positions.data(), s.positions.size() * sizeof(double)) == 0);
  CHECK_FALSE(fs::exists(dir / "s.tdgs.tmp"));

  const std::string bytes = encode_scene(s);
  CHECK(code_of([&] { decode_scene(bytes.substr(0, bytes.size() - 3)); }) == ErrorCode::Parse);
  CHECK(code_of([&] { decode_scene(bytes + "x"); }) == ErrorCode::Parse);
  std::string bumped = bytes;
  bumped[4] = 2;
  CHECK(code_of([&] { decode_scene(bumped); }) == ErrorCode::IncompatibleCheckpoint);
  std::string magic = bytes;
  magic[0] = 'X';
  CHECK(code_of([&] { decode_scene(magic); }) == ErrorCode::IncompatibleCheckpoint);
  CHECK(code_of([&] { load_scene(dir / "missing.tdgs"); }) == ErrorCode::Io);
}

TEST_CASE("bundle: write/load round-trip keeps cameras, frames and priors") {
  TrainingBundle b;
  b.scene_name = "tiny";
  for (int v = 0; v < 3; ++v) {
    View view;
    view.name = "v" + std::to_string(v) + ".pgm";
    view.camera = Camera::look_at(Vec3(std::cos(v), std::sin(v), 0.5) * 3.0, Vec3::Zero(), Vec3::UnitZ(), 20, 20, 8, 6);
    view.thermal = tdg::testing::random_image(8, 6, 40 + v);
    for (double& x : view.thermal.data) x = std::round(x * 255.0) / 255.0;
    Image d = tdg::testing::random_image(8, 6, 50 + v, 1.0, 5.0);
    for (double& x : d.data) x = static_cast<float>(x);
    view.depth_prior = d;
    view.provenance = PriorProvenance::SyntheticOracle;
    b.views.push_back(view);
  }
  b.initial_points = {{Vec3(0.5, 0.25, -1), 0.75}};
  b.split = {{0, 2}, {1}};
  const fs::path dir = tdg::testing::temp_dir("bundle_rt");
  write_bundle(dir, b);
  const TrainingBundle back = load_bundle(dir);
  REQUIRE(back.views.size() == 3);
  CHECK(back.split.train == b.split.train);
  CHECK(back.split.test == b.split.test);
  for (int v = 0; v < 3; ++v) {
    CHECK(back.views[v].name == b.views[v].name);
    CHECK(back.views[v].thermal == b.views[v].thermal);
    CHECK(*back.views[v].depth_prior == *b.views[v].depth_prior);
    CHECK(back.views[v].provenance == PriorProvenance::SyntheticOracle);
    CHECK(back.views[v].camera.rotation.isApprox(b.views[v].camera.rotation, 1e-12));
    CHECK(back.views[v].camera.translation.isApprox(b.views[v].camera.translation, 1e-12));
    CHECK(back.views[v].camera.fx == 20);
  }
  REQUIRE(back.initial_points.size() == 1);
  CHECK(back.initial_points[0].position == Vec3(0.5, 0.25, -1));
}

TEST_CASE("bundle: loading reports missing frames") {
  const fs::path dir = tdg::testing::temp_dir("bundle_missing");
  fs::create_directories(dir / "sparse" / "0");
  for (const char* f : {"cameras.txt", "images.txt", "points3D.txt"}) {
    fs::copy_file(kFixtures / "colmap_text" / f, dir / "sparse" / "0" / f);
  }
  const std::string msg = message_of([&] { load_bundle(dir); });
  CHECK(msg.find("frame_a.pgm") != std::string::npos);
}
