#include <doctest.h>

#include <cmath>

#include "test_support.hpp"
#include "tdg/error.hpp"
#include "tdg/rasterizer.hpp"

using namespace tdg;
using namespace tdg::testing;

namespace {

Camera axis_camera() {
  Camera cam;
  cam.fx = cam.fy = 100.0;
  cam.cx = cam.cy = 50.0;
  cam.width = cam.height = 100;
  return cam;
}

GaussianScene single(const Vec3& pos, double scale, double opacity_logit, double thermal) {
  GaussianScene s = GaussianScene::zeros(1);
  s.set_position(0, pos);
  s.set_log_scale(0, Vec3::Constant(std::log(scale)));
  s.set_rotation(0, Quat(1, 0, 0, 0));
  s.opacity_logits[0] = opacity_logit;
  s.thermal_features[0] = thermal;
  return s;
}

}  // namespace

TEST_CASE("project_gaussian: pinhole mean and depth") {
  const Camera cam = axis_camera();
  auto on_axis = project_gaussian(single({0, 0, 2}, 0.1, 0.0, 0.5), 0, cam);
  REQUIRE(on_axis);
  CHECK(on_axis->mean2d.x() == doctest::Approx(50.0));
  CHECK(on_axis->mean2d.y() == doctest::Approx(50.0));
  CHECK(on_axis->depth_z == doctest::Approx(2.0));

  auto off_axis = project_gaussian(single({1, 0, 2}, 0.1, 0.0, 0.5), 0, cam);
  REQUIRE(off_axis);
  CHECK(off_axis->mean2d.x() == doctest::Approx(100.0));
  CHECK(off_axis->mean2d.y() == doctest::Approx(50.0));

  CHECK_FALSE(project_gaussian(single({0, 0, -1}, 0.1, 0.0, 0.5), 0, cam));
  CHECK_THROWS_AS(project_gaussian(single({0, 0, 2}, 0.1, 0.0, 0.5), 3, cam), Error);
}

TEST_CASE("project_gaussian: covariance propagation") {
  const Camera cam = axis_camera();
  // Sigma = 0.01 I at z = 2: J = diag(50, 50) on axis.
  const Mat2 raw = project_covariance(0.01 * Mat3::Identity(), Vec3(0, 0, 2), cam);
  CHECK(raw(0, 0) == doctest::Approx(25.0));
  CHECK(raw(1, 1) == doctest::Approx(25.0));
  CHECK(raw(0, 1) == doctest::Approx(0.0));
  const auto s = project_gaussian(single({0, 0, 2}, 0.1, 0.0, 0.5), 0, cam);
  REQUIRE(s);
  CHECK(s->cov2d(0, 0) == doctest::Approx(25.0 + kLowPassFloor));
  CHECK(s->cov2d(1, 1) == doctest::Approx(25.0 + kLowPassFloor));
}

TEST_CASE("project_gaussian: culls splats whose 99% ellipse misses the image") {
  const Camera cam = axis_camera();
  CHECK_FALSE(project_gaussian(single({5, 0, 2}, 0.01, 0.0, 0.5), 0, cam));
  CHECK(project_gaussian(single({1.02, 0, 2}, 0.05, 0.0, 0.5), 0, cam));
}

TEST_CASE("render: single saturated splat") {
  const Camera cam = axis_camera();
  // Huge opacity and a wide footprint: alpha clamps to 0.99 at the centre.
  const RenderOutput out = render(single({0, 0, 2}, 0.5, 20.0, 1.0), cam);
  CHECK(out.thermal.at(50, 50) == doctest::Approx(0.99).epsilon(1e-6));
  CHECK(out.depth.at(50, 50) == doctest::Approx(1.98).epsilon(1e-6));
  CHECK(out.alpha_acc.at(50, 50) == doctest::Approx(0.99).epsilon(1e-6));
}

TEST_CASE("render: two co-located splats give the hand-evaluated expected depth") {
  Camera cam = axis_camera();
  // Very wide splats centred on the pixel: the Gaussian falloff at the centre
  // pixel is ~1, so the effective alphas equal the opacities.
  GaussianScene s = GaussianScene::zeros(2);
  for (std::size_t i = 0; i < 2; ++i) {
    s.set_log_scale(i, Vec3::Constant(std::log(50.0)));
    s.set_rotation(i, Quat(1, 0, 0, 0));
    s.opacity_logits[i] = 0.0;  // opacity 0.5
    s.thermal_features[i] = 1.0;
  }
  s.set_position(0, Vec3(0, 0, 1));
  s.set_position(1, Vec3(0, 0, 2));
  // Pixel centre (49.5, 49.5) sits on the optical axis.
  cam.cx = cam.cy = 49.5;
  const RenderOutput out = render(s, cam);
  CHECK(out.depth.at(49, 49) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(out.thermal.at(49, 49) == doctest::Approx(0.75).epsilon(1e-6));
}

TEST_CASE("render: empty scene renders background") {
  const RenderOutput out = render(GaussianScene{}, test_camera());
  for (std::size_t i = 0; i < out.thermal.size(); ++i) {
    CHECK(out.thermal[i] == 0.0);
    CHECK(out.depth[i] == 0.0);
    CHECK(out.alpha_acc[i] == 0.0);
  }
}

TEST_CASE("render: mismatched scene fields are rejected") {
  GaussianScene s = random_scene(3, 1);
  s.thermal_features.pop_back();
  CHECK_THROWS_AS(render(s, test_camera()), Error);
}

TEST_CASE("render: blending conservation and ranges") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const GaussianScene s = random_scene(12, seed, 0.99);
    const RenderOutput out = render(s, test_camera());
    const double cmax = *std::max_element(s.thermal_features.begin(), s.thermal_features.end());
    for (std::size_t p = 0; p < out.thermal.size(); ++p) {
      CHECK(out.alpha_acc[p] >= 0.0);
      CHECK(out.alpha_acc[p] <= 1.0);
      CHECK(out.thermal[p] >= 0.0);
      CHECK(out.thermal[p] <= 1.0);
      CHECK(out.depth[p] >= 0.0);
      CHECK(out.thermal[p] <= cmax * out.alpha_acc[p] + 1e-12);
    }
  }
}

TEST_CASE("render: permutation invariance") {
  const GaussianScene s = random_scene(10, 42);
  GaussianScene permuted;
  for (std::size_t i = s.count(); i-- > 0;) permuted.append_from(s, i);
  const RenderOutput a = render(s, test_camera());
  const RenderOutput b = render(permuted, test_camera());
  for (std::size_t p = 0; p < a.thermal.size(); ++p) {
    CHECK(a.thermal[p] == doctest::Approx(b.thermal[p]).epsilon(1e-12));
    CHECK(a.depth[p] == doctest::Approx(b.depth[p]).epsilon(1e-12));
  }
}

TEST_CASE("render: a fully transparent Gaussian changes nothing") {
  const GaussianScene s = random_scene(8, 5);
  GaussianScene extra = s;
  extra.append_from(random_scene(1, 99), 0);
  extra.opacity_logits.back() = -1e3;
  const RenderOutput a = render(s, test_camera());
  const RenderOutput b = render(extra, test_camera());
  for (std::size_t p = 0; p < a.thermal.size(); ++p) {
    CHECK(std::abs(a.thermal[p] - b.thermal[p]) <= 1e-6);
    CHECK(std::abs(a.depth[p] - b.depth[p]) <= 1e-6);
  }
}

TEST_CASE("render: matches the per-pixel reference evaluator") {
  for (std::uint64_t seed = 100; seed < 110; ++seed) {
    const GaussianScene s = random_scene(1 + seed % 10, seed, 0.99);
    const Camera cam = test_camera(24);
    const RenderOutput out = render(s, cam);
    const ReferenceRender ref = reference_render(s, cam);
    for (std::size_t p = 0; p < out.thermal.size(); ++p) {
      CHECK(std::abs(out.thermal[p] - ref.thermal[p]) <= 1e-6);
      CHECK(std::abs(out.depth[p] - ref.depth[p]) <= 1e-6);
      CHECK(std::abs(out.alpha_acc[p] - ref.alpha[p]) <= 1e-6);
    }
  }
}

TEST_CASE("render: deterministic across repeated calls") {
  const GaussianScene s = random_scene(15, 8);
  const RenderOutput a = render(s, test_camera(32));
  const RenderOutput b = render(s, test_camera(32));
  CHECK(a.thermal == b.thermal);
  CHECK(a.depth == b.depth);
}

TEST_CASE("render_backward: zero upstream gradient gives zero gradients") {
  const GaussianScene s = random_scene(6, 3);
  const Camera cam = test_camera();
  const RenderOutput out = render(s, cam);
  const RenderGradients g = render_backward(s, out.tape, Image(16, 16), Image(16, 16));
  for (const auto* field : g.params.groups()) {
    for (double v : *field) CHECK(v == 0.0);
  }
}

TEST_CASE("render_backward: stale tape is rejected") {
  GaussianScene s = random_scene(4, 3);
  const RenderOutput out = render(s, test_camera());
  s.thermal_features[0] += 0.1;
  CHECK_THROWS_AS(render_backward(s, out.tape, Image(16, 16, 1.0), Image(16, 16)), Error);
}

TEST_CASE("render_backward: culled Gaussian receives no gradient") {
  GaussianScene s = random_scene(3, 11);
  s.set_position(2, Vec3(0, 0, -10));  // behind the camera at z = -4
  const Camera cam = test_camera();
  const RenderOutput out = render(s, cam);
  const RenderGradients g = render_backward(s, out.tape, Image(16, 16, 1.0), Image(16, 16, 1.0));
  CHECK_FALSE(g.visible[2]);
  CHECK(g.params.thermal_features[2] == 0.0);
  CHECK(g.params.positions[6] == 0.0);
}

namespace {

void check_render_gradients(const GaussianScene& base, const Camera& cam, std::uint64_t seed) {
  const Image gt = random_image(cam.width, cam.height, seed, -1.0, 1.0);
  const Image gd = random_image(cam.width, cam.height, seed + 1, -1.0, 1.0);
  const RenderOutput out = render(base, cam);
  const RenderGradients g = render_backward(base, out.tape, gt, gd);

  GaussianScene probe = base;
  auto probe_groups = probe.groups();
  const auto analytic = g.params.groups();
  std::size_t nontrivial = 0, total = 0;
  for (std::size_t k = 0; k < GaussianScene::kGroupCount; ++k) {
    for (std::size_t i = 0; i < probe_groups[k]->size(); ++i) {
      const double numeric = central_difference(*probe_groups[k], i, 1e-4, [&] {
        const RenderOutput r = render(probe, cam);
        return weighted_sum(gt, r.thermal) + weighted_sum(gd, r.depth);
      });
      INFO("group " << k << " index " << i);
      CHECK(gradients_agree((*analytic[k])[i], numeric));
      ++total;
      if (std::abs(numeric) > 1e-6) ++nontrivial;
    }
  }
  // Guard against a vacuous comparison of zeros.
  CHECK(nontrivial * 10 >= total * 8);
}

}  // namespace

TEST_CASE("render_backward: single splat matches finite differences") {
  GaussianScene s = random_scene(1, 21);
  s.set_position(0, Vec3(0.1, -0.05, 0.2));
  check_render_gradients(s, test_camera(), 1);
}

TEST_CASE("render_backward: random scenes match finite differences") {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    check_render_gradients(random_scene(2 + 3 * seed, 300 + seed), test_camera(), seed);
  }
}
