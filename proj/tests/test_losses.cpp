#include <doctest.h>

#include <cmath>

#include "test_support.hpp"
#include "tdg/error.hpp"
#include "tdg/losses.hpp"
#include "tdg/ssim.hpp"

using namespace tdg;
using tdg::testing::central_difference;
using tdg::testing::gradients_agree;

namespace {

Image constant(int w, int h, double v) {
  Image img(w, h);
  for (double& x : img.data) x = v;
  return img;
}

Image from_rows(int w, int h, std::vector<double> values) {
  Image img(w, h);
  img.data = std::move(values);
  return img;
}

// Smallest |neighbour difference| touching pixel i; used to skip kinks.
double min_neighbour_gap(const Image& img, std::size_t i) {
  const int x = static_cast<int>(i) % img.width, y = static_cast<int>(i) / img.width;
  double gap = INFINITY;
  const int dx[] = {1, -1, 0, 0}, dy[] = {0, 0, 1, -1};
  for (int k = 0; k < 4; ++k) {
    const int xx = x + dx[k], yy = y + dy[k];
    if (xx < 0 || yy < 0 || xx >= img.width || yy >= img.height) continue;
    gap = std::min(gap, std::abs(img.at(xx, yy) - img.at(x, y)));
  }
  return gap;
}

}  // namespace

TEST_CASE("ssim: identity and constant closed form") {
  const Image a = tdg::testing::random_image(16, 12, 1);
  CHECK(ssim(a, a).value == doctest::Approx(1.0).epsilon(1e-12));

  const double expected = (2 * 0.5 * 0.25 + 1e-4) / (0.25 + 0.0625 + 1e-4);
  const double got = ssim(constant(16, 16, 0.5), constant(16, 16, 0.25)).value;
  CHECK(got == doctest::Approx(expected).epsilon(1e-12));
  CHECK(std::abs(got - 0.8004) <= 1e-3);
}

TEST_CASE("ssim: matches direct windowed evaluation") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Image a = tdg::testing::random_image(13, 9, 10 + seed);
    const Image b = tdg::testing::smooth_random_image(13, 9, 20 + seed);
    CHECK(ssim(a, b).value == doctest::Approx(tdg::testing::reference_ssim(a, b)).epsilon(1e-12));
  }
}

TEST_CASE("ssim: gradient matches finite differences") {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    Image a = tdg::testing::random_image(16, 16, 100 + seed);
    const Image b = tdg::testing::random_image(16, 16, 200 + seed);
    const SsimResult r = ssim(a, b, true);
    for (std::size_t i = 0; i < a.size(); i += 7) {
      const double fd = central_difference(a.data, i, 1e-4, [&] { return 1.0 - ssim(a, b).value; });
      CHECK(gradients_agree(-r.grad[i], fd));
    }
  }
}

TEST_CASE("ssim: shape mismatch is rejected") {
  CHECK_THROWS_AS(ssim(Image(4, 4), Image(4, 5)), Error);
}

TEST_CASE("smoothness_loss: closed forms") {
  CHECK(smoothness_loss(constant(5, 3, 0.7)).value == 0.0);
  CHECK(smoothness_loss(from_rows(2, 2, {0, 1, 0, 1})).value == 0.25);
  CHECK(smoothness_loss(constant(1, 1, 0.3)).value == 0.0);
}

TEST_CASE("smoothness_loss: gradient away from kinks") {
  Image img = tdg::testing::random_image(8, 8, 5);
  const LossWithGrad r = smoothness_loss(img);
  int checked = 0;
  for (std::size_t i = 0; i < img.size(); ++i) {
    if (min_neighbour_gap(img, i) < 1e-3) continue;
    const double fd = central_difference(img.data, i, 1e-4, [&] { return smoothness_loss(img).value; });
    CHECK(gradients_agree(r.grad[i], fd));
    ++checked;
  }
  CHECK(checked > 40);
}

TEST_CASE("minmax_normalize: examples") {
  const Image n = minmax_normalize(from_rows(3, 1, {2, 4, 6}));
  CHECK(n.data == std::vector<double>{0.0, 0.5, 1.0});
  CHECK(minmax_normalize(constant(4, 4, 3.0)) == constant(4, 4, 0.0));
  const Image unit = from_rows(2, 2, {0.0, 0.25, 1.0, 0.5});
  CHECK(minmax_normalize(unit) == unit);
  CHECK_THROWS_AS(minmax_normalize(from_rows(2, 1, {0.0, NAN})), Error);
}

TEST_CASE("depth_loss: identity, affine invariance and degenerate input") {
  const Image prior = tdg::testing::random_image(16, 16, 8, 1.0, 5.0);
  CHECK(std::abs(depth_loss(prior, prior).value) <= 1e-12);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const Image rendered = tdg::testing::random_image(16, 16, 30 + seed, 0.5, 4.0);
    const double a = rng.uniform(0.1, 10.0), b = rng.uniform(-5.0, 5.0);
    Image moved = rendered;
    for (double& v : moved.data) v = a * v + b;
    CHECK(std::abs(depth_loss(moved, prior).value - depth_loss(rendered, prior).value) <= 1e-6);

    Image prior_affine = rendered;
    for (double& v : prior_affine.data) v = a * v + b;
    CHECK(std::abs(depth_loss(rendered, prior_affine).value) <= 1e-6);
  }
  const DepthLoss flat = depth_loss(constant(8, 8, 2.0), tdg::testing::random_image(8, 8, 3));
  CHECK(std::isfinite(flat.value));
  CHECK(flat.grad == constant(8, 8, 0.0));
  CHECK_THROWS_AS(depth_loss(Image(4, 4), Image(5, 4)), Error);
}

TEST_CASE("depth_loss: gradient through the normalization") {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    Image rendered = tdg::testing::random_image(16, 16, 40 + seed, 1.0, 3.0);
    const Image prior = tdg::testing::smooth_random_image(16, 16, 50 + seed);
    const DepthLoss r = depth_loss(rendered, prior);
    const Image nr = minmax_normalize(rendered), np = minmax_normalize(prior);
    int checked = 0;
    for (std::size_t i = 0; i < rendered.size(); ++i) {
      // Skip L1 kinks: a step of eps moves the normalized value by about eps / range.
      if (std::abs(nr[i] - np[i]) < 1e-3) continue;
      const double fd = central_difference(rendered.data, i, 1e-4, [&] { return depth_loss(rendered, prior).value; });
      CHECK(gradients_agree(r.grad[i], fd));
      ++checked;
    }
    CHECK(checked > 200);
  }
}

TEST_CASE("thermal_loss: closed forms") {
  const Image gt = tdg::testing::random_image(12, 12, 2, 0.2, 0.8);
  LossWeights w;
  w.lambda_smooth = 0.0;
  CHECK(thermal_loss(gt, gt, w).value == doctest::Approx(0.0).scale(1e-12));

  w.lambda_smooth = 0.5;
  CHECK(thermal_loss(constant(8, 8, 0.4), constant(8, 8, 0.4), w).value == 0.0);

  w.lambda_ssim = 0.0;
  w.lambda_smooth = 0.0;
  Image shifted = gt;
  for (double& v : shifted.data) v += 0.1;
  CHECK(thermal_loss(shifted, gt, w).value == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("thermal_loss: gradient matches finite differences") {
  LossWeights w;
  w.lambda_smooth = 0.05;
  Image rendered = tdg::testing::random_image(16, 16, 60);
  const Image gt = tdg::testing::random_image(16, 16, 61);
  const ThermalLoss r = thermal_loss(rendered, gt, w);
  int checked = 0;
  for (std::size_t i = 0; i < rendered.size(); ++i) {
    if (std::abs(rendered[i] - gt[i]) < 1e-3 || min_neighbour_gap(rendered, i) < 1e-3) continue;
    const double fd = central_difference(rendered.data, i, 1e-4, [&] { return thermal_loss(rendered, gt, w).value; });
    CHECK(gradients_agree(r.grad[i], fd));
    ++checked;
  }
  CHECK(checked > 150);
}

TEST_CASE("decay_weight: boundaries and midpoint") {
  CHECK(decay_weight(1, 1, 15001) == 1.0);
  CHECK(decay_weight(15001, 1, 15001) == 0.0);
  CHECK(decay_weight(20000, 1, 15001) == 0.0);
  CHECK(decay_weight(7501, 1, 15001) == 0.5);
  CHECK(decay_weight(0, 1, 15001) == 1.0);
  CHECK_THROWS_AS(decay_weight(3, 5, 5), Error);
  CHECK_THROWS_AS(decay_weight(3, 5, 4), Error);
}

TEST_CASE("total_loss: recomposition and handoff") {
  LossWeights w;
  w.lambda_depth = 1.0;
  w.t_start = 1;
  w.t_end = 101;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Image rt = tdg::testing::random_image(16, 16, 70 + seed);
    const Image gt = tdg::testing::random_image(16, 16, 90 + seed);
    const Image rd = tdg::testing::random_image(16, 16, 110 + seed, 1.0, 4.0);
    const Image pd = tdg::testing::random_image(16, 16, 130 + seed, 1.0, 4.0);
    for (int t : {1, 26, 51, 100, 101, 150}) {
      const TotalLoss l = total_loss(rt, gt, rd, pd, w, t);
      const LossReport& r = l.report;
      CHECK(r.total == r.thermal_term + r.decay_weight * w.lambda_depth * r.depth_term);
      CHECK(r.total >= 0.0);
      CHECK(r.thermal_term == thermal_loss(rt, gt, w).value);
      CHECK(r.depth_term == depth_loss(rd, pd).value);
      if (t == 51) CHECK(r.total == r.thermal_term + 0.5 * r.depth_term);
      if (t >= w.t_end) {
        CHECK(r.decay_weight == 0.0);
        CHECK(r.total == r.thermal_term);
        for (double g : l.grad_depth.data) CHECK(g == 0.0);
      }
    }
  }
}

TEST_CASE("total_loss: perfect render and depth gradient scaling") {
  LossWeights w;
  w.lambda_smooth = 0.0;
  const Image gt = tdg::testing::random_image(12, 12, 4);
  const Image prior = tdg::testing::random_image(12, 12, 5, 1.0, 3.0);
  for (int t : {1, 5000, 20000}) {
    CHECK(total_loss(gt, gt, prior, prior, w, t).report.total == doctest::Approx(0.0).scale(1e-12));
  }
  const Image rd = tdg::testing::random_image(12, 12, 6, 1.0, 3.0);
  const TotalLoss l = total_loss(gt, gt, rd, prior, w, 1);
  const DepthLoss d = depth_loss(rd, prior);
  for (std::size_t i = 0; i < rd.size(); ++i) CHECK(l.grad_depth[i] == w.lambda_depth * d.grad[i]);

  w.lambda_depth = 0.0;
  for (double g : total_loss(gt, gt, rd, prior, w, 1).grad_depth.data) CHECK(g == 0.0);
  const TotalLoss only = thermal_only_loss(gt, gt, rd, w, 1);
  CHECK(only.report.depth_term == 0.0);
  CHECK_THROWS_AS(total_loss(gt, gt, Image(3, 3), prior, w, 1), Error);
}

TEST_CASE("LossWeights: validation") {
  LossWeights w;
  CHECK_NOTHROW(w.validate());
  w.lambda_ssim = 1.5;
  CHECK_THROWS_AS(w.validate(), Error);
  w = LossWeights{};
  w.lambda_depth = -1;
  CHECK_THROWS_AS(w.validate(), Error);
  w = LossWeights{};
  w.t_end = w.t_start;
  CHECK_THROWS_AS(w.validate(), Error);
}
