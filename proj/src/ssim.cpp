#include "tdg/ssim.hpp"

#include <array>
#include <cmath>
#include <vector>

namespace tdg {
namespace {

// Banded 1D operator: out[i] = sum_k weights[i][k] * in[start[i] + k].
class WindowFilter1D {
 public:
  explicit WindowFilter1D(int n) : n_(n), start_(n), weights_(n) {
    std::array<double, 2 * kSsimRadius + 1> kernel{};
    for (int k = -kSsimRadius; k <= kSsimRadius; ++k) {
      kernel[k + kSsimRadius] = std::exp(-(k * k) / (2.0 * kSsimSigma * kSsimSigma));
    }
    for (int i = 0; i < n; ++i) {
      const int lo = std::max(0, i - kSsimRadius);
      const int hi = std::min(n - 1, i + kSsimRadius);
      start_[i] = lo;
      double sum = 0.0;
      for (int j = lo; j <= hi; ++j) sum += kernel[j - i + kSsimRadius];
      for (int j = lo; j <= hi; ++j) weights_[i].push_back(kernel[j - i + kSsimRadius] / sum);
    }
  }

  int size() const { return n_; }
  int start(int i) const { return start_[i]; }
  const std::vector<double>& weights(int i) const { return weights_[i]; }

 private:
  int n_;
  std::vector<int> start_;
  std::vector<std::vector<double>> weights_;
};

class WindowFilter2D {
 public:
  WindowFilter2D(int width, int height) : fx_(width), fy_(height) {}

  Image apply(const Image& in) const { return run(in, false); }
  Image apply_transposed(const Image& in) const { return run(in, true); }

 private:
  static void pass(const WindowFilter1D& f, const double* in, double* out, std::ptrdiff_t stride, bool transposed) {
    const int n = f.size();
    for (int i = 0; i < n; ++i) out[i * stride] = 0.0;
    for (int i = 0; i < n; ++i) {
      const auto& w = f.weights(i);
      const int s = f.start(i);
      if (transposed) {
        for (std::size_t k = 0; k < w.size(); ++k) out[(s + static_cast<int>(k)) * stride] += w[k] * in[i * stride];
      } else {
        double acc = 0.0;
        for (std::size_t k = 0; k < w.size(); ++k) acc += w[k] * in[(s + static_cast<int>(k)) * stride];
        out[i * stride] = acc;
      }
    }
  }

  Image run(const Image& in, bool transposed) const {
    const int w = in.width, h = in.height;
    Image tmp(w, h), out(w, h);
    for (int y = 0; y < h; ++y) {
      pass(fx_, &in.data[static_cast<std::size_t>(y) * w], &tmp.data[static_cast<std::size_t>(y) * w], 1, transposed);
    }
    for (int x = 0; x < w; ++x) pass(fy_, &tmp.data[x], &out.data[x], w, transposed);
    return out;
  }

  WindowFilter1D fx_;
  WindowFilter1D fy_;
};

Image product(const Image& a, const Image& b) {
  Image out(a.width, a.height);
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

}  // namespace

SsimResult ssim(const Image& a, const Image& b, bool with_grad) {
  require_same_shape(a, b, "ssim");
  if (a.empty()) throw Error(ErrorCode::InvalidInput, "ssim: empty image");
  const WindowFilter2D filter(a.width, a.height);
  const Image mu_a = filter.apply(a);
  const Image mu_b = filter.apply(b);
  const Image e_aa = filter.apply(product(a, a));
  const Image e_bb = filter.apply(product(b, b));
  const Image e_ab = filter.apply(product(a, b));

  const std::size_t n = a.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  SsimResult result;
  Image d_mu, d_eaa, d_eab;
  if (with_grad) {
    d_mu = Image(a.width, a.height);
    d_eaa = Image(a.width, a.height);
    d_eab = Image(a.width, a.height);
  }
  double sum = 0.0;
  for (std::size_t p = 0; p < n; ++p) {
    const double ma = mu_a[p], mb = mu_b[p];
    const double var_a = e_aa[p] - ma * ma;
    const double var_b = e_bb[p] - mb * mb;
    const double cov = e_ab[p] - ma * mb;
    const double a1 = 2.0 * ma * mb + kSsimC1;
    const double a2 = 2.0 * cov + kSsimC2;
    const double b1 = ma * ma + mb * mb + kSsimC1;
    const double b2 = var_a + var_b + kSsimC2;
    sum += (a1 * a2) / (b1 * b2);
    if (with_grad) {
      const double b12 = b1 * b2;
      d_eaa[p] = -a1 * a2 / (b1 * b2 * b2) * inv_n;
      d_eab[p] = 2.0 * a1 / b12 * inv_n;
      d_mu[p] = (2.0 * mb * a2 / b12 - 2.0 * ma * a1 * a2 / (b1 * b12) + 2.0 * ma * a1 * a2 / (b12 * b2) -
                 2.0 * mb * a1 / b12) *
                inv_n;
    }
  }
  result.value = sum * inv_n;
  if (with_grad) {
    const Image g_mu = filter.apply_transposed(d_mu);
    const Image g_eaa = filter.apply_transposed(d_eaa);
    const Image g_eab = filter.apply_transposed(d_eab);
    result.grad = Image(a.width, a.height);
    for (std::size_t q = 0; q < n; ++q) result.grad[q] = g_mu[q] + 2.0 * a[q] * g_eaa[q] + b[q] * g_eab[q];
  }
  return result;
}

}  // namespace tdg
