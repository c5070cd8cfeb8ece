#pragma once

#include "tdg/image.hpp"

namespace tdg {

inline constexpr int kSsimRadius = 5;  // 11x11 window
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

struct SsimResult {
  double value = 0.0;
  /// d value / d a; empty unless requested.
  Image grad;
};

/// Mean SSIM over a same-size map. Local statistics use an 11x11 Gaussian
/// window (sigma 1.5) truncated at the border and renormalized, so a
/// constant image has exactly zero local variance everywhere.
SsimResult ssim(const Image& a, const Image& b, bool with_grad = false);

}  // namespace tdg
