// SPDX-License-Identifier: Apache-2.0
//
// Image quality metrics. SSIM uses the canonical settings: 11x11 Gaussian
// window (sigma 1.5), K1=0.01, K2=0.03, unit dynamic range, mean over valid
// window positions and channels. Both metrics clamp their inputs to
// [0, peak] first and accumulate in double regardless of the image scalar.

#pragma once

#include <cmath>
#include <vector>

#include "lensless/image.hpp"

namespace lensless {

inline constexpr double kPsnrCapDb = 100.0;  // reported for identical images

struct SsimConfig {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

template <class Scalar>
double psnr(const Image<Scalar>& a, const Image<Scalar>& b, double peak = 1.0) {
  if (!a.same_dims(b))
    throw ShapeError("psnr: shape mismatch (" + std::to_string(a.height) + "," +
                     std::to_string(a.width) + "," + std::to_string(a.channels) + ") vs (" +
                     std::to_string(b.height) + "," + std::to_string(b.width) + "," +
                     std::to_string(b.channels) + ")");
  const Index n = a.data.size();
  double mse = 0.0;
  for (Index i = 0; i < n; ++i) {
    const double va = std::clamp(static_cast<double>(a.data.data()[i]), 0.0, peak);
    const double vb = std::clamp(static_cast<double>(b.data.data()[i]), 0.0, peak);
    const double d = va - vb;
    mse += d * d;
  }
  mse /= static_cast<double>(n);
  if (mse <= 0.0) return kPsnrCapDb;
  return std::min(kPsnrCapDb, 10.0 * std::log10(peak * peak / mse));
}

namespace detail {

inline std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> w(size);
  const double c = (size - 1) / 2.0;
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    w[i] = std::exp(-0.5 * (i - c) * (i - c) / (sigma * sigma));
    sum += w[i];
  }
  for (double& v : w) v /= sum;
  return w;
}

// Separable windowed mean over valid positions: (H-win+1) x (W-win+1).
inline Mat<double> windowed_mean(const Mat<double>& plane, const std::vector<double>& win) {
  const int h = static_cast<int>(plane.rows());
  const int w = static_cast<int>(plane.cols());
  const int k = static_cast<int>(win.size());
  Mat<double> horiz(h, w - k + 1);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j + k <= w; ++j) {
      double acc = 0.0;
      for (int t = 0; t < k; ++t) acc += win[t] * plane(i, j + t);
      horiz(i, j) = acc;
    }
  Mat<double> out(h - k + 1, w - k + 1);
  for (int i = 0; i + k <= h; ++i)
    for (int j = 0; j < out.cols(); ++j) {
      double acc = 0.0;
      for (int t = 0; t < k; ++t) acc += win[t] * horiz(i + t, j);
      out(i, j) = acc;
    }
  return out;
}

}  // namespace detail

template <class Scalar>
double ssim(const Image<Scalar>& a, const Image<Scalar>& b, const SsimConfig& cfg = {}) {
  if (!a.same_dims(b))
    throw ShapeError("ssim: shape mismatch");
  if (a.height < cfg.window || a.width < cfg.window)
    throw ShapeError("ssim: image smaller than the " + std::to_string(cfg.window) +
                     "x" + std::to_string(cfg.window) + " window");
  const auto win = detail::gaussian_window(cfg.window, cfg.sigma);
  const double c1 = (cfg.k1 * cfg.dynamic_range) * (cfg.k1 * cfg.dynamic_range);
  const double c2 = (cfg.k2 * cfg.dynamic_range) * (cfg.k2 * cfg.dynamic_range);

  double total = 0.0;
  long count = 0;
  for (int ch = 0; ch < a.channels; ++ch) {
    Mat<double> pa(a.height, a.width), pb(a.height, a.width);
    for (int i = 0; i < a.height; ++i)
      for (int j = 0; j < a.width; ++j) {
        pa(i, j) = std::clamp(static_cast<double>(a(i, j, ch)), 0.0, cfg.dynamic_range);
        pb(i, j) = std::clamp(static_cast<double>(b(i, j, ch)), 0.0, cfg.dynamic_range);
      }
    const Mat<double> mu_a = detail::windowed_mean(pa, win);
    const Mat<double> mu_b = detail::windowed_mean(pb, win);
    const Mat<double> m_aa = detail::windowed_mean((pa.array() * pa.array()).matrix(), win);
    const Mat<double> m_bb = detail::windowed_mean((pb.array() * pb.array()).matrix(), win);
    const Mat<double> m_ab = detail::windowed_mean((pa.array() * pb.array()).matrix(), win);
    for (Index i = 0; i < mu_a.rows(); ++i)
      for (Index j = 0; j < mu_a.cols(); ++j) {
        const double ma = mu_a(i, j), mb = mu_b(i, j);
        const double va = m_aa(i, j) - ma * ma;
        const double vb = m_bb(i, j) - mb * mb;
        const double cov = m_ab(i, j) - ma * mb;
        const double s = ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) /
                         ((ma * ma + mb * mb + c1) * (va + vb + c2));
        total += s;
        ++count;
      }
  }
  return total / static_cast<double>(count);
}

// Under-parameterization ratio: pixels-per-parameter; > 1 means fewer
// parameters than the image has degrees of freedom.
inline double upr(int height, int width, int channels, long param_count) {
  if (param_count < 1) throw ConfigError("upr: parameter count must be at least 1");
  return static_cast<double>(static_cast<long>(height) * width * channels) /
         static_cast<double>(param_count);
}

}  // namespace lensless
