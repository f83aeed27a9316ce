// SPDX-License-Identifier: Apache-2.0
//
// Image<Scalar>: an H x W x C intensity grid stored as a (H*W) x C dense
// matrix in row-major pixel order (row r = i*W + j). Channels are therefore
// contiguous columns, which lets FFT and resampling code map a channel as a
// row-major H x W matrix without copying.

#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "lensless/common.hpp"

namespace lensless {

template <class Scalar>
struct Image {
  int height = 0;
  int width = 0;
  int channels = 0;
  Mat<Scalar> data;  // (height*width) x channels

  Image() = default;
  Image(int h, int w, int c) : height(h), width(w), channels(c) {
    if (h <= 0 || w <= 0 || c <= 0) throw ShapeError("Image: non-positive dims");
    data.setZero(static_cast<Index>(h) * w, c);
  }
  Image(int h, int w, int c, Mat<Scalar> values)
      : height(h), width(w), channels(c), data(std::move(values)) {
    if (data.rows() != static_cast<Index>(h) * w || data.cols() != c)
      throw ShapeError("Image: storage does not match dims");
  }

  Index pixel_count() const { return static_cast<Index>(height) * width; }

  Scalar& operator()(int i, int j, int ch) { return data(static_cast<Index>(i) * width + j, ch); }
  Scalar operator()(int i, int j, int ch) const {
    return data(static_cast<Index>(i) * width + j, ch);
  }

  // Channel plane viewed as an H x W matrix (no copy).
  auto channel(int ch) {
    return Eigen::Map<RowMat<Scalar>>(data.col(ch).data(), height, width);
  }
  auto channel(int ch) const {
    return Eigen::Map<const RowMat<Scalar>>(data.col(ch).data(), height, width);
  }

  bool same_dims(const Image& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }
  bool all_finite() const { return data.allFinite(); }
};

// Clamped copy in [0,1]; non-finite entries map to 0 so diverged runs still
// export something inspectable.
template <class Scalar>
Image<Scalar> clamp01(const Image<Scalar>& img) {
  Image<Scalar> out = img;
  Scalar* p = out.data.data();
  const Index n = out.data.size();
  for (Index i = 0; i < n; ++i) {
    const Scalar v = p[i];
    p[i] = std::isfinite(static_cast<double>(v))
               ? std::min<Scalar>(Scalar(1), std::max<Scalar>(Scalar(0), v))
               : Scalar(0);
  }
  return out;
}

template <class To, class From>
Image<To> image_cast(const Image<From>& img) {
  Image<To> out;
  out.height = img.height;
  out.width = img.width;
  out.channels = img.channels;
  out.data = img.data.template cast<To>();
  return out;
}

// Bilinear resample to (out_h, out_w). Half-pixel-centre convention with edge
// clamping: weights always sum to 1, so constants are preserved and values
// never overshoot the input range.
template <class Scalar>
Image<Scalar> resize_bilinear(const Image<Scalar>& img, int out_h, int out_w) {
  if (out_h <= 0 || out_w <= 0) throw ShapeError("resize_bilinear: zero-area target");
  if (out_h == img.height && out_w == img.width) return img;

  struct Tap {
    int lo, hi;
    Scalar w_lo, w_hi;
  };
  auto make_taps = [](int in_n, int out_n) {
    std::vector<Tap> taps(out_n);
    const double scale = static_cast<double>(in_n) / out_n;
    for (int i = 0; i < out_n; ++i) {
      const double src = (i + 0.5) * scale - 0.5;
      const double fl = std::floor(src);
      int lo = static_cast<int>(fl);
      const double frac = src - fl;
      int hi = lo + 1;
      lo = std::clamp(lo, 0, in_n - 1);
      hi = std::clamp(hi, 0, in_n - 1);
      taps[i] = {lo, hi, static_cast<Scalar>(1.0 - frac), static_cast<Scalar>(frac)};
    }
    return taps;
  };

  const auto row_taps = make_taps(img.height, out_h);
  const auto col_taps = make_taps(img.width, out_w);

  Image<Scalar> out(out_h, out_w, img.channels);
  for (int c = 0; c < img.channels; ++c) {
    const auto src = img.channel(c);
    auto dst = out.channel(c);
    for (int i = 0; i < out_h; ++i) {
      const Tap& ty = row_taps[i];
      for (int j = 0; j < out_w; ++j) {
        const Tap& tx = col_taps[j];
        dst(i, j) = ty.w_lo * (tx.w_lo * src(ty.lo, tx.lo) + tx.w_hi * src(ty.lo, tx.hi)) +
                    ty.w_hi * (tx.w_lo * src(ty.hi, tx.lo) + tx.w_hi * src(ty.hi, tx.hi));
      }
    }
  }
  return out;
}

// Grayscale broadcast to three channels; 3-channel images pass through.
template <class Scalar>
Image<Scalar> broadcast_rgb(const Image<Scalar>& img) {
  if (img.channels == 3) return img;
  if (img.channels != 1) throw ShapeError("broadcast_rgb: expected 1 or 3 channels");
  Image<Scalar> out(img.height, img.width, 3);
  for (int c = 0; c < 3; ++c) out.data.col(c) = img.data.col(0);
  return out;
}

}  // namespace lensless
