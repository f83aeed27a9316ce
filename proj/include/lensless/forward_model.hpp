// SPDX-License-Identifier: Apache-2.0
//
// The physics layer: PSF container, FFT-based linear convolution with the
// matching adjoint, and measurement synthesis with seeded Gaussian noise.
//
// Convolution convention (fixed so the adjoint matches bit-for-bit):
//   * zero padding to at least (H+Hk-1, W+Wk-1), rounded up to powers of two
//   * full linear result centre-cropped back to H x W with leading offset
//     ((Hk-1)/2, (Wk-1)/2)   [integer division, so floor for even kernels]
//   * a kernel whose single non-zero entry sits at ((Hk-1)/2, (Wk-1)/2)
//     therefore acts as the identity.
// The adjoint is correlation: convolution with the 180-degree-flipped kernel
// cropped at the complementary offset (Hk-1-ofs, Wk-1-ofs).

#pragma once

#include <memory>
#include <vector>

#include "lensless/fft.hpp"
#include "lensless/image.hpp"
#include "lensless/rng.hpp"

namespace lensless {

enum class PsfNormalize { UnitSum, None };

// Blur kernel on its own grid; 1 channel broadcasts across image channels.
template <class Scalar>
struct Psf {
  Image<Scalar> kernel;  // Hk x Wk x C, C in {1,3}, entries >= 0
  PsfNormalize mode = PsfNormalize::UnitSum;

  // Clamps negatives to zero and (in UnitSum mode) scales each channel to
  // unit sum. Throws if a channel is identically zero after the clamp.
  static Psf from_image(Image<Scalar> img, PsfNormalize mode = PsfNormalize::UnitSum) {
    if (img.channels != 1 && img.channels != 3)
      throw ShapeError("Psf: kernel must have 1 or 3 channels");
    img.data = img.data.cwiseMax(Scalar(0));
    if (mode == PsfNormalize::UnitSum) {
      for (int c = 0; c < img.channels; ++c) {
        const Scalar s = img.data.col(c).sum();
        if (!(s > Scalar(0)))
          throw ConfigError("Psf: channel " + std::to_string(c) +
                            " sums to zero, cannot normalize");
        img.data.col(c) /= s;
      }
    }
    Psf p;
    p.kernel = std::move(img);
    p.mode = mode;
    return p;
  }
};

struct NoiseModel {
  double sigma = 0.01;     // additive Gaussian std in intensity units
  std::uint64_t seed = 0;  // full field is reproducible from this
};

// Precomputed spectra for repeated convolutions against a fixed kernel at a
// fixed image shape (one forward-model evaluation per optimization step).
template <class Scalar>
class ConvPlan {
 public:
  ConvPlan(const Psf<Scalar>& psf, int img_h, int img_w, int img_c)
      : img_h_(img_h), img_w_(img_w), img_c_(img_c) {
    const auto& k = psf.kernel;
    if (k.channels != 1 && k.channels != img_c)
      throw ShapeError("ConvPlan: psf has " + std::to_string(k.channels) +
                       " channels, image has " + std::to_string(img_c));
    ker_h_ = k.height;
    ker_w_ = k.width;
    pad_h_ = detail::next_pow2(img_h + ker_h_ - 1);
    pad_w_ = detail::next_pow2(img_w + ker_w_ - 1);
    ofs_h_ = (ker_h_ - 1) / 2;
    ofs_w_ = (ker_w_ - 1) / 2;
    aofs_h_ = (ker_h_ - 1) - ofs_h_;
    aofs_w_ = (ker_w_ - 1) - ofs_w_;

    khat_.resize(k.channels);
    khat_flip_.resize(k.channels);
    for (int c = 0; c < k.channels; ++c) {
      detail::CMat<Scalar> pad = detail::CMat<Scalar>::Zero(pad_h_, pad_w_);
      detail::CMat<Scalar> pad_flip = detail::CMat<Scalar>::Zero(pad_h_, pad_w_);
      const auto plane = k.channel(c);
      for (int i = 0; i < ker_h_; ++i)
        for (int j = 0; j < ker_w_; ++j) {
          pad(i, j) = plane(i, j);
          pad_flip(i, j) = plane(ker_h_ - 1 - i, ker_w_ - 1 - j);
        }
      detail::fft2(pad, false);
      detail::fft2(pad_flip, false);
      khat_[c] = std::move(pad);
      khat_flip_[c] = std::move(pad_flip);
    }
  }

  int image_height() const { return img_h_; }
  int image_width() const { return img_w_; }
  int image_channels() const { return img_c_; }

  Image<Scalar> convolve(const Image<Scalar>& x) const { return apply(x, khat_, ofs_h_, ofs_w_); }

  Image<Scalar> adjoint(const Image<Scalar>& g) const {
    return apply(g, khat_flip_, aofs_h_, aofs_w_);
  }

 private:
  Image<Scalar> apply(const Image<Scalar>& x, const std::vector<detail::CMat<Scalar>>& spectra,
                      int crop_h, int crop_w) const {
    if (x.height != img_h_ || x.width != img_w_ || x.channels != img_c_)
      throw ShapeError("fft-conv2d: image (" + std::to_string(x.height) + "," +
                       std::to_string(x.width) + "," + std::to_string(x.channels) +
                       ") does not match plan (" + std::to_string(img_h_) + "," +
                       std::to_string(img_w_) + "," + std::to_string(img_c_) + ")");
    if (!x.all_finite()) throw ShapeError("fft-conv2d: non-finite input values");

    Image<Scalar> out(img_h_, img_w_, img_c_);
    for (int c = 0; c < img_c_; ++c) {
      detail::CMat<Scalar> pad = detail::CMat<Scalar>::Zero(pad_h_, pad_w_);
      const auto plane = x.channel(c);
      for (int i = 0; i < img_h_; ++i)
        for (int j = 0; j < img_w_; ++j) pad(i, j) = plane(i, j);
      detail::fft2(pad, false);
      const auto& spec = spectra[spectra.size() == 1 ? 0 : c];
      pad = pad.cwiseProduct(spec);
      detail::fft2(pad, true);
      auto dst = out.channel(c);
      for (int i = 0; i < img_h_; ++i)
        for (int j = 0; j < img_w_; ++j) dst(i, j) = pad(i + crop_h, j + crop_w).real();
    }
    return out;
  }

  int img_h_, img_w_, img_c_;
  int ker_h_, ker_w_;
  int pad_h_, pad_w_;
  int ofs_h_, ofs_w_;
  int aofs_h_, aofs_w_;
  std::vector<detail::CMat<Scalar>> khat_;
  std::vector<detail::CMat<Scalar>> khat_flip_;
};

// One-shot convenience wrappers; optimization loops should hold a ConvPlan.
template <class Scalar>
Image<Scalar> fft_convolve(const Image<Scalar>& x, const Psf<Scalar>& k) {
  return ConvPlan<Scalar>(k, x.height, x.width, x.channels).convolve(x);
}

template <class Scalar>
Image<Scalar> convolve_adjoint(const Image<Scalar>& g, const Psf<Scalar>& k) {
  return ConvPlan<Scalar>(k, g.height, g.width, g.channels).adjoint(g);
}

// y = k * x0 + eta. The noise field is a deterministic function of
// (seed, sigma, shape); the result is intentionally not clamped, values only
// reach [0,1] at image export.
template <class Scalar>
Image<Scalar> simulate_measurement(const Image<Scalar>& x0, const Psf<Scalar>& k,
                                   const NoiseModel& noise) {
  Image<Scalar> y = fft_convolve(x0, k);
  if (noise.sigma > 0.0) {
    Rng rng(noise.seed);
    for (int c = 0; c < y.channels; ++c) {
      auto plane = y.channel(c);
      for (int i = 0; i < y.height; ++i)
        for (int j = 0; j < y.width; ++j)
          plane(i, j) += static_cast<Scalar>(noise.sigma * rng.gaussian());
    }
  }
  return y;
}

}  // namespace lensless
