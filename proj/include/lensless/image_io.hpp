// SPDX-License-Identifier: Apache-2.0
//
// File ingestion and export. PNG (8/16-bit, grayscale/RGB) is the canonical
// interchange format; uncompressed 24/32-bit BMP is accepted on input.
// Intensities map to [0,1] by max-value scaling; export clamps to [0,1] and
// quantizes round-half-up.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>

#include "lensless/forward_model.hpp"
#include "lensless/image.hpp"

namespace lensless {

namespace detail {
// Decoded at full precision; channels as stored in the file (1 or 3).
Image<double> decode_image(const std::string& path);
void encode_png(const Image<double>& img, const std::string& path, int bit_depth);
}  // namespace detail

// Loads, broadcasts grayscale to RGB, and optionally resizes (bilinear).
template <class Scalar>
Image<Scalar> load_image(const std::string& path,
                         std::optional<std::pair<int, int>> target = std::nullopt) {
  Image<double> img = detail::decode_image(path);
  img = broadcast_rgb(img);
  if (target) img = resize_bilinear(img, target->first, target->second);
  return image_cast<Scalar>(img);
}

// Clamp -> quantize (round half up) -> encode. bit_depth is 8 or 16.
template <class Scalar>
void save_image(const Image<Scalar>& img, const std::string& path, int bit_depth = 8) {
  if (bit_depth != 8 && bit_depth != 16)
    throw ConfigError("save_image: bit depth must be 8 or 16");
  detail::encode_png(image_cast<double>(img), path, bit_depth);
}

// PSF ingestion: decode (keeping a grayscale file single-channel so it
// broadcasts across image channels), resize to the working grid, clamp to
// >= 0 and normalize per the requested mode.
template <class Scalar>
Psf<Scalar> load_psf(const std::string& path, std::optional<std::pair<int, int>> target,
                     PsfNormalize mode = PsfNormalize::UnitSum) {
  Image<double> img = detail::decode_image(path);
  if (target) img = resize_bilinear(img, target->first, target->second);
  return Psf<Scalar>::from_image(image_cast<Scalar>(img), mode);
}

// A measurement paired with its provenance; synthetic samples regenerate
// bit-identically from (ground truth, PSF, seed, sigma).
template <class Scalar>
struct PairedSample {
  Image<Scalar> measurement;
  Image<Scalar> ground_truth;
  Psf<Scalar> psf;
  NoiseModel noise;
  std::string ground_truth_path;
  std::string psf_path;
};

template <class Scalar>
PairedSample<Scalar> assemble_pair(const std::string& x0_path, const std::string& psf_path,
                                   double sigma, std::uint64_t seed, int size) {
  PairedSample<Scalar> s;
  s.ground_truth = load_image<Scalar>(x0_path, std::make_pair(size, size));
  s.psf = load_psf<Scalar>(psf_path, std::make_pair(size, size));
  s.noise = NoiseModel{sigma, seed};
  s.measurement = simulate_measurement(s.ground_truth, s.psf, s.noise);
  s.ground_truth_path = x0_path;
  s.psf_path = psf_path;
  return s;
}

}  // namespace lensless
