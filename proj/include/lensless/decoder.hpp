// SPDX-License-Identifier: Apache-2.0
//
// Under-parameterized upsampling decoder: a fixed random latent tensor at
// (H/32 x W/32 x k) passes through six 1x1 channel-mixing blocks
// (mix -> relu -> channel-norm), the first five followed by bilinear 2x
// upsampling, then a k->3 affine map and sigmoid. Mixing layers carry no
// bias; trainable parameters are 6k^2 + 15k + 3 in total. The latent is
// drawn once from the seed and never updated.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lensless/autodiff.hpp"
#include "lensless/image.hpp"
#include "lensless/rng.hpp"

namespace lensless {

struct DecoderConfig {
  int channels = 64;  // k
  int out_height = 256;
  int out_width = 256;
  static constexpr int upsample_blocks = 5;
  static constexpr int mixing_layers = 6;
  static constexpr double norm_eps = 1e-5;

  void validate() const {
    if (channels < 1) throw ConfigError("DecoderConfig: channels must be positive");
    if (out_height % 32 != 0 || out_width % 32 != 0 || out_height < 32 || out_width < 32)
      throw ConfigError("DecoderConfig: output dims must be positive multiples of 32");
  }
  int in_height() const { return out_height >> upsample_blocks; }
  int in_width() const { return out_width >> upsample_blocks; }
};

inline long decoder_parameter_count(int k) {
  return 6L * k * k + 15L * k + 3L;
}

template <class Scalar>
struct DecoderParams {
  std::vector<Mat<Scalar>> mix;         // 6 of k x k, bias-free
  std::vector<Mat<Scalar>> norm_scale;  // 6 of 1 x k
  std::vector<Mat<Scalar>> norm_shift;  // 6 of 1 x k
  Mat<Scalar> out_weight;               // k x 3
  Mat<Scalar> out_bias;                 // 1 x 3
  Mat<Scalar> latent;                   // (in_h*in_w) x k, frozen

  ParamSet<Scalar> param_set() {
    ParamSet<Scalar> set;
    for (std::size_t i = 0; i < mix.size(); ++i) {
      set.add("mix" + std::to_string(i), &mix[i]);
      set.add("scale" + std::to_string(i), &norm_scale[i]);
      set.add("shift" + std::to_string(i), &norm_shift[i]);
    }
    set.add("out_w", &out_weight);
    set.add("out_b", &out_bias);
    return set;  // latent intentionally excluded
  }

  long count() const {
    long n = 0;
    for (const auto& m : mix) n += m.size();
    for (const auto& m : norm_scale) n += m.size();
    for (const auto& m : norm_shift) n += m.size();
    return n + out_weight.size() + out_bias.size();
  }
};

template <class Scalar>
DecoderParams<Scalar> init_decoder(const DecoderConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const int k = cfg.channels;
  DecoderParams<Scalar> p;
  Rng rng(seed);
  const double bound = std::sqrt(6.0 / k);
  for (int b = 0; b < DecoderConfig::mixing_layers; ++b) {
    Mat<Scalar> m(k, k);
    for (Index e = 0; e < m.size(); ++e)
      m.data()[e] = static_cast<Scalar>(rng.uniform(-bound, bound));
    p.mix.push_back(std::move(m));
    p.norm_scale.push_back(Mat<Scalar>::Ones(1, k));
    p.norm_shift.push_back(Mat<Scalar>::Zero(1, k));
  }
  p.out_weight.resize(k, 3);
  for (Index e = 0; e < p.out_weight.size(); ++e)
    p.out_weight.data()[e] = static_cast<Scalar>(rng.uniform(-bound, bound));
  p.out_bias = Mat<Scalar>::Zero(1, 3);
  p.latent.resize(static_cast<Index>(cfg.in_height()) * cfg.in_width(), k);
  for (Index e = 0; e < p.latent.size(); ++e)
    p.latent.data()[e] = static_cast<Scalar>(0.1 * rng.gaussian());
  return p;
}

template <class Scalar>
TapeNet<Scalar> decoder_on_tape(Tape<Scalar>& tape, const DecoderConfig& cfg,
                                const DecoderParams<Scalar>& p, VarId latent) {
  if (static_cast<int>(p.mix.size()) != DecoderConfig::mixing_layers)
    throw ConfigError("decoder_on_tape: parameter/block count mismatch");
  TapeNet<Scalar> net;
  std::vector<VarId> mid(DecoderConfig::mixing_layers), sid(DecoderConfig::mixing_layers),
      tid(DecoderConfig::mixing_layers);
  const int k = cfg.channels;
  for (int b = 0; b < DecoderConfig::mixing_layers; ++b) {
    mid[b] = tape.leaf(p.mix[b], k, 1, k, true);
    sid[b] = tape.leaf(p.norm_scale[b], 1, 1, k, true);
    tid[b] = tape.leaf(p.norm_shift[b], 1, 1, k, true);
    net.params.push_back(mid[b]);
    net.params.push_back(sid[b]);
    net.params.push_back(tid[b]);
  }
  VarId ow = tape.leaf(p.out_weight, k, 1, 3, true);
  VarId ob = tape.leaf(p.out_bias, 1, 1, 3, true);
  net.params.push_back(ow);
  net.params.push_back(ob);

  VarId h = latent;
  for (int b = 0; b < DecoderConfig::mixing_layers; ++b) {
    h = tape.relu(tape.dense(h, mid[b]));
    h = tape.channel_norm(h, sid[b], tid[b], static_cast<Scalar>(DecoderConfig::norm_eps));
    if (b < DecoderConfig::upsample_blocks) h = tape.upsample2x(h);
  }
  net.output = tape.sigmoid(tape.add_bias(tape.dense(h, ow), ob));
  return net;
}

template <class Scalar>
Image<Scalar> decoder_forward(const DecoderParams<Scalar>& p, const DecoderConfig& cfg) {
  Tape<Scalar> tape;
  VarId z = tape.leaf(p.latent, cfg.in_height(), cfg.in_width(), cfg.channels, false);
  auto net = decoder_on_tape(tape, cfg, p, z);
  Image<Scalar> out = tape.value_image(net.output);
  if (!out.all_finite())
    throw ConfigError("decoder_forward: non-finite values in decoder output");
  return out;
}

}  // namespace lensless
