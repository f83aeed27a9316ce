// SPDX-License-Identifier: Apache-2.0
//
// Sinusoidal coordinate MLP: (u,v) -> RGB. Layer i computes
// sin(omega_i * (W_i h + b_i)); the final layer is affine with an optional
// sigmoid. Initialization follows the matched uniform scheme: first layer in
// [-1/d_in, 1/d_in], later layers in +-sqrt(6)/(omega*sqrt(d_in)), biases in
// the same range as their layer's weights.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lensless/autodiff.hpp"
#include "lensless/image.hpp"
#include "lensless/rng.hpp"

namespace lensless {

enum class OutputActivation { Linear, Sigmoid };

struct SirenConfig {
  int in_dim = 2;
  int out_dim = 3;
  int hidden_width = 208;
  int hidden_layers = 3;  // hidden-to-hidden linear maps; total linear layers = this + 2
  double omega0_first = 30.0;
  double omega0_hidden = 30.0;
  OutputActivation output_activation = OutputActivation::Linear;

  void validate() const {
    if (in_dim < 1 || out_dim < 1) throw ConfigError("SirenConfig: bad in/out dims");
    if (hidden_width < 1) throw ConfigError("SirenConfig: hidden_width must be positive");
    if (hidden_layers < 0) throw ConfigError("SirenConfig: hidden_layers must be >= 0");
    if (!(omega0_first > 0.0) || !(omega0_hidden > 0.0))
      throw ConfigError("SirenConfig: omega0 must be positive");
  }
  int total_linear_layers() const { return hidden_layers + 2; }
};

inline long parameter_count(const SirenConfig& cfg) {
  const long n = cfg.hidden_width;
  return (cfg.in_dim * n + n) + static_cast<long>(cfg.hidden_layers) * (n * n + n) +
         (n * cfg.out_dim + cfg.out_dim);
}

// Row-major list of (u,v) pairs covering an H x W grid, corners exactly at
// +-1: u = -1 + 2j/(W-1), v = -1 + 2i/(H-1).
template <class Scalar>
struct CoordinateGrid {
  Mat<Scalar> uv;  // (H*W) x 2, column 0 = u, column 1 = v
  int height = 0;
  int width = 0;
};

template <class Scalar>
CoordinateGrid<Scalar> make_coordinate_grid(int height, int width) {
  if (height < 2 || width < 2)
    throw ConfigError("make_coordinate_grid: dims must be at least 2x2");
  CoordinateGrid<Scalar> grid;
  grid.height = height;
  grid.width = width;
  grid.uv.resize(static_cast<Index>(height) * width, 2);
  for (int i = 0; i < height; ++i) {
    const Scalar v = Scalar(-1) + Scalar(2) * i / Scalar(height - 1);
    for (int j = 0; j < width; ++j) {
      const Scalar u = Scalar(-1) + Scalar(2) * j / Scalar(width - 1);
      const Index r = static_cast<Index>(i) * width + j;
      grid.uv(r, 0) = u;
      grid.uv(r, 1) = v;
    }
  }
  return grid;
}

// Weights are (fan_in x fan_out), biases (1 x fan_out); activations are rows.
template <class Scalar>
struct SirenParams {
  std::vector<Mat<Scalar>> weights;
  std::vector<Mat<Scalar>> biases;

  ParamSet<Scalar> param_set() {
    ParamSet<Scalar> set;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      set.add("w" + std::to_string(i), &weights[i]);
      set.add("b" + std::to_string(i), &biases[i]);
    }
    return set;
  }

  long count() const {
    long n = 0;
    for (const auto& w : weights) n += w.size();
    for (const auto& b : biases) n += b.size();
    return n;
  }

  bool all_finite() const {
    for (const auto& w : weights)
      if (!w.allFinite()) return false;
    for (const auto& b : biases)
      if (!b.allFinite()) return false;
    return true;
  }
};

template <class Scalar>
SirenParams<Scalar> init_siren(const SirenConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  SirenParams<Scalar> p;
  Rng rng(seed);
  const int layers = cfg.total_linear_layers();
  for (int l = 0; l < layers; ++l) {
    const int fan_in = (l == 0) ? cfg.in_dim : cfg.hidden_width;
    const int fan_out = (l == layers - 1) ? cfg.out_dim : cfg.hidden_width;
    const double omega = (l == 0) ? cfg.omega0_first : cfg.omega0_hidden;
    const double bound =
        (l == 0) ? 1.0 / cfg.in_dim : std::sqrt(6.0 / fan_in) / omega;
    Mat<Scalar> w(fan_in, fan_out);
    for (Index e = 0; e < w.size(); ++e)
      w.data()[e] = static_cast<Scalar>(rng.uniform(-bound, bound));
    Mat<Scalar> b(1, fan_out);
    for (Index e = 0; e < b.size(); ++e)
      b.data()[e] = static_cast<Scalar>(rng.uniform(-bound, bound));
    p.weights.push_back(std::move(w));
    p.biases.push_back(std::move(b));
  }
  return p;
}

// Records the network onto a tape. Parameter leaves are created here in
// param_set() order so gradients line up with the optimizer state.
template <class Scalar>
TapeNet<Scalar> siren_on_tape(Tape<Scalar>& tape, const SirenConfig& cfg,
                              const SirenParams<Scalar>& p, VarId coords) {
  if (static_cast<int>(p.weights.size()) != cfg.total_linear_layers())
    throw ConfigError("siren_on_tape: parameter/layer count mismatch");
  TapeNet<Scalar> net;
  const int layers = cfg.total_linear_layers();
  std::vector<VarId> wid(layers), bid(layers);
  for (int l = 0; l < layers; ++l) {
    const Mat<Scalar>& w = p.weights[l];
    const Mat<Scalar>& b = p.biases[l];
    wid[l] = tape.leaf(w, static_cast<int>(w.rows()), 1, static_cast<int>(w.cols()), true);
    bid[l] = tape.leaf(b, 1, 1, static_cast<int>(b.cols()), true);
    net.params.push_back(wid[l]);
    net.params.push_back(bid[l]);
  }
  VarId h = coords;
  for (int l = 0; l < layers; ++l) {
    h = tape.add_bias(tape.dense(h, wid[l]), bid[l]);
    if (l < layers - 1) {
      const double omega = (l == 0) ? cfg.omega0_first : cfg.omega0_hidden;
      h = tape.sin_act(h, static_cast<Scalar>(omega));
    } else if (cfg.output_activation == OutputActivation::Sigmoid) {
      h = tape.sigmoid(h);
    }
  }
  net.output = h;
  return net;
}

// Pure forward evaluation; reshaping the row-major output gives H x W x 3.
template <class Scalar>
Image<Scalar> siren_forward(const SirenParams<Scalar>& p, const SirenConfig& cfg,
                            const CoordinateGrid<Scalar>& grid) {
  if (!p.all_finite()) throw ConfigError("siren_forward: non-finite parameters");
  Tape<Scalar> tape;
  VarId coords = tape.leaf(grid.uv, grid.height, grid.width, 2, false);
  auto net = siren_on_tape(tape, cfg, p, coords);
  return tape.value_image(net.output);
}

}  // namespace lensless
