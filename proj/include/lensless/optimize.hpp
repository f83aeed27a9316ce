// SPDX-License-Identifier: Apache-2.0
//
// Optimization procedures: untrained reconstruction through the forward
// model, prior embedding (direct MSE fit of the coordinate MLP to an image),
// and prior-initialized reconstruction. Each run is sequential and owns its
// state; independent runs can execute in parallel.
//
// Per step: x~ = net(coords); y~ = k * x~ (reconstruction only);
// loss = L(y~, y) + weight_decay * ||theta||^2; gradients via the tape;
// Adam or plain SGD update. A non-finite loss or gradient aborts the run and
// returns the trace up to the failure.

#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "lensless/checkpoint.hpp"
#include "lensless/decoder.hpp"
#include "lensless/forward_model.hpp"
#include "lensless/metrics.hpp"
#include "lensless/siren.hpp"

namespace lensless {

enum class LossKind { Mse, L1 };
enum class OptimizerKind { Adam, Sgd };

inline constexpr double kDefaultSirenLr = 1e-4;
inline constexpr double kDefaultDecoderLr = 1e-2;

template <class Scalar>
struct OptimizerState {
  OptimizerKind kind = OptimizerKind::Adam;
  Scalar learning_rate = Scalar(1e-4);
  Scalar beta1 = Scalar(0.9);
  Scalar beta2 = Scalar(0.999);
  Scalar epsilon = Scalar(1e-8);
  long step_count = 0;
  std::vector<Mat<Scalar>> m1, m2;  // first/second moments, shape-matched lazily
};

// One update. Moments are allocated on first use; step_count increments by
// exactly one per call. With all-zero gradients and fresh state the
// parameters are unchanged.
template <class Scalar>
void optimizer_step(ParamSet<Scalar>& params, const std::vector<Mat<Scalar>>& grads,
                    OptimizerState<Scalar>& st) {
  if (grads.size() != params.size())
    throw ShapeError("optimizer_step: gradient/parameter count mismatch");
  if (st.kind == OptimizerKind::Sgd) {
    ++st.step_count;
    for (std::size_t i = 0; i < params.size(); ++i)
      *params.tensors[i] -= st.learning_rate * grads[i];
    return;
  }
  if (st.m1.empty()) {
    st.m1.resize(params.size());
    st.m2.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      st.m1[i] = Mat<Scalar>::Zero(params.tensors[i]->rows(), params.tensors[i]->cols());
      st.m2[i] = st.m1[i];
    }
  }
  ++st.step_count;
  const Scalar bc1 = Scalar(1) - static_cast<Scalar>(
                                     std::pow(static_cast<double>(st.beta1), st.step_count));
  const Scalar bc2 = Scalar(1) - static_cast<Scalar>(
                                     std::pow(static_cast<double>(st.beta2), st.step_count));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Mat<Scalar>& g = grads[i];
    Mat<Scalar>& m = st.m1[i];
    Mat<Scalar>& v = st.m2[i];
    if (m.rows() != g.rows() || m.cols() != g.cols())
      throw ShapeError("optimizer_step: moment/gradient shape mismatch");
    m = st.beta1 * m + (Scalar(1) - st.beta1) * g;
    v = (st.beta2 * v.array() + (Scalar(1) - st.beta2) * g.array().square()).matrix();
    params.tensors[i]->array() -=
        st.learning_rate * (m.array() / bc1) / ((v.array() / bc2).sqrt() + st.epsilon);
  }
}

struct RunOptions {
  long total_steps = 2000;
  long summary_interval = 100;
  LossKind loss = LossKind::Mse;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
  long checkpoint_interval = 0;   // 0 = final checkpoint only
  double learning_rate = 0.0;     // <= 0 picks the per-network default
  OptimizerKind optimizer = OptimizerKind::Adam;
  bool deterministic = true;      // zeroes wall-clock in exported traces

  void validate() const {
    if (total_steps < 0) throw ConfigError("RunOptions: total_steps must be >= 0");
    if (total_steps > 0 && (summary_interval < 1 || summary_interval > total_steps))
      throw ConfigError("RunOptions: summary_interval must be in [1, total_steps]");
    if (weight_decay < 0.0) throw ConfigError("RunOptions: weight_decay must be >= 0");
  }
};

struct TraceRow {
  long step = 0;
  double loss = std::numeric_limits<double>::quiet_NaN();
  double psnr_db = std::numeric_limits<double>::quiet_NaN();
  double ssim_val = std::numeric_limits<double>::quiet_NaN();
  double wall_ms = 0.0;
};

struct RunRecord {
  std::string net_summary;
  std::uint64_t seed = 0;
  long param_count = 0;
  std::vector<TraceRow> trace;
  bool diverged = false;
  long diverged_step = -1;
  double final_loss = std::numeric_limits<double>::quiet_NaN();
  double final_psnr = std::numeric_limits<double>::quiet_NaN();
  double final_ssim = std::numeric_limits<double>::quiet_NaN();
  double total_wall_ms = 0.0;
  std::string checkpoint_ref;
};

// `step,loss,psnr_db,ssim,wall_ms` with empty metric fields when there was
// no ground truth. Deterministic mode writes wall_ms as 0 so repeated runs
// produce byte-identical files.
inline void write_trace_csv(const RunRecord& rec, const std::string& path, bool zero_wall) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write trace: " + path);
  os << "step,loss,psnr_db,ssim,wall_ms\n";
  char buf[160];
  for (const TraceRow& r : rec.trace) {
    std::snprintf(buf, sizeof buf, "%ld,%.9g,", r.step, r.loss);
    os << buf;
    if (std::isfinite(r.psnr_db)) {
      std::snprintf(buf, sizeof buf, "%.6f", r.psnr_db);
      os << buf;
    }
    os << ',';
    if (std::isfinite(r.ssim_val)) {
      std::snprintf(buf, sizeof buf, "%.6f", r.ssim_val);
      os << buf;
    }
    std::snprintf(buf, sizeof buf, ",%.3f\n", zero_wall ? 0.0 : r.wall_ms);
    os << buf;
  }
  if (!os) throw IoError("failed writing trace: " + path);
}

namespace detail {

template <class Scalar>
struct StepGraph {
  VarId prediction;
  VarId loss;
  std::vector<VarId> params;
};

// Shared loop. `build` records the full per-step graph (parameter leaves in
// ParamSet order, prediction, loss) onto a fresh tape.
template <class Scalar, class BuildFn>
RunRecord optimize_loop(ParamSet<Scalar>& pset, const BuildFn& build, const RunOptions& opts,
                        const Image<Scalar>* truth, double default_lr) {
  opts.validate();
  RunRecord rec;
  rec.seed = opts.seed;
  rec.param_count = pset.scalar_count();

  OptimizerState<Scalar> st;
  st.kind = opts.optimizer;
  st.learning_rate = static_cast<Scalar>(opts.learning_rate > 0.0 ? opts.learning_rate
                                                                  : default_lr);
  const long total = opts.total_steps;
  const long interval = total > 0 ? opts.summary_interval : 1;
  const auto t_start = std::chrono::steady_clock::now();
  auto elapsed_ms = [&] {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t_start)
        .count();
  };
  const Scalar wd = static_cast<Scalar>(opts.weight_decay);

  auto record_row = [&](long step, double loss_val, const Image<Scalar>& pred) {
    TraceRow row;
    row.step = step;
    row.loss = loss_val;
    row.wall_ms = elapsed_ms();
    if (truth != nullptr) {
      const Image<Scalar> clamped = clamp01(pred);
      row.psnr_db = psnr(clamped, *truth);
      row.ssim_val = ssim(clamped, *truth);
    }
    rec.trace.push_back(row);
  };

  if (total == 0) {
    Tape<Scalar> tape;
    StepGraph<Scalar> g = build(tape);
    record_row(0, static_cast<double>(tape.value(g.loss)(0, 0)), tape.value_image(g.prediction));
  }

  for (long t = 1; t <= total; ++t) {
    Tape<Scalar> tape;
    StepGraph<Scalar> g = build(tape);
    double loss_val = static_cast<double>(tape.value(g.loss)(0, 0));
    if (wd > Scalar(0)) {
      double reg = 0.0;
      for (const auto* p : pset.tensors) reg += static_cast<double>(p->squaredNorm());
      loss_val += static_cast<double>(wd) * reg;
    }

    bool bad = !std::isfinite(loss_val);
    std::vector<Mat<Scalar>> grads;
    if (!bad) {
      tape.backward(g.loss, Scalar(1));
      grads.reserve(g.params.size());
      for (std::size_t i = 0; i < g.params.size(); ++i) {
        Mat<Scalar> gr = tape.grad_or_zero(g.params[i]);
        if (wd > Scalar(0)) gr += Scalar(2) * wd * (*pset.tensors[i]);
        if (!gr.allFinite()) bad = true;
        grads.push_back(std::move(gr));
      }
    }
    if (bad) {
      rec.diverged = true;
      rec.diverged_step = t;
      record_row(t, loss_val, tape.value_image(g.prediction));
      break;
    }
    if (t % interval == 0 || t == total)
      record_row(t, loss_val, tape.value_image(g.prediction));
    optimizer_step(pset, grads, st);
  }

  rec.total_wall_ms = elapsed_ms();
  if (!rec.trace.empty()) {
    rec.final_loss = rec.trace.back().loss;
    rec.final_psnr = rec.trace.back().psnr_db;
    rec.final_ssim = rec.trace.back().ssim_val;
  }
  return rec;
}

template <class Scalar>
VarId make_loss(Tape<Scalar>& tape, LossKind kind, VarId a, VarId b) {
  return kind == LossKind::Mse ? tape.mse_loss(a, b) : tape.l1_loss(a, b);
}

}  // namespace detail

using NetConfig = std::variant<SirenConfig, DecoderConfig>;

template <class Scalar>
struct ReconResult {
  Image<Scalar> image;  // final rendering, clamped to [0,1]
  RunRecord record;
  std::variant<SirenParams<Scalar>, DecoderParams<Scalar>> params;
};

template <class Scalar>
struct EmbedResult {
  SirenParams<Scalar> params;
  double fidelity_psnr = 0.0;  // PSNR of the embedding against the prior image
  RunRecord record;
};

namespace detail {

template <class Scalar>
RunRecord reconstruct_siren_loop(const Image<Scalar>& y, const Psf<Scalar>& k,
                                 const SirenConfig& cfg, SirenParams<Scalar>& params,
                                 const RunOptions& opts, const Image<Scalar>* truth) {
  cfg.validate();
  if (y.channels != cfg.out_dim)
    throw ShapeError("reconstruct: measurement has " + std::to_string(y.channels) +
                     " channels, network emits " + std::to_string(cfg.out_dim));
  if (!y.all_finite()) throw ShapeError("reconstruct: non-finite measurement");
  const auto grid = make_coordinate_grid<Scalar>(y.height, y.width);
  auto plan = std::make_shared<ConvPlan<Scalar>>(k, y.height, y.width, y.channels);
  ParamSet<Scalar> pset = params.param_set();

  auto build = [&](Tape<Scalar>& tape) {
    StepGraph<Scalar> g;
    VarId coords = tape.leaf(grid.uv, grid.height, grid.width, 2, false);
    auto net = siren_on_tape(tape, cfg, params, coords);
    VarId target = tape.leaf(y, false);
    g.prediction = net.output;
    g.loss = make_loss(tape, opts.loss, tape.fft_conv2d(net.output, plan), target);
    g.params = net.params;
    return g;
  };
  RunRecord rec = optimize_loop(pset, build, opts, truth, kDefaultSirenLr);
  rec.net_summary = "inr(width=" + std::to_string(cfg.hidden_width) +
                    ",hidden=" + std::to_string(cfg.hidden_layers) + ")";
  return rec;
}

}  // namespace detail

// Algorithm: fit the network to the measurement through the known PSF,
// starting from a fresh random initialization.
template <class Scalar>
ReconResult<Scalar> reconstruct_untrained(const Image<Scalar>& y, const Psf<Scalar>& k,
                                          const SirenConfig& cfg, const RunOptions& opts,
                                          const Image<Scalar>* truth = nullptr) {
  SirenParams<Scalar> params = init_siren<Scalar>(cfg, opts.seed);
  RunRecord rec = detail::reconstruct_siren_loop(y, k, cfg, params, opts, truth);
  ReconResult<Scalar> out{clamp01(siren_forward(params, cfg, make_coordinate_grid<Scalar>(
                                                                y.height, y.width))),
                          std::move(rec), std::move(params)};
  return out;
}

template <class Scalar>
ReconResult<Scalar> reconstruct_untrained(const Image<Scalar>& y, const Psf<Scalar>& k,
                                          const DecoderConfig& cfg, const RunOptions& opts,
                                          const Image<Scalar>* truth = nullptr) {
  cfg.validate();
  if (cfg.out_height != y.height || cfg.out_width != y.width)
    throw ConfigError("reconstruct: decoder output dims do not match the measurement");
  if (!y.all_finite()) throw ShapeError("reconstruct: non-finite measurement");
  DecoderParams<Scalar> params = init_decoder<Scalar>(cfg, opts.seed);
  auto plan = std::make_shared<ConvPlan<Scalar>>(k, y.height, y.width, y.channels);
  ParamSet<Scalar> pset = params.param_set();

  auto build = [&](Tape<Scalar>& tape) {
    detail::StepGraph<Scalar> g;
    VarId z = tape.leaf(params.latent, cfg.in_height(), cfg.in_width(), cfg.channels, false);
    auto net = decoder_on_tape(tape, cfg, params, z);
    VarId target = tape.leaf(y, false);
    g.prediction = net.output;
    g.loss = detail::make_loss(tape, opts.loss, tape.fft_conv2d(net.output, plan), target);
    g.params = net.params;
    return g;
  };
  RunRecord rec = detail::optimize_loop(pset, build, opts, truth, kDefaultDecoderLr);
  rec.net_summary = "mdd(k=" + std::to_string(cfg.channels) + ")";

  ReconResult<Scalar> out{clamp01(decoder_forward(params, cfg)), std::move(rec),
                          std::move(params)};
  return out;
}

template <class Scalar>
ReconResult<Scalar> reconstruct_untrained(const Image<Scalar>& y, const Psf<Scalar>& k,
                                          const NetConfig& cfg, const RunOptions& opts,
                                          const Image<Scalar>* truth = nullptr) {
  if (std::holds_alternative<SirenConfig>(cfg))
    return reconstruct_untrained(y, k, std::get<SirenConfig>(cfg), opts, truth);
  return reconstruct_untrained(y, k, std::get<DecoderConfig>(cfg), opts, truth);
}

// Prior embedding: fit the coordinate MLP directly to a prior image by MSE,
// producing the initialization for prior-initialized reconstruction.
template <class Scalar>
EmbedResult<Scalar> embed_prior(const Image<Scalar>& x_prior, const SirenConfig& cfg,
                                const RunOptions& opts) {
  cfg.validate();
  if (x_prior.channels != cfg.out_dim)
    throw ShapeError("embed_prior: image has " + std::to_string(x_prior.channels) +
                     " channels, network emits " + std::to_string(cfg.out_dim));
  if (!x_prior.all_finite()) throw ShapeError("embed_prior: non-finite prior image");
  const auto grid = make_coordinate_grid<Scalar>(x_prior.height, x_prior.width);
  SirenParams<Scalar> params = init_siren<Scalar>(cfg, opts.seed);
  ParamSet<Scalar> pset = params.param_set();

  auto build = [&](Tape<Scalar>& tape) {
    detail::StepGraph<Scalar> g;
    VarId coords = tape.leaf(grid.uv, grid.height, grid.width, 2, false);
    auto net = siren_on_tape(tape, cfg, params, coords);
    VarId target = tape.leaf(x_prior, false);
    g.prediction = net.output;
    // Embedding is defined as an MSE fit regardless of the run loss choice.
    g.loss = tape.mse_loss(net.output, target);
    g.params = net.params;
    return g;
  };
  RunRecord rec = detail::optimize_loop(pset, build, opts, &x_prior, kDefaultSirenLr);
  rec.net_summary = "inr(width=" + std::to_string(cfg.hidden_width) +
                    ",hidden=" + std::to_string(cfg.hidden_layers) + ")";

  EmbedResult<Scalar> out;
  out.fidelity_psnr = psnr(clamp01(siren_forward(params, cfg, grid)), x_prior);
  out.params = std::move(params);
  out.record = std::move(rec);
  return out;
}

template <class Scalar>
void validate_params_match(const SirenConfig& cfg, const SirenParams<Scalar>& p) {
  cfg.validate();
  if (static_cast<int>(p.weights.size()) != cfg.total_linear_layers())
    throw ConfigError("prior checkpoint layer count does not match the requested network");
  for (int l = 0; l < cfg.total_linear_layers(); ++l) {
    const int fan_in = (l == 0) ? cfg.in_dim : cfg.hidden_width;
    const int fan_out = (l == cfg.total_linear_layers() - 1) ? cfg.out_dim : cfg.hidden_width;
    if (p.weights[l].rows() != fan_in || p.weights[l].cols() != fan_out)
      throw ConfigError("prior checkpoint layer " + std::to_string(l) +
                        " shape does not match the requested network");
  }
}

// Identical loop to reconstruct_untrained, but initialized at the
// prior-embedded parameters instead of a random draw.
template <class Scalar>
ReconResult<Scalar> reconstruct_with_prior(const Image<Scalar>& y, const Psf<Scalar>& k,
                                           const SirenConfig& cfg,
                                           const SirenParams<Scalar>& prior,
                                           const RunOptions& opts,
                                           const Image<Scalar>* truth = nullptr) {
  validate_params_match(cfg, prior);
  SirenParams<Scalar> params = prior;
  RunRecord rec = detail::reconstruct_siren_loop(y, k, cfg, params, opts, truth);
  rec.net_summary += "+prior";
  ReconResult<Scalar> out{clamp01(siren_forward(params, cfg, make_coordinate_grid<Scalar>(
                                                                y.height, y.width))),
                          std::move(rec), std::move(params)};
  return out;
}

}  // namespace lensless
