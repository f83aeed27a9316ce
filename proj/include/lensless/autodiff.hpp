// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode gradient engine over the closed operator set the
// reconstruction pipelines need. A Tape records primitive applications in
// order; backward() replays them in exact reverse order, accumulating
// vector-Jacobian products into per-node gradient buffers.
//
// Values are (h*w) x c matrices: networks treat them as plain N x C blocks,
// spatial primitives (fft-conv2d, bilinear upsample) use the carried (h, w).
// Everything runs single-threaded and allocation-ordered, so identical tapes
// produce bit-identical gradients.

#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "lensless/forward_model.hpp"
#include "lensless/image.hpp"

namespace lensless {

struct VarId {
  int idx = -1;
  bool valid() const { return idx >= 0; }
};

enum class OpKind {
  Leaf,
  Dense,
  AddBias,
  SinAct,
  Relu,
  Sigmoid,
  Scale,
  ChannelNorm,
  Upsample2x,
  FftConv2d,
  MseLoss,
  L1Loss,
};

inline const char* op_name(OpKind k) {
  switch (k) {
    case OpKind::Leaf: return "leaf";
    case OpKind::Dense: return "dense";
    case OpKind::AddBias: return "add-bias";
    case OpKind::SinAct: return "sin-activation";
    case OpKind::Relu: return "relu";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::Scale: return "scale";
    case OpKind::ChannelNorm: return "channel-norm";
    case OpKind::Upsample2x: return "bilinear-upsample";
    case OpKind::FftConv2d: return "fft-conv2d";
    case OpKind::MseLoss: return "mse-loss";
    case OpKind::L1Loss: return "l1-loss";
  }
  return "?";
}

template <class Scalar>
class Tape {
 public:
  struct Node {
    OpKind kind = OpKind::Leaf;
    int in0 = -1, in1 = -1, in2 = -1;
    int h = 0, w = 0, c = 0;  // value is (h*w) x c
    bool requires_grad = false;
    bool grad_set = false;
    Scalar alpha{};         // omega for sin-activation, factor for scale, eps for channel-norm
    Mat<Scalar> value;
    Mat<Scalar> saved;      // channel-norm: normalized values before affine
    Mat<Scalar> saved2;     // channel-norm: per-channel 1/sqrt(var+eps)
    Mat<Scalar> grad;
    std::shared_ptr<const ConvPlan<Scalar>> plan;
  };

  // --- recording -----------------------------------------------------------

  VarId leaf(Mat<Scalar> value, int h, int w, int c, bool requires_grad) {
    if (value.rows() != static_cast<Index>(h) * w || value.cols() != c)
      throw ShapeError(shape_msg("leaf", h, w, c) + ": storage mismatch");
    Node n;
    n.kind = OpKind::Leaf;
    n.h = h;
    n.w = w;
    n.c = c;
    n.requires_grad = requires_grad;
    n.value = std::move(value);
    return push(std::move(n));
  }

  VarId leaf(const Image<Scalar>& img, bool requires_grad) {
    return leaf(img.data, img.height, img.width, img.channels, requires_grad);
  }

  // Matrix product against a weight leaf stored as (rows x 1 x cols).
  VarId dense(VarId x, VarId w) {
    const Node& a = node(x);
    const Node& b = node(w);
    if (b.w != 1 || a.c != b.h)
      throw ShapeError(std::string("dense: input ") + dims(a) + " incompatible with weight " +
                       dims(b));
    Node n = make(OpKind::Dense, x, w, a.h, a.w, b.c);
    n.value.noalias() = a.value * b.value;
    return push(std::move(n));
  }

  VarId add_bias(VarId x, VarId b) {
    const Node& a = node(x);
    const Node& bias = node(b);
    if (bias.h != 1 || bias.w != 1 || bias.c != a.c)
      throw ShapeError(std::string("add-bias: input ") + dims(a) + " incompatible with bias " +
                       dims(bias));
    Node n = make(OpKind::AddBias, x, b, a.h, a.w, a.c);
    n.value = a.value.rowwise() + bias.value.row(0);
    return push(std::move(n));
  }

  VarId sin_act(VarId x, Scalar omega) {
    const Node& a = node(x);
    Node n = make(OpKind::SinAct, x, VarId{}, a.h, a.w, a.c);
    n.alpha = omega;
    n.value = (omega * a.value.array()).sin().matrix();
    return push(std::move(n));
  }

  VarId relu(VarId x) {
    const Node& a = node(x);
    Node n = make(OpKind::Relu, x, VarId{}, a.h, a.w, a.c);
    n.value = a.value.cwiseMax(Scalar(0));
    return push(std::move(n));
  }

  VarId sigmoid(VarId x) {
    const Node& a = node(x);
    Node n = make(OpKind::Sigmoid, x, VarId{}, a.h, a.w, a.c);
    n.value = (Scalar(1) / (Scalar(1) + (-a.value.array()).exp())).matrix();
    return push(std::move(n));
  }

  VarId scale(VarId x, Scalar factor) {
    const Node& a = node(x);
    Node n = make(OpKind::Scale, x, VarId{}, a.h, a.w, a.c);
    n.alpha = factor;
    n.value = factor * a.value;
    return push(std::move(n));
  }

  // Per-channel normalization over the spatial rows followed by a learned
  // affine: y = gamma * (x - mean) / sqrt(var + eps) + beta.
  VarId channel_norm(VarId x, VarId gamma, VarId beta, Scalar eps) {
    const Node& a = node(x);
    const Node& g = node(gamma);
    const Node& b = node(beta);
    if (g.h != 1 || g.w != 1 || g.c != a.c || b.h != 1 || b.w != 1 || b.c != a.c)
      throw ShapeError(std::string("channel-norm: input ") + dims(a) +
                       " incompatible with affine " + dims(g) + ", " + dims(b));
    Node n = make(OpKind::ChannelNorm, x, gamma, a.h, a.w, a.c);
    n.in2 = beta.idx;
    n.alpha = eps;
    const Index rows = a.value.rows();
    const Scalar inv_rows = Scalar(1) / static_cast<Scalar>(rows);
    Eigen::Matrix<Scalar, 1, Eigen::Dynamic> mean = a.value.colwise().mean();
    Mat<Scalar> centered = a.value.rowwise() - mean;
    Eigen::Matrix<Scalar, 1, Eigen::Dynamic> var =
        centered.array().square().colwise().sum().matrix() * inv_rows;
    Eigen::Matrix<Scalar, 1, Eigen::Dynamic> inv_std =
        (var.array() + eps).sqrt().inverse().matrix();
    n.saved = (centered.array().rowwise() * inv_std.array()).matrix();  // xhat
    n.saved2 = inv_std;
    n.value = (n.saved.array().rowwise() * g.value.row(0).array()).matrix();
    n.value = n.value.rowwise() + b.value.row(0);
    return push(std::move(n));
  }

  VarId upsample2x(VarId x) {
    const Node& a = node(x);
    if (a.h < 1 || a.w < 1)
      throw ShapeError(std::string("bilinear-upsample: input ") + dims(a));
    Node n = make(OpKind::Upsample2x, x, VarId{}, 2 * a.h, 2 * a.w, a.c);
    n.value.setZero(static_cast<Index>(n.h) * n.w, n.c);
    upsample_apply(a.value, a.h, a.w, a.c, n.value, /*adjoint=*/false);
    return push(std::move(n));
  }

  VarId fft_conv2d(VarId x, std::shared_ptr<const ConvPlan<Scalar>> plan) {
    const Node& a = node(x);
    if (plan->image_height() != a.h || plan->image_width() != a.w ||
        plan->image_channels() != a.c)
      throw ShapeError(std::string("fft-conv2d: input ") + dims(a) + " does not match plan (" +
                       std::to_string(plan->image_height()) + "," +
                       std::to_string(plan->image_width()) + "," +
                       std::to_string(plan->image_channels()) + ")");
    Node n = make(OpKind::FftConv2d, x, VarId{}, a.h, a.w, a.c);
    n.plan = plan;
    Image<Scalar> in(a.h, a.w, a.c, a.value);
    n.value = plan->convolve(in).data;
    return push(std::move(n));
  }

  VarId mse_loss(VarId a_id, VarId b_id) { return loss_node(OpKind::MseLoss, a_id, b_id); }
  VarId l1_loss(VarId a_id, VarId b_id) { return loss_node(OpKind::L1Loss, a_id, b_id); }

  // --- access ----------------------------------------------------------------

  const Mat<Scalar>& value(VarId id) const { return node(id).value; }
  int height(VarId id) const { return node(id).h; }
  int width(VarId id) const { return node(id).w; }
  int channels(VarId id) const { return node(id).c; }

  Image<Scalar> value_image(VarId id) const {
    const Node& n = node(id);
    return Image<Scalar>(n.h, n.w, n.c, n.value);
  }

  // Gradient of the last backward() pass; zeros for untouched nodes.
  Mat<Scalar> grad_or_zero(VarId id) const {
    const Node& n = node(id);
    if (n.grad_set) return n.grad;
    return Mat<Scalar>::Zero(n.value.rows(), n.value.cols());
  }

  // (VarId, gradient) for every requires-grad leaf the backward pass reached.
  std::vector<std::pair<VarId, const Mat<Scalar>*>> parameter_gradients() const {
    std::vector<std::pair<VarId, const Mat<Scalar>*>> out;
    for (int i = 0; i < static_cast<int>(nodes_.size()); ++i) {
      const Node& n = nodes_[i];
      if (n.kind == OpKind::Leaf && n.requires_grad && n.grad_set)
        out.emplace_back(VarId{i}, &n.grad);
    }
    return out;
  }

  // --- backward --------------------------------------------------------------

  void backward(VarId root, Scalar seed_grad) {
    Node& r = node(root);
    if (r.value.size() != 1)
      throw ShapeError(std::string("backward: terminal node ") + dims(r) + " is not scalar");
    for (Node& n : nodes_) {
      n.grad_set = false;
      n.grad.resize(0, 0);
    }
    if (!r.requires_grad) return;  // no parameters anywhere upstream
    accumulate(root.idx, Mat<Scalar>::Constant(1, 1, seed_grad));

    for (int i = root.idx; i >= 0; --i) {
      Node& n = nodes_[i];
      if (!n.grad_set || n.kind == OpKind::Leaf) continue;
      const Mat<Scalar>& g = n.grad;
      switch (n.kind) {
        case OpKind::Dense: {
          const Node& x = nodes_[n.in0];
          const Node& w = nodes_[n.in1];
          if (x.requires_grad) accumulate(n.in0, g * w.value.transpose());
          if (w.requires_grad) accumulate(n.in1, x.value.transpose() * g);
          break;
        }
        case OpKind::AddBias: {
          if (nodes_[n.in0].requires_grad) accumulate(n.in0, g);
          if (nodes_[n.in1].requires_grad) accumulate(n.in1, g.colwise().sum());
          break;
        }
        case OpKind::SinAct: {
          if (nodes_[n.in0].requires_grad) {
            const Mat<Scalar>& z = nodes_[n.in0].value;
            accumulate(n.in0,
                       (g.array() * (n.alpha * z.array()).cos() * n.alpha).matrix());
          }
          break;
        }
        case OpKind::Relu: {
          if (nodes_[n.in0].requires_grad)
            accumulate(n.in0, (g.array() *
                               (nodes_[n.in0].value.array() > Scalar(0)).template cast<Scalar>())
                                  .matrix());
          break;
        }
        case OpKind::Sigmoid: {
          if (nodes_[n.in0].requires_grad)
            accumulate(n.in0,
                       (g.array() * n.value.array() * (Scalar(1) - n.value.array())).matrix());
          break;
        }
        case OpKind::Scale: {
          if (nodes_[n.in0].requires_grad) accumulate(n.in0, n.alpha * g);
          break;
        }
        case OpKind::ChannelNorm: {
          const Node& x = nodes_[n.in0];
          const Node& gam = nodes_[n.in1];
          if (nodes_[n.in2].requires_grad) accumulate(n.in2, g.colwise().sum());
          if (gam.requires_grad)
            accumulate(n.in1, (g.array() * n.saved.array()).colwise().sum().matrix());
          if (x.requires_grad) {
            const Index rows = g.rows();
            const Scalar inv_rows = Scalar(1) / static_cast<Scalar>(rows);
            Mat<Scalar> dxhat = (g.array().rowwise() * gam.value.row(0).array()).matrix();
            Eigen::Matrix<Scalar, 1, Eigen::Dynamic> sum_d = dxhat.colwise().sum();
            Eigen::Matrix<Scalar, 1, Eigen::Dynamic> sum_dx =
                (dxhat.array() * n.saved.array()).colwise().sum().matrix();
            Mat<Scalar> dx =
                ((dxhat.array() - (inv_rows * sum_d).replicate(rows, 1).array() -
                  n.saved.array() * (inv_rows * sum_dx).replicate(rows, 1).array())
                     .rowwise() *
                 n.saved2.row(0).array())
                    .matrix();
            accumulate(n.in0, std::move(dx));
          }
          break;
        }
        case OpKind::Upsample2x: {
          if (nodes_[n.in0].requires_grad) {
            const Node& x = nodes_[n.in0];
            Mat<Scalar> dx = Mat<Scalar>::Zero(x.value.rows(), x.value.cols());
            upsample_apply(g, x.h, x.w, x.c, dx, /*adjoint=*/true);
            accumulate(n.in0, std::move(dx));
          }
          break;
        }
        case OpKind::FftConv2d: {
          if (nodes_[n.in0].requires_grad) {
            Image<Scalar> gi(n.h, n.w, n.c, g);
            accumulate(n.in0, n.plan->adjoint(gi).data);
          }
          break;
        }
        case OpKind::MseLoss: {
          const Node& a = nodes_[n.in0];
          const Node& b = nodes_[n.in1];
          const Scalar coef =
              g(0, 0) * Scalar(2) / static_cast<Scalar>(a.value.size());
          if (a.requires_grad) accumulate(n.in0, coef * (a.value - b.value));
          if (b.requires_grad) accumulate(n.in1, coef * (b.value - a.value));
          break;
        }
        case OpKind::L1Loss: {
          const Node& a = nodes_[n.in0];
          const Node& b = nodes_[n.in1];
          const Scalar coef = g(0, 0) / static_cast<Scalar>(a.value.size());
          Mat<Scalar> s = (a.value - b.value)
                              .array()
                              .unaryExpr([](Scalar v) {
                                return v > Scalar(0) ? Scalar(1)
                                                     : (v < Scalar(0) ? Scalar(-1) : Scalar(0));
                              })
                              .matrix();
          if (a.requires_grad) accumulate(n.in0, coef * s);
          if (b.requires_grad) accumulate(n.in1, Scalar(-coef) * s);
          break;
        }
        case OpKind::Leaf:
          break;
      }
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  Node& node(VarId id) {
    if (!id.valid() || id.idx >= static_cast<int>(nodes_.size()))
      throw ShapeError("tape: invalid variable id");
    return nodes_[id.idx];
  }
  const Node& node(VarId id) const { return const_cast<Tape*>(this)->node(id); }

  static std::string dims(const Node& n) {
    return "(" + std::to_string(n.h) + "," + std::to_string(n.w) + "," + std::to_string(n.c) +
           ")";
  }
  static std::string shape_msg(const char* op, int h, int w, int c) {
    return std::string(op) + ": (" + std::to_string(h) + "," + std::to_string(w) + "," +
           std::to_string(c) + ")";
  }

  Node make(OpKind kind, VarId in0, VarId in1, int h, int w, int c) {
    Node n;
    n.kind = kind;
    n.in0 = in0.idx;
    n.in1 = in1.idx;
    n.h = h;
    n.w = w;
    n.c = c;
    n.requires_grad = (in0.valid() && node(in0).requires_grad) ||
                      (in1.valid() && node(in1).requires_grad);
    return n;
  }

  VarId push(Node n) {
    nodes_.push_back(std::move(n));
    return VarId{static_cast<int>(nodes_.size()) - 1};
  }

  VarId loss_node(OpKind kind, VarId a_id, VarId b_id) {
    const Node& a = node(a_id);
    const Node& b = node(b_id);
    if (a.h != b.h || a.w != b.w || a.c != b.c)
      throw ShapeError(std::string(op_name(kind)) + ": operands " + dims(a) + " vs " + dims(b));
    Node n = make(kind, a_id, b_id, 1, 1, 1);
    if (kind == OpKind::MseLoss)
      n.value = Mat<Scalar>::Constant(1, 1, (a.value - b.value).squaredNorm() /
                                                static_cast<Scalar>(a.value.size()));
    else
      n.value = Mat<Scalar>::Constant(
          1, 1, (a.value - b.value).cwiseAbs().sum() / static_cast<Scalar>(a.value.size()));
    return push(std::move(n));
  }

  void accumulate(int idx, Mat<Scalar> g) {
    Node& n = nodes_[idx];
    if (!n.grad_set) {
      n.grad = std::move(g);
      n.grad_set = true;
    } else {
      n.grad += g;
    }
  }

  // Bilinear 2x upsampling as an explicit 4-tap linear map; the adjoint
  // scatters with the same weights, so <up(x), g> == <x, up^T(g)> exactly.
  static void upsample_apply(const Mat<Scalar>& src, int in_h, int in_w, int c,
                             Mat<Scalar>& dst, bool adjoint) {
    struct Tap {
      int lo, hi;
      Scalar w_lo, w_hi;
    };
    auto make_taps = [](int in_n) {
      std::vector<Tap> taps(2 * in_n);
      for (int i = 0; i < 2 * in_n; ++i) {
        const double s = 0.5 * (i + 0.5) - 0.5;
        const double fl = std::floor(s);
        int lo = static_cast<int>(fl);
        const double frac = s - fl;
        int hi = std::min(lo + 1, in_n - 1);
        lo = std::max(lo, 0);
        taps[i] = {lo, hi, static_cast<Scalar>(1.0 - frac), static_cast<Scalar>(frac)};
      }
      return taps;
    };
    const auto ty = make_taps(in_h);
    const auto tx = make_taps(in_w);
    const int out_w = 2 * in_w;
    for (int ch = 0; ch < c; ++ch) {
      const Scalar* s = nullptr;
      Scalar* d = nullptr;
      if (!adjoint) {
        s = src.col(ch).data();
        d = dst.col(ch).data();
      } else {
        s = src.col(ch).data();  // gradient at output resolution
        d = dst.col(ch).data();  // scatter target at input resolution
      }
      for (int i = 0; i < 2 * in_h; ++i) {
        for (int j = 0; j < out_w; ++j) {
          const Tap& a = ty[i];
          const Tap& b = tx[j];
          if (!adjoint) {
            d[static_cast<Index>(i) * out_w + j] =
                a.w_lo * (b.w_lo * s[static_cast<Index>(a.lo) * in_w + b.lo] +
                          b.w_hi * s[static_cast<Index>(a.lo) * in_w + b.hi]) +
                a.w_hi * (b.w_lo * s[static_cast<Index>(a.hi) * in_w + b.lo] +
                          b.w_hi * s[static_cast<Index>(a.hi) * in_w + b.hi]);
          } else {
            const Scalar gv = s[static_cast<Index>(i) * out_w + j];
            d[static_cast<Index>(a.lo) * in_w + b.lo] += a.w_lo * b.w_lo * gv;
            d[static_cast<Index>(a.lo) * in_w + b.hi] += a.w_lo * b.w_hi * gv;
            d[static_cast<Index>(a.hi) * in_w + b.lo] += a.w_hi * b.w_lo * gv;
            d[static_cast<Index>(a.hi) * in_w + b.hi] += a.w_hi * b.w_hi * gv;
          }
        }
      }
    }
  }

  std::vector<Node> nodes_;
};

// A network recorded onto a tape: parameter leaves (in ParamSet order) plus
// the output node.
template <class Scalar>
struct TapeNet {
  std::vector<VarId> params;
  VarId output;
};

// --- gradient checking -------------------------------------------------------

// Named list of parameter tensors; the order fixes gradient, optimizer state
// and checkpoint layout.
template <class Scalar>
struct ParamSet {
  std::vector<std::string> names;
  std::vector<Mat<Scalar>*> tensors;

  void add(const std::string& name, Mat<Scalar>* t) {
    names.push_back(name);
    tensors.push_back(t);
  }
  std::size_t size() const { return tensors.size(); }
  Index scalar_count() const {
    Index n = 0;
    for (const auto* t : tensors) n += t->size();
    return n;
  }
};

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
};

struct GradCheckReport {
  bool pass = false;
  bool non_finite = false;  // loss evaluated non-finite at some point
  double max_rel_err = 0.0;
  std::vector<GradCheckEntry> per_parameter;
};

// Central-difference check of a deterministic scalar loss against the tape
// gradients. The builder receives a tape whose first size() leaves mirror the
// ParamSet in order; it must return the loss node. The per-parameter relative
// error is L2-normalized over the whole tensor, which keeps the check
// sensitive to systematic VJP bugs without tripping on the difference
// quotient's own truncation error in isolated high-curvature entries.
template <class Scalar>
GradCheckReport check_gradients(
    const std::function<VarId(Tape<Scalar>&, const std::vector<VarId>&)>& builder,
    ParamSet<Scalar>& params, Scalar step, double tolerance) {
  if (!(step > Scalar(0))) throw ConfigError("check_gradients: step must be positive");
  GradCheckReport report;
  report.per_parameter.resize(params.size());

  auto eval = [&](bool with_grad) {
    Tape<Scalar> tape;
    std::vector<VarId> ids;
    ids.reserve(params.size());
    for (std::size_t p = 0; p < params.size(); ++p) {
      const Mat<Scalar>& t = *params.tensors[p];
      // Parameter tensors are carried as (rows x 1 x cols) leaves.
      ids.push_back(tape.leaf(t, static_cast<int>(t.rows()), 1, static_cast<int>(t.cols()),
                              with_grad));
    }
    VarId loss = builder(const_cast<Tape<Scalar>&>(tape), ids);
    return std::pair<Tape<Scalar>, VarId>(std::move(tape), loss);
  };

  // Analytic pass.
  auto [tape, loss_id] = eval(true);
  const double loss0 = static_cast<double>(tape.value(loss_id)(0, 0));
  if (!std::isfinite(loss0)) {
    report.non_finite = true;
    return report;
  }
  tape.backward(loss_id, Scalar(1));
  std::vector<Mat<Scalar>> analytic;
  analytic.reserve(params.size());
  for (std::size_t p = 0; p < params.size(); ++p)
    analytic.push_back(tape.grad_or_zero(VarId{static_cast<int>(p)}));

  for (std::size_t p = 0; p < params.size(); ++p) {
    Mat<Scalar>& t = *params.tensors[p];
    GradCheckEntry& entry = report.per_parameter[p];
    entry.name = params.names[p];
    Mat<double> numeric(t.rows(), t.cols());
    for (Index e = 0; e < t.size(); ++e) {
      const Scalar saved = t.data()[e];
      t.data()[e] = saved + step;
      auto [tp, lp] = eval(false);
      const double fp = static_cast<double>(tp.value(lp)(0, 0));
      t.data()[e] = saved - step;
      auto [tm, lm] = eval(false);
      const double fm = static_cast<double>(tm.value(lm)(0, 0));
      t.data()[e] = saved;
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        report.non_finite = true;
        numeric.data()[e] = 0.0;
        continue;
      }
      numeric.data()[e] = (fp - fm) / (2.0 * static_cast<double>(step));
    }
    const Mat<double> a = analytic[p].template cast<double>();
    entry.max_rel_err = (a - numeric).norm() / std::max({a.norm(), numeric.norm(), 1e-12});
    report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
  }
  report.pass = !report.non_finite && report.max_rel_err <= tolerance;
  return report;
}

}  // namespace lensless
