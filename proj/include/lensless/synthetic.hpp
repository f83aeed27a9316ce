// SPDX-License-Identifier: Apache-2.0
//
// Procedural benchmark inputs: structured test scenes and diffuser-style
// caustic blur kernels, both deterministic functions of a seed. The caustic
// generator refracts a dense ray grid through a smooth random phase screen
// and accumulates ray density, which concentrates light along fold lines the
// way a physical diffuser does.

#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "lensless/image.hpp"
#include "lensless/rng.hpp"

namespace lensless {

struct CausticOptions {
  int waves = 12;            // phase-screen components
  double max_frequency = 5.0;
  double deflection = 0.10;  // ray displacement scale, as a fraction of the patch
  int supersample = 8;       // rays per patch pixel per axis
  double extent = 0.3;       // caustic patch size as a fraction of the frame
};

template <class Scalar>
Image<Scalar> make_caustic_psf(int height, int width, std::uint64_t seed,
                               const CausticOptions& opt = {}) {
  Rng rng(seed);
  struct Wave {
    double fx, fy, phase, amp;
  };
  std::vector<Wave> waves(opt.waves);
  for (auto& w : waves) {
    w.fx = rng.uniform(-opt.max_frequency, opt.max_frequency);
    w.fy = rng.uniform(-opt.max_frequency, opt.max_frequency);
    w.phase = rng.uniform(0.0, 2.0 * M_PI);
    w.amp = rng.uniform(0.4, 1.0);
  }
  auto grad_phi = [&](double x, double y, double& gx, double& gy) {
    gx = 0.0;
    gy = 0.0;
    for (const auto& w : waves) {
      const double arg = 2.0 * M_PI * (w.fx * x + w.fy * y) + w.phase;
      const double d = w.amp * std::cos(arg) * 2.0 * M_PI;
      gx += d * w.fx;
      gy += d * w.fy;
    }
  };

  // Accumulate ray density on a centred patch; outside it the kernel is
  // dark, like a cropped diffuser response.
  const int ph = std::max(3, static_cast<int>(std::lround(height * opt.extent)));
  const int pw = std::max(3, static_cast<int>(std::lround(width * opt.extent)));
  Mat<double> accum = Mat<double>::Zero(ph, pw);
  const int sh = ph * opt.supersample;
  const int sw = pw * opt.supersample;
  for (int i = 0; i < sh; ++i) {
    const double y = (i + 0.5) / sh;
    for (int j = 0; j < sw; ++j) {
      const double x = (j + 0.5) / sw;
      double gx, gy;
      grad_phi(x, y, gx, gy);
      const double px = (x + opt.deflection * gx) * pw - 0.5;
      const double py = (y + opt.deflection * gy) * ph - 0.5;
      const int x0 = static_cast<int>(std::floor(px));
      const int y0 = static_cast<int>(std::floor(py));
      const double fx = px - x0;
      const double fy = py - y0;
      for (int dy = 0; dy <= 1; ++dy)
        for (int dx = 0; dx <= 1; ++dx) {
          const int xi = x0 + dx;
          const int yi = y0 + dy;
          if (xi < 0 || xi >= pw || yi < 0 || yi >= ph) continue;
          const double wgt = (dx ? fx : 1.0 - fx) * (dy ? fy : 1.0 - fy);
          accum(yi, xi) += wgt;
        }
    }
  }
  const double peak = accum.maxCoeff();
  Image<Scalar> out(height, width, 1);
  const int oi = (height - ph) / 2;
  const int oj = (width - pw) / 2;
  auto plane = out.channel(0);
  for (int i = 0; i < ph; ++i)
    for (int j = 0; j < pw; ++j)
      plane(oi + i, oj + j) = static_cast<Scalar>(std::min(1.0, accum(i, j) / peak));
  return out;
}

// Structured RGB scene with natural-image statistics: shaded background,
// soft elliptical blobs, a bar, an oriented grating patch and multi-octave
// value noise. The fine-scale content matters for benchmark fidelity; it
// separates networks that can represent high frequencies from ones that
// cannot.
template <class Scalar>
Image<Scalar> make_test_scene(int height, int width, std::uint64_t seed) {
  Rng rng(seed);
  Image<Scalar> img(height, width, 3);

  double base[3], tilt_x[3], tilt_y[3];
  for (int c = 0; c < 3; ++c) {
    base[c] = rng.uniform(0.2, 0.5);
    tilt_x[c] = rng.uniform(-0.25, 0.25);
    tilt_y[c] = rng.uniform(-0.25, 0.25);
  }

  struct Blob {
    double cx, cy, rx, ry, angle;
    double color[3];
  };
  const int blob_count = 4 + static_cast<int>(rng.uniform01() * 3.0);  // 4..6
  std::vector<Blob> blobs(blob_count);
  for (auto& b : blobs) {
    b.cx = rng.uniform(0.15, 0.85);
    b.cy = rng.uniform(0.15, 0.85);
    b.rx = rng.uniform(0.05, 0.18);
    b.ry = rng.uniform(0.05, 0.18);
    b.angle = rng.uniform(0.0, M_PI);
    for (double& c : b.color) c = rng.uniform(0.2, 1.0);
  }
  const double bar_y = rng.uniform(0.2, 0.8);
  const double bar_h = rng.uniform(0.04, 0.08);
  double bar_color[3];
  for (double& c : bar_color) c = rng.uniform(0.5, 1.0);

  // Two oriented sinusoidal grating patches at different carriers.
  struct Grating {
    double cx, cy, r, freq, angle, amp;
  };
  Grating gratings[2];
  for (int g = 0; g < 2; ++g) {
    gratings[g].cx = rng.uniform(0.2, 0.8);
    gratings[g].cy = rng.uniform(0.2, 0.8);
    gratings[g].r = rng.uniform(0.16, 0.26);
    gratings[g].freq = g == 0 ? rng.uniform(7.0, 10.0) : rng.uniform(12.0, 15.0);
    gratings[g].angle = rng.uniform(0.0, M_PI);
    gratings[g].amp = rng.uniform(0.18, 0.26);
  }

  // Small bright/dark square marks, 2-4 px at a 64-px frame.
  struct Markdot {
    double cx, cy, half;
    double color[3];
  };
  const int dot_count = 8;
  std::vector<Markdot> dots(dot_count);
  for (auto& d : dots) {
    d.cx = rng.uniform(0.08, 0.92);
    d.cy = rng.uniform(0.08, 0.92);
    d.half = rng.uniform(0.015, 0.03);
    const double bright = rng.uniform01() < 0.5 ? 0.05 : 0.95;
    for (double& c : d.color) c = std::clamp(bright + rng.uniform(-0.05, 0.05), 0.0, 1.0);
  }

  // Multi-octave value noise: random lattices upsampled bilinearly.
  auto octave = [&](int cells) {
    Mat<double> lattice(cells + 1, cells + 1);
    for (Index i = 0; i < lattice.size(); ++i) lattice.data()[i] = rng.uniform(-1.0, 1.0);
    return lattice;
  };
  const int octave_cells[4] = {8, 16, 32, 32};
  const double octave_amp[4] = {0.14, 0.11, 0.08, 0.04};
  Mat<double> lattices[4] = {octave(octave_cells[0]), octave(octave_cells[1]),
                             octave(octave_cells[2]), octave(octave_cells[3])};
  auto value_noise = [&](double x, double y, int o) {
    const int cells = octave_cells[o];
    const double fx = x * cells;
    const double fy = y * cells;
    const int x0 = std::min(static_cast<int>(fx), cells - 1);
    const int y0 = std::min(static_cast<int>(fy), cells - 1);
    const double tx = fx - x0;
    const double ty = fy - y0;
    const Mat<double>& L = lattices[o];
    return (1 - ty) * ((1 - tx) * L(y0, x0) + tx * L(y0, x0 + 1)) +
           ty * ((1 - tx) * L(y0 + 1, x0) + tx * L(y0 + 1, x0 + 1));
  };

  for (int i = 0; i < height; ++i) {
    const double y = (i + 0.5) / height;
    for (int j = 0; j < width; ++j) {
      const double x = (j + 0.5) / width;
      double px[3];
      for (int c = 0; c < 3; ++c)
        px[c] = base[c] + tilt_x[c] * (x - 0.5) + tilt_y[c] * (y - 0.5);
      for (const auto& b : blobs) {
        const double dx = x - b.cx;
        const double dy = y - b.cy;
        const double ca = std::cos(b.angle), sa = std::sin(b.angle);
        const double u = (ca * dx + sa * dy) / b.rx;
        const double v = (-sa * dx + ca * dy) / b.ry;
        const double fall = std::exp(-2.5 * (u * u + v * v));
        for (int c = 0; c < 3; ++c) px[c] = px[c] * (1.0 - fall) + b.color[c] * fall;
      }
      if (std::abs(y - bar_y) < bar_h) {
        const double edge = std::min(1.0, (bar_h - std::abs(y - bar_y)) / 0.01);
        for (int c = 0; c < 3; ++c) px[c] = px[c] * (1.0 - edge) + bar_color[c] * edge;
      }
      for (const auto& gr : gratings) {
        const double gdx = x - gr.cx, gdy = y - gr.cy;
        const double gd2 = (gdx * gdx + gdy * gdy) / (gr.r * gr.r);
        if (gd2 < 1.0) {
          const double mask = (1.0 - gd2) * (1.0 - gd2);
          const double carrier = std::sin(
              2.0 * M_PI * gr.freq * (gdx * std::cos(gr.angle) + gdy * std::sin(gr.angle)));
          const double mod = gr.amp * mask * carrier;
          px[0] += mod;
          px[1] += 0.8 * mod;
          px[2] += 0.6 * mod;
        }
      }
      for (const auto& d : dots) {
        if (std::abs(x - d.cx) < d.half && std::abs(y - d.cy) < d.half)
          for (int c = 0; c < 3; ++c) px[c] = d.color[c];
      }
      // First three octaves shared across channels with decorrelating gains,
      // the last one independent per channel.
      for (int o = 0; o < 3; ++o) {
        const double vn = octave_amp[o] * value_noise(x, y, o);
        px[0] += vn;
        px[1] += 0.85 * vn;
        px[2] += 0.7 * vn;
      }
      {
        const double vn = value_noise(x, y, 3);
        px[0] += octave_amp[3] * vn;
        px[1] += octave_amp[3] * value_noise(y, x, 3);
        px[2] += octave_amp[3] * value_noise(1.0 - x, y, 3);
      }
      for (int c = 0; c < 3; ++c)
        img(i, j, c) = static_cast<Scalar>(std::clamp(px[c], 0.02, 0.98));
    }
  }
  return img;
}

}  // namespace lensless
