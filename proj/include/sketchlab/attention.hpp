#pragma once

#include "sketchlab/autodiff.hpp"

namespace sketchlab {

// Differentiable Gaussian-filterbank attention.  A 5-vector of unconstrained
// head outputs is mapped to a window placement (center, stride, filter
// variance, gain); the filterbank turns that placement into a pair of
// window x image_size matrices whose rows are normalized 1D Gaussians on an
// equally strided grid.  Reading extracts a window x window glimpse, writing
// stamps a patch back onto the full image plane.

struct AttentionParams {
  Var gx, gy;    // [B,1] window center in pixel coordinates
  Var delta;     // [B,1] grid stride, > 0
  Var variance;  // [B,1] Gaussian filter variance, > 0
  Var gamma;     // [B,1] multiplicative gain, > 0
};

struct Filterbank {
  Var Fx, Fy;  // [B, window, image_size], rows normalized
};

// Raw head output [B,5] -> constrained parameters.  Column order:
// (center_x~, center_y~, log variance, log stride~, log gain).  Centers map
// through (N+1)/2 * (t+1) so a zero head output lands on the image center;
// the stride premultiplier (N-1)/(W-1) makes a zero head output span the
// whole image with the window's grid.
inline AttentionParams map_attention_params(const Var& head, int window,
                                            int image_size) {
  SK_CHECK(head->value.rank() == 2 && head->value.dim(1) == 5,
           "attention head must be [B,5], got "
               << shape_str(head->value.shape()));
  SK_CHECK(window >= 2 && window <= image_size,
           "attention window " << window << " invalid for image size "
                               << image_size);
  const double n = static_cast<double>(image_size);
  const double w = static_cast<double>(window);
  AttentionParams p;
  p.gx = mul_scalar(add_scalar(slice_last(head, 0, 1), 1.0), (n + 1.0) / 2.0);
  p.gy = mul_scalar(add_scalar(slice_last(head, 1, 1), 1.0), (n + 1.0) / 2.0);
  p.variance = exp(slice_last(head, 2, 1));
  p.delta = mul_scalar(exp(slice_last(head, 3, 1)), (n - 1.0) / (w - 1.0));
  p.gamma = exp(slice_last(head, 4, 1));
  return p;
}

// Build Fx and Fy.  Row i of Fx is a Gaussian over pixel columns centered at
// mu_i = gx + (i - W/2 - 0.5) * delta (1-based i), normalized to unit sum with
// an additive 1e-12 floor in the normalizer so off-image windows degrade to
// (near-)zero rows instead of dividing by zero.
inline Filterbank filterbank(const AttentionParams& p, int window,
                             int image_size) {
  const int W = window, N = image_size;
  SK_CHECK(W >= 2 && W <= N, "attention window " << W
                                                 << " invalid for image size "
                                                 << N);
  Tensor offs({1, W});
  for (int i = 0; i < W; ++i)
    offs[i] = (i + 1) - W / 2.0 - 0.5;  // grid offsets, symmetric about 0
  Tensor cols({1, 1, N});
  for (int a = 0; a < N; ++a) cols[a] = static_cast<double>(a);
  Var offsets = constant(std::move(offs));
  Var positions = constant(std::move(cols));

  auto build = [&](const Var& center) {
    Var mu = add(center, mul(p.delta, offsets));       // [B,W]
    int b = mu->value.dim(0);
    Var mu3 = reshape(mu, {b, W, 1});
    Var var3 = reshape(p.variance, {b, 1, 1});
    Var d = sub(positions, mu3);                       // [B,W,N]
    Var logits = neg(div(square(d), mul_scalar(var3, 2.0)));
    Var f = exp(logits);
    Var z = add_scalar(sum_last(f), 1e-12);            // [B,W,1]
    return div(f, z);
  };
  return {build(p.gx), build(p.gy)};
}

// glimpse = gamma * Fy * img * Fx^T.  img: [B,N,N] -> [B,W,W].
inline Var read_window(const Var& img, const Filterbank& fb,
                       const Var& gamma) {
  int b = img->value.dim(0);
  Var t = bmm(fb.Fy, img);               // [B,W,N]
  Var g = bmm(t, fb.Fx, false, true);    // [B,W,W]
  return mul(g, reshape(gamma, {b, 1, 1}));
}

// increment = (1/gamma) * Fy^T * patch * Fx.  patch: [B,W,W] -> [B,N,N].
inline Var write_window(const Var& patch, const Filterbank& fb,
                        const Var& gamma) {
  int b = patch->value.dim(0);
  Var t = bmm(fb.Fy, patch, true, false);  // [B,N,W]
  Var out = bmm(t, fb.Fx);                 // [B,N,N]
  Var inv = div(constant_scalar(1.0), reshape(gamma, {b, 1, 1}));
  return mul(out, inv);
}

}  // namespace sketchlab
