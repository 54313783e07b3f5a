#pragma once

#include <cmath>
#include <vector>

#include "sketchlab/autodiff.hpp"

namespace sketchlab {

// Convolution, pooling and batch-norm primitives over [B,C,H,W] tensors.
// Convolutions lower to GEMM via im2col; the column buffer is recomputed in
// the backward closure instead of stored, trading a little compute for a
// large reduction in live graph memory.

namespace detail {

// Gather patches: col[(c*k+i)*k+j, oy*ow+ox] = x[c, oy*s+i-p, ox*s+j-p].
inline void im2col(const double* x, int C, int H, int W, int k, int s, int p,
                   int oh, int ow, double* col) {
  for (int c = 0; c < C; ++c) {
    for (int i = 0; i < k; ++i) {
      for (int j = 0; j < k; ++j) {
        double* row = col + (static_cast<long>((c * k + i) * k + j)) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
          int iy = oy * s + i - p;
          for (int ox = 0; ox < ow; ++ox) {
            int ix = ox * s + j - p;
            row[oy * ow + ox] = (iy >= 0 && iy < H && ix >= 0 && ix < W)
                                    ? x[(c * H + iy) * W + ix]
                                    : 0.0;
          }
        }
      }
    }
  }
}

// Scatter-add of a column buffer back onto an image (adjoint of im2col).
inline void col2im_add(const double* col, int C, int H, int W, int k, int s,
                       int p, int oh, int ow, double* x) {
  for (int c = 0; c < C; ++c) {
    for (int i = 0; i < k; ++i) {
      for (int j = 0; j < k; ++j) {
        const double* row =
            col + (static_cast<long>((c * k + i) * k + j)) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
          int iy = oy * s + i - p;
          if (iy < 0 || iy >= H) continue;
          for (int ox = 0; ox < ow; ++ox) {
            int ix = ox * s + j - p;
            if (ix < 0 || ix >= W) continue;
            x[(c * H + iy) * W + ix] += row[oy * ow + ox];
          }
        }
      }
    }
  }
}

}  // namespace detail

// conv2d: x [B,C,H,W], w [F,C,k,k], bias [F] (may be null), square kernel.
inline Var conv2d(const Var& x, const Var& w, const Var& bias, int stride,
                  int pad) {
  SK_CHECK(x->value.rank() == 4, "conv2d input must be [B,C,H,W], got "
                                     << shape_str(x->value.shape()));
  SK_CHECK(w->value.rank() == 4, "conv2d weight must be [F,C,k,k], got "
                                     << shape_str(w->value.shape()));
  int B = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2),
      W = x->value.dim(3);
  int F = w->value.dim(0), k = w->value.dim(2);
  SK_CHECK(w->value.dim(1) == C, "conv2d channel mismatch: input " << C
                                                                   << ", weight "
                                                                   << w->value.dim(1));
  SK_CHECK(w->value.dim(3) == k, "conv2d kernel must be square");
  int oh = (H + 2 * pad - k) / stride + 1;
  int ow = (W + 2 * pad - k) / stride + 1;
  SK_CHECK(oh > 0 && ow > 0, "conv2d output would be empty");
  if (bias) SK_CHECK(bias->value.size() == F, "conv2d bias size mismatch");

  long ckk = static_cast<long>(C) * k * k;
  long osp = static_cast<long>(oh) * ow;
  Tensor v({B, F, oh, ow});
  {
    Tensor col({static_cast<int>(ckk), static_cast<int>(osp)});
    ECMap Wm(w->value.data(), F, ckk);
    for (int b = 0; b < B; ++b) {
      detail::im2col(x->value.data() + static_cast<long>(b) * C * H * W, C, H,
                     W, k, stride, pad, oh, ow, col.data());
      EMap out(v.data() + static_cast<long>(b) * F * osp, F, osp);
      out.noalias() = Wm * ECMap(col.data(), ckk, osp);
      if (bias)
        for (int f = 0; f < F; ++f)
          out.row(f).array() += bias->value[f];
    }
  }
  std::vector<Var> parents = {x, w};
  if (bias) parents.push_back(bias);
  return make_op(
      std::move(v), std::move(parents),
      [x, w, bias, B, C, H, W, F, k, stride, pad, oh, ow, ckk,
       osp](Node& self) {
        Tensor col({static_cast<int>(ckk), static_cast<int>(osp)});
        Tensor dcol({static_cast<int>(ckk), static_cast<int>(osp)});
        Tensor gx, gw, gb;
        if (wants_grad(x)) gx = Tensor(x->value.shape());
        if (wants_grad(w)) gw = Tensor(w->value.shape());
        if (bias && wants_grad(bias)) gb = Tensor(bias->value.shape());
        ECMap Wm(w->value.data(), F, ckk);
        for (int b = 0; b < B; ++b) {
          ECMap g(self.grad.data() + static_cast<long>(b) * F * osp, F, osp);
          if (wants_grad(w)) {
            detail::im2col(x->value.data() + static_cast<long>(b) * C * H * W,
                           C, H, W, k, stride, pad, oh, ow, col.data());
            EMap(gw.data(), F, ckk).noalias() +=
                g * ECMap(col.data(), ckk, osp).transpose();
          }
          if (wants_grad(x)) {
            EMap(dcol.data(), ckk, osp).noalias() = Wm.transpose() * g;
            detail::col2im_add(dcol.data(), C, H, W, k, stride, pad, oh, ow,
                               gx.data() + static_cast<long>(b) * C * H * W);
          }
          if (bias && wants_grad(bias))
            for (int f = 0; f < F; ++f) gb[f] += g.row(f).sum();
        }
        if (wants_grad(x)) accum_grad(x, gx);
        if (wants_grad(w)) accum_grad(w, gw);
        if (bias && wants_grad(bias)) accum_grad(bias, gb);
      });
}

// conv_transpose2d: x [B,C,H,W], w [C,F,k,k], bias [F]; the adjoint map of a
// stride/pad convolution, plus output_padding to pin the output size.
inline Var conv_transpose2d(const Var& x, const Var& w, const Var& bias,
                            int stride, int pad, int out_pad) {
  SK_CHECK(x->value.rank() == 4, "conv_transpose2d input must be [B,C,H,W]");
  SK_CHECK(w->value.rank() == 4, "conv_transpose2d weight must be [C,F,k,k]");
  int B = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2),
      W = x->value.dim(3);
  SK_CHECK(w->value.dim(0) == C, "conv_transpose2d channel mismatch");
  int F = w->value.dim(1), k = w->value.dim(2);
  SK_CHECK(w->value.dim(3) == k, "conv_transpose2d kernel must be square");
  SK_CHECK(out_pad >= 0 && out_pad < stride,
           "output_padding must be in [0, stride)");
  int oh = (H - 1) * stride - 2 * pad + k + out_pad;
  int ow = (W - 1) * stride - 2 * pad + k + out_pad;
  SK_CHECK(oh > 0 && ow > 0, "conv_transpose2d output would be empty");
  if (bias) SK_CHECK(bias->value.size() == F, "conv_transpose2d bias size");

  long fkk = static_cast<long>(F) * k * k;
  long isp = static_cast<long>(H) * W;
  Tensor v({B, F, oh, ow});
  {
    Tensor col({static_cast<int>(fkk), static_cast<int>(isp)});
    ECMap Wm(w->value.data(), C, fkk);
    for (int b = 0; b < B; ++b) {
      ECMap in(x->value.data() + static_cast<long>(b) * C * isp, C, isp);
      EMap(col.data(), fkk, isp).noalias() = Wm.transpose() * in;
      double* out = v.data() + static_cast<long>(b) * F * oh * ow;
      detail::col2im_add(col.data(), F, oh, ow, k, stride, pad, H, W, out);
      if (bias)
        for (int f = 0; f < F; ++f) {
          double bv = bias->value[f];
          double* o = out + static_cast<long>(f) * oh * ow;
          for (long i = 0; i < static_cast<long>(oh) * ow; ++i) o[i] += bv;
        }
    }
  }
  std::vector<Var> parents = {x, w};
  if (bias) parents.push_back(bias);
  return make_op(
      std::move(v), std::move(parents),
      [x, w, bias, B, C, H, W, F, k, stride, pad, oh, ow, fkk,
       isp](Node& self) {
        Tensor dcol({static_cast<int>(fkk), static_cast<int>(isp)});
        Tensor gx, gw, gb;
        if (wants_grad(x)) gx = Tensor(x->value.shape());
        if (wants_grad(w)) gw = Tensor(w->value.shape());
        if (bias && wants_grad(bias)) gb = Tensor(bias->value.shape());
        ECMap Wm(w->value.data(), C, fkk);
        for (int b = 0; b < B; ++b) {
          const double* g = self.grad.data() + static_cast<long>(b) * F * oh * ow;
          detail::im2col(g, F, oh, ow, k, stride, pad, H, W, dcol.data());
          if (wants_grad(x)) {
            EMap(gx.data() + static_cast<long>(b) * C * isp, C, isp)
                .noalias() = Wm * ECMap(dcol.data(), fkk, isp);
          }
          if (wants_grad(w)) {
            ECMap in(x->value.data() + static_cast<long>(b) * C * isp, C, isp);
            EMap(gw.data(), C, fkk).noalias() +=
                in * ECMap(dcol.data(), fkk, isp).transpose();
          }
          if (bias && wants_grad(bias))
            for (int f = 0; f < F; ++f) {
              const double* go = g + static_cast<long>(f) * oh * ow;
              double acc = 0;
              for (long i = 0; i < static_cast<long>(oh) * ow; ++i)
                acc += go[i];
              gb[f] += acc;
            }
        }
        if (wants_grad(x)) accum_grad(x, gx);
        if (wants_grad(w)) accum_grad(w, gw);
        if (bias && wants_grad(bias)) accum_grad(bias, gb);
      });
}

// 2x2 max-pool with stride 2 (even spatial dims required).
inline Var maxpool2d(const Var& x) {
  SK_CHECK(x->value.rank() == 4, "maxpool2d input must be [B,C,H,W]");
  int B = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2),
      W = x->value.dim(3);
  SK_CHECK(H % 2 == 0 && W % 2 == 0, "maxpool2d needs even spatial dims");
  int oh = H / 2, ow = W / 2;
  Tensor v({B, C, oh, ow});
  auto argmax = std::make_shared<std::vector<long>>(v.size());
  long bc = static_cast<long>(B) * C;
  for (long m = 0; m < bc; ++m) {
    const double* in = x->value.data() + m * H * W;
    double* out = v.data() + m * oh * ow;
    long* arg = argmax->data() + m * oh * ow;
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        long base = static_cast<long>(2 * oy) * W + 2 * ox;
        long best = base;
        double bv = in[base];
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            long idx = base + static_cast<long>(dy) * W + dx;
            if (in[idx] > bv) {
              bv = in[idx];
              best = idx;
            }
          }
        out[oy * ow + ox] = bv;
        arg[oy * ow + ox] = m * H * W + best;
      }
    }
  }
  return make_op(std::move(v), {x}, [x, argmax](Node& self) {
    Tensor g(x->value.shape());
    for (long i = 0; i < self.grad.size(); ++i)
      g[(*argmax)[i]] += self.grad[i];
    accum_grad(x, g);
  });
}

// --- batch normalization ------------------------------------------------------

struct BatchNormOut {
  Var y;
  std::vector<double> batch_mean;  // per channel, for the running average
  std::vector<double> batch_var;   // biased
};

// Normalizes over all axes except axis 1 (channels).  Accepts [B,C,H,W] or
// [B,C].  Training mode: batch statistics; returns them for the caller's
// running-average update.
inline BatchNormOut batchnorm_train(const Var& x, const Var& gamma,
                                    const Var& beta, double eps = 1e-5) {
  int rank = x->value.rank();
  SK_CHECK(rank == 2 || rank == 4, "batchnorm input must be [B,C] or [B,C,H,W]");
  int B = x->value.dim(0), C = x->value.dim(1);
  long sp = rank == 4 ? static_cast<long>(x->value.dim(2)) * x->value.dim(3) : 1;
  long n = static_cast<long>(B) * sp;
  SK_CHECK(gamma->value.size() == C && beta->value.size() == C,
           "batchnorm parameter size mismatch");
  SK_CHECK(n > 1, "batchnorm needs more than one sample per channel");

  std::vector<double> mean(C, 0.0), var(C, 0.0), invstd(C, 0.0);
  const double* px = x->value.data();
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c) {
      const double* p = px + (static_cast<long>(b) * C + c) * sp;
      for (long i = 0; i < sp; ++i) mean[c] += p[i];
    }
  for (int c = 0; c < C; ++c) mean[c] /= static_cast<double>(n);
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c) {
      const double* p = px + (static_cast<long>(b) * C + c) * sp;
      for (long i = 0; i < sp; ++i) {
        double d = p[i] - mean[c];
        var[c] += d * d;
      }
    }
  for (int c = 0; c < C; ++c) {
    var[c] /= static_cast<double>(n);
    invstd[c] = 1.0 / std::sqrt(var[c] + eps);
  }

  auto xhat = std::make_shared<Tensor>(x->value.shape());
  Tensor v(x->value.shape());
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c) {
      long off = (static_cast<long>(b) * C + c) * sp;
      for (long i = 0; i < sp; ++i) {
        double h = (px[off + i] - mean[c]) * invstd[c];
        (*xhat)[off + i] = h;
        v[off + i] = gamma->value[c] * h + beta->value[c];
      }
    }

  auto inv = std::make_shared<std::vector<double>>(std::move(invstd));
  Var y = make_op(
      std::move(v), {x, gamma, beta},
      [x, gamma, beta, xhat, inv, B, C, sp, n](Node& self) {
        std::vector<double> dg(C, 0.0), db(C, 0.0);
        const double* g = self.grad.data();
        for (int b = 0; b < B; ++b)
          for (int c = 0; c < C; ++c) {
            long off = (static_cast<long>(b) * C + c) * sp;
            for (long i = 0; i < sp; ++i) {
              dg[c] += g[off + i] * (*xhat)[off + i];
              db[c] += g[off + i];
            }
          }
        if (wants_grad(x)) {
          Tensor gx(x->value.shape());
          for (int b = 0; b < B; ++b)
            for (int c = 0; c < C; ++c) {
              long off = (static_cast<long>(b) * C + c) * sp;
              double k = gamma->value[c] * (*inv)[c];
              for (long i = 0; i < sp; ++i)
                gx[off + i] = k * (g[off + i] - db[c] / n -
                                   (*xhat)[off + i] * dg[c] / n);
            }
          accum_grad(x, gx);
        }
        if (wants_grad(gamma))
          accum_grad(gamma, Tensor(gamma->value.shape(), std::vector<double>(
                                                             dg.begin(), dg.end())));
        if (wants_grad(beta))
          accum_grad(beta, Tensor(beta->value.shape(), std::vector<double>(
                                                           db.begin(), db.end())));
      });
  return {y, std::move(mean), std::move(var)};
}

// Evaluation mode: per-channel affine transform with frozen running stats.
inline Var batchnorm_eval(const Var& x, const Var& gamma, const Var& beta,
                          const std::vector<double>& run_mean,
                          const std::vector<double>& run_var,
                          double eps = 1e-5) {
  int rank = x->value.rank();
  SK_CHECK(rank == 2 || rank == 4, "batchnorm input must be [B,C] or [B,C,H,W]");
  int B = x->value.dim(0), C = x->value.dim(1);
  long sp = rank == 4 ? static_cast<long>(x->value.dim(2)) * x->value.dim(3) : 1;
  SK_CHECK(static_cast<int>(run_mean.size()) == C &&
               static_cast<int>(run_var.size()) == C,
           "batchnorm running stat size mismatch");
  auto inv = std::make_shared<std::vector<double>>(C);
  for (int c = 0; c < C; ++c) (*inv)[c] = 1.0 / std::sqrt(run_var[c] + eps);
  auto rm = std::make_shared<std::vector<double>>(run_mean);

  Tensor v(x->value.shape());
  const double* px = x->value.data();
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c) {
      long off = (static_cast<long>(b) * C + c) * sp;
      for (long i = 0; i < sp; ++i)
        v[off + i] =
            gamma->value[c] * (px[off + i] - (*rm)[c]) * (*inv)[c] +
            beta->value[c];
    }
  return make_op(std::move(v), {x, gamma, beta},
                 [x, gamma, beta, rm, inv, B, C, sp](Node& self) {
                   const double* g = self.grad.data();
                   const double* px = x->value.data();
                   std::vector<double> dg(C, 0.0), db(C, 0.0);
                   Tensor gx;
                   if (wants_grad(x)) gx = Tensor(x->value.shape());
                   for (int b = 0; b < B; ++b)
                     for (int c = 0; c < C; ++c) {
                       long off = (static_cast<long>(b) * C + c) * sp;
                       for (long i = 0; i < sp; ++i) {
                         double xh = (px[off + i] - (*rm)[c]) * (*inv)[c];
                         dg[c] += g[off + i] * xh;
                         db[c] += g[off + i];
                         if (wants_grad(x))
                           gx[off + i] =
                               g[off + i] * gamma->value[c] * (*inv)[c];
                       }
                     }
                   if (wants_grad(x)) accum_grad(x, gx);
                   if (wants_grad(gamma))
                     accum_grad(gamma, Tensor(gamma->value.shape(),
                                              std::vector<double>(dg.begin(),
                                                                  dg.end())));
                   if (wants_grad(beta))
                     accum_grad(beta, Tensor(beta->value.shape(),
                                             std::vector<double>(db.begin(),
                                                                 db.end())));
                 });
}

// --- classification losses ----------------------------------------------------

// Numerically stable mean of  max(l,0) - l*t + log(1 + exp(-|l|))  over all
// elements; equals mean binary cross-entropy between sigmoid(l) and t.
inline Var bce_with_logits_mean(const Var& logits, const Var& targets) {
  SK_CHECK(logits->value.same_shape(targets->value),
           "bce_with_logits shape mismatch: "
               << shape_str(logits->value.shape()) << " vs "
               << shape_str(targets->value.shape()));
  long n = logits->value.size();
  SK_CHECK(n > 0, "bce_with_logits on empty tensor");
  double acc = 0;
  for (long i = 0; i < n; ++i) {
    double l = logits->value[i], t = targets->value[i];
    acc += std::max(l, 0.0) - l * t + std::log1p(std::exp(-std::abs(l)));
  }
  Tensor v = Tensor::scalar(acc / static_cast<double>(n));
  return make_op(std::move(v), {logits, targets}, [logits, targets,
                                                   n](Node& self) {
    if (!wants_grad(logits)) return;
    Tensor g(logits->value.shape());
    double s = self.grad[0] / static_cast<double>(n);
    for (long i = 0; i < n; ++i) {
      double l = logits->value[i];
      double sig = l >= 0 ? 1.0 / (1.0 + std::exp(-l))
                          : std::exp(l) / (1.0 + std::exp(l));
      g[i] = s * (sig - targets->value[i]);
    }
    accum_grad(logits, g);
  });
}

}  // namespace sketchlab
