#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "sketchlab/nnops.hpp"
#include "sketchlab/rng.hpp"

namespace sketchlab {

// ---------------------------------------------------------------------------
// Parameter registry.  Every trainable tensor and every persistent buffer
// (batch-norm running stats) is registered under a stable name so optimizers
// and the checkpoint writer can enumerate them deterministically.

class ParamStore {
 public:
  Var add(const std::string& name, Tensor init) {
    for (auto& [n, _] : params_)
      SK_CHECK(n != name, "duplicate parameter name: " << name);
    Var p = make_param(std::move(init));
    params_.emplace_back(name, p);
    return p;
  }

  std::shared_ptr<Tensor> add_buffer(const std::string& name, Tensor init) {
    for (auto& [n, _] : buffers_)
      SK_CHECK(n != name, "duplicate buffer name: " << name);
    auto b = std::make_shared<Tensor>(std::move(init));
    buffers_.emplace_back(name, b);
    return b;
  }

  const std::vector<std::pair<std::string, Var>>& params() const {
    return params_;
  }
  const std::vector<std::pair<std::string, std::shared_ptr<Tensor>>>& buffers()
      const {
    return buffers_;
  }

  std::vector<Var> vars() const {
    std::vector<Var> out;
    out.reserve(params_.size());
    for (auto& [_, p] : params_) out.push_back(p);
    return out;
  }

  Var find(const std::string& name) const {
    for (auto& [n, p] : params_)
      if (n == name) return p;
    return nullptr;
  }

  long total_size() const {
    long n = 0;
    for (auto& [_, p] : params_) n += p->value.size();
    return n;
  }

 private:
  std::vector<std::pair<std::string, Var>> params_;
  std::vector<std::pair<std::string, std::shared_ptr<Tensor>>> buffers_;
};

// --- initializers -----------------------------------------------------------

namespace init {

inline Tensor trunc_normal(Shape shape, double stddev, Rng& rng) {
  Tensor t(std::move(shape));
  for (long i = 0; i < t.size(); ++i)
    t[i] = rng.truncated_gaussian(0.0, stddev);
  return t;
}

// Random orthogonal n x n matrix (QR of a Gaussian matrix, sign-fixed so the
// distribution is uniform over the orthogonal group).
inline Tensor orthogonal(int n, Rng& rng) {
  EMatrix a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = rng.gaussian();
  Eigen::HouseholderQR<EMatrix> qr(a);
  EMatrix q = qr.householderQ() * EMatrix::Identity(n, n);
  EMatrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int j = 0; j < n; ++j)
    if (r(j, j) < 0) q.col(j) *= -1.0;
  Tensor t({n, n});
  t.mat(n, n) = q;
  return t;
}

}  // namespace init

// --- layers -------------------------------------------------------------------

class Linear {
 public:
  Linear() = default;
  Linear(ParamStore& store, const std::string& name, int in, int out, Rng& rng,
         double init_std = 0.02)
      : in_(in), out_(out) {
    W_ = store.add(name + ".weight", init::trunc_normal({in, out}, init_std, rng));
    b_ = store.add(name + ".bias", Tensor::zeros({out}));
  }

  // x: [B, in] -> [B, out]
  Var operator()(const Var& x) const {
    SK_CHECK(x->value.rank() == 2 && x->value.dim(1) == in_,
             "linear expects [B," << in_ << "], got "
                                  << shape_str(x->value.shape()));
    return add(matmul(x, W_), b_);
  }

  int in() const { return in_; }
  int out() const { return out_; }
  Var weight() const { return W_; }
  Var bias() const { return b_; }

 private:
  int in_ = 0, out_ = 0;
  Var W_, b_;
};

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParamStore& store, const std::string& name, int in_ch, int out_ch,
         int kernel, int stride, int pad, Rng& rng, double init_std = 0.02)
      : stride_(stride), pad_(pad) {
    W_ = store.add(name + ".weight",
                   init::trunc_normal({out_ch, in_ch, kernel, kernel},
                                      init_std, rng));
    b_ = store.add(name + ".bias", Tensor::zeros({out_ch}));
  }

  Var operator()(const Var& x) const { return conv2d(x, W_, b_, stride_, pad_); }

  Var weight() const { return W_; }

 private:
  int stride_ = 1, pad_ = 0;
  Var W_, b_;
};

class ConvTranspose2d {
 public:
  ConvTranspose2d() = default;
  ConvTranspose2d(ParamStore& store, const std::string& name, int in_ch,
                  int out_ch, int kernel, int stride, int pad, int out_pad,
                  Rng& rng, double init_std = 0.02)
      : stride_(stride), pad_(pad), out_pad_(out_pad) {
    W_ = store.add(name + ".weight",
                   init::trunc_normal({in_ch, out_ch, kernel, kernel},
                                      init_std, rng));
    b_ = store.add(name + ".bias", Tensor::zeros({out_ch}));
  }

  Var operator()(const Var& x) const {
    return conv_transpose2d(x, W_, b_, stride_, pad_, out_pad_);
  }

 private:
  int stride_ = 1, pad_ = 0, out_pad_ = 0;
  Var W_, b_;
};

// Batch norm with persistent running statistics.  `decay` is the fraction of
// the old running value kept per update: run = decay*run + (1-decay)*batch.
class BatchNorm {
 public:
  BatchNorm() = default;
  BatchNorm(ParamStore& store, const std::string& name, int channels,
            double decay)
      : channels_(channels), decay_(decay) {
    gamma_ = store.add(name + ".gamma", Tensor::ones({channels}));
    beta_ = store.add(name + ".beta", Tensor::zeros({channels}));
    run_mean_ = store.add_buffer(name + ".running_mean", Tensor::zeros({channels}));
    run_var_ = store.add_buffer(name + ".running_var", Tensor::ones({channels}));
  }

  Var operator()(const Var& x, bool training) const {
    if (training) {
      BatchNormOut out = batchnorm_train(x, gamma_, beta_);
      for (int c = 0; c < channels_; ++c) {
        (*run_mean_)[c] =
            decay_ * (*run_mean_)[c] + (1.0 - decay_) * out.batch_mean[c];
        (*run_var_)[c] =
            decay_ * (*run_var_)[c] + (1.0 - decay_) * out.batch_var[c];
      }
      return out.y;
    }
    std::vector<double> rm(run_mean_->data(), run_mean_->data() + channels_);
    std::vector<double> rv(run_var_->data(), run_var_->data() + channels_);
    return batchnorm_eval(x, gamma_, beta_, rm, rv);
  }

 private:
  int channels_ = 0;
  double decay_ = 0.9;
  Var gamma_, beta_;
  std::shared_ptr<Tensor> run_mean_, run_var_;
};

// Inverted dropout: scales surviving activations by 1/keep so evaluation is
// the identity.  Mask randomness comes from the caller's stream.
inline Var dropout(const Var& x, double rate, Rng& rng, bool training) {
  if (!training || rate <= 0.0) return x;
  SK_CHECK(rate < 1.0, "dropout rate must be < 1");
  double keep = 1.0 - rate;
  Tensor mask(x->value.shape());
  for (long i = 0; i < mask.size(); ++i)
    mask[i] = rng.uniform() < keep ? 1.0 / keep : 0.0;
  return mul(x, constant(std::move(mask)));
}

// Single LSTM cell.  Input and recurrent weights live in one [in+hid, 4*hid]
// matrix (gate order: input, forget, cell, output).  Recurrent blocks are
// initialized orthogonal; the forget-gate bias starts at 1.
class LSTMCell {
 public:
  LSTMCell() = default;
  LSTMCell(ParamStore& store, const std::string& name, int in, int hid,
           Rng& rng, double init_std = 0.02)
      : in_(in), hid_(hid) {
    Tensor w = init::trunc_normal({in + hid, 4 * hid}, init_std, rng);
    for (int g = 0; g < 4; ++g) {
      Tensor q = init::orthogonal(hid, rng);
      for (int r = 0; r < hid; ++r)
        for (int c = 0; c < hid; ++c)
          w[static_cast<long>(in + r) * 4 * hid + g * hid + c] =
              q[static_cast<long>(r) * hid + c];
    }
    Tensor b = Tensor::zeros({4 * hid});
    for (int c = 0; c < hid; ++c) b[hid + c] = 1.0;  // forget gate bias
    W_ = store.add(name + ".weight", std::move(w));
    b_ = store.add(name + ".bias", std::move(b));
  }

  struct State {
    Var h, c;
  };

  State initial_state(int batch) const {
    return {constant(Tensor::zeros({batch, hid_})),
            constant(Tensor::zeros({batch, hid_}))};
  }

  State step(const Var& x, const State& s) const {
    SK_CHECK(x->value.rank() == 2 && x->value.dim(1) == in_,
             "lstm expects [B," << in_ << "], got "
                                << shape_str(x->value.shape()));
    Var z = add(matmul(concat_last(x, s.h), W_), b_);
    Var i = sigmoid(slice_last(z, 0, hid_));
    Var f = sigmoid(slice_last(z, hid_, hid_));
    Var g = tanh(slice_last(z, 2 * hid_, hid_));
    Var o = sigmoid(slice_last(z, 3 * hid_, hid_));
    Var c = add(mul(f, s.c), mul(i, g));
    Var h = mul(o, tanh(c));
    return {h, c};
  }

  int input_size() const { return in_; }
  int hidden_size() const { return hid_; }

 private:
  int in_ = 0, hid_ = 0;
  Var W_, b_;
};

}  // namespace sketchlab
