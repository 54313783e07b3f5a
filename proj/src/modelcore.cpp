#include "sketchlab/modelcore.hpp"

namespace sketchlab {

namespace {

void check_config(const ModelConfig& c) {
  SK_CHECK(c.image_size >= 4, "image size too small: " << c.image_size);
  SK_CHECK(c.timesteps >= 1, "need at least one timestep");
  SK_CHECK(c.hidden >= 1 && c.latent >= 1, "hidden/latent must be positive");
  SK_CHECK(c.read_window >= 2 && c.read_window <= c.image_size,
           "read window " << c.read_window << " invalid");
  SK_CHECK(c.write_window >= 2 && c.write_window <= c.image_size,
           "write window " << c.write_window << " invalid");
}

int encoder_input_size(const ModelConfig& c) {
  int glimpse = 2 * c.read_window * c.read_window;
  // Interleaved mode conditions the encoder on the previous decoder state.
  return c.per_step_latent ? glimpse + c.hidden : glimpse;
}

Tensor sigmoid_tensor(const Tensor& t) {
  Tensor out(t.shape());
  for (long i = 0; i < t.size(); ++i) out[i] = sigmoid_scalar(t[i]);
  return out;
}

}  // namespace

SketchModel::SketchModel(const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
  check_config(cfg_);
  enc_ = LSTMCell(store_, "encoder_lstm", encoder_input_size(cfg_),
                  cfg_.hidden, rng);
  dec_ = LSTMCell(store_, "decoder_lstm", cfg_.latent, cfg_.hidden, rng);
  read_head_ = Linear(store_, "read_attention", cfg_.hidden, 5, rng);
  write_head_ = Linear(store_, "write_attention", cfg_.hidden, 5, rng);
  patch_head_ = Linear(store_, "write_patch", cfg_.hidden,
                       cfg_.write_window * cfg_.write_window, rng);
  latent_head_ = Linear(store_, "latent_map", cfg_.hidden, 2 * cfg_.latent,
                        rng);
}

Tensor SketchModel::sample_eps(int batch, Rng& rng) const {
  Tensor eps({batch, sample_dim()});
  for (long i = 0; i < eps.size(); ++i) eps[i] = rng.gaussian();
  return eps;
}

Filterbank SketchModel::bank(const Var& head5, int window,
                             AttentionParams* out) const {
  AttentionParams p = map_attention_params(head5, window, cfg_.image_size);
  Filterbank fb = filterbank(p, window, cfg_.image_size);
  if (out) *out = p;
  return fb;
}

Var SketchModel::read_both(const Var& xv, const Var& err,
                           const Var& steer) const {
  int b = xv->value.dim(0);
  int w = cfg_.read_window;
  AttentionParams p;
  Filterbank fb = bank(read_head_(steer), w, &p);
  Var gx = read_window(xv, fb, p.gamma);
  Var ge = read_window(err, fb, p.gamma);
  return concat_last(reshape(gx, {b, w * w}), reshape(ge, {b, w * w}));
}

EncodeResult SketchModel::encode(const Tensor& x, const Tensor& eps) const {
  SK_CHECK(!cfg_.per_step_latent,
           "per-step-latent models encode and decode jointly; use reconstruct");
  SK_CHECK(x.rank() == 3 && x.dim(1) == cfg_.image_size &&
               x.dim(2) == cfg_.image_size,
           "encode expects [B," << cfg_.image_size << "," << cfg_.image_size
                                << "], got " << shape_str(x.shape()));
  SK_CHECK(eps.rank() == 2 && eps.dim(0) == x.dim(0) &&
               eps.dim(1) == sample_dim(),
           "eps must be [B," << sample_dim() << "], got "
                             << shape_str(eps.shape()));
  return encode_single(constant(x), constant(eps));
}

EncodeResult SketchModel::encode_single(const Var& xv, const Var& eps) const {
  int b = xv->value.dim(0);
  // The canvas is untouched during encoding, so the residual image is taken
  // against sigmoid(0) = 0.5 and stays constant across steps.
  Var err = add_scalar(xv, -0.5);
  LSTMCell::State s = enc_.initial_state(b);
  for (int t = 0; t < cfg_.timesteps; ++t)
    s = enc_.step(read_both(xv, err, s.h), s);
  Var stats = latent_head_(s.h);
  EncodeResult r;
  r.mu = slice_last(stats, 0, cfg_.latent);
  r.logvar = slice_last(stats, cfg_.latent, cfg_.latent);
  r.z = add(r.mu, mul(exp(mul_scalar(r.logvar, 0.5)), eps));
  return r;
}

Var SketchModel::decode(const Var& z, std::vector<Tensor>* frames) const {
  SK_CHECK(z->value.rank() == 2 && z->value.dim(1) == sample_dim(),
           "decode expects [B," << sample_dim() << "], got "
                                << shape_str(z->value.shape()));
  SK_CHECK(z->value.all_finite(), "latent code must be finite");
  return cfg_.per_step_latent ? decode_interleaved(z, frames)
                              : decode_single(z, frames);
}

Var SketchModel::decode_single(const Var& z, std::vector<Tensor>* frames,
                               Var* canvas_out) const {
  int b = z->value.dim(0);
  int n = cfg_.image_size, w = cfg_.write_window;
  LSTMCell::State s = dec_.initial_state(b);
  Var canvas = constant(Tensor::zeros({b, n, n}));
  for (int t = 0; t < cfg_.timesteps; ++t) {
    s = dec_.step(z, s);
    Var patch = reshape(patch_head_(s.h), {b, w, w});
    AttentionParams p;
    Filterbank fb = bank(write_head_(s.h), w, &p);
    canvas = add(canvas, write_window(patch, fb, p.gamma));
    if (frames) frames->push_back(sigmoid_tensor(canvas->value));
  }
  if (canvas_out) *canvas_out = canvas;
  return sigmoid(canvas);
}

ReconstructResult SketchModel::reconstruct(const Tensor& x,
                                           const Tensor& eps) const {
  SK_CHECK(x.rank() == 3 && x.dim(1) == cfg_.image_size &&
               x.dim(2) == cfg_.image_size,
           "reconstruct expects [B," << cfg_.image_size << ","
                                     << cfg_.image_size << "], got "
                                     << shape_str(x.shape()));
  SK_CHECK(eps.rank() == 2 && eps.dim(0) == x.dim(0) &&
               eps.dim(1) == sample_dim(),
           "eps must be [B," << sample_dim() << "], got "
                             << shape_str(eps.shape()));
  if (cfg_.per_step_latent)
    return reconstruct_interleaved(constant(x), constant(eps));
  EncodeResult e = encode_single(constant(x), constant(eps));
  ReconstructResult r;
  r.mu = e.mu;
  r.logvar = e.logvar;
  r.z = e.z;
  r.image = decode_single(e.z, nullptr, &r.canvas);
  return r;
}

ReconstructResult SketchModel::reconstruct_interleaved(const Var& xv,
                                                       const Var& eps) const {
  int b = xv->value.dim(0);
  int n = cfg_.image_size, w = cfg_.write_window, k = cfg_.latent;
  LSTMCell::State se = enc_.initial_state(b);
  LSTMCell::State sd = dec_.initial_state(b);
  Var canvas = constant(Tensor::zeros({b, n, n}));
  std::vector<Var> mus, logvars, zs;
  for (int t = 0; t < cfg_.timesteps; ++t) {
    Var err = sub(xv, sigmoid(canvas));
    Var glimpse = read_both(xv, err, sd.h);
    se = enc_.step(concat_last(glimpse, sd.h), se);
    Var stats = latent_head_(se.h);
    Var mu = slice_last(stats, 0, k);
    Var logvar = slice_last(stats, k, k);
    Var z = add(mu, mul(exp(mul_scalar(logvar, 0.5)),
                        slice_last(eps, t * k, k)));
    mus.push_back(mu);
    logvars.push_back(logvar);
    zs.push_back(z);
    sd = dec_.step(z, sd);
    Var patch = reshape(patch_head_(sd.h), {b, w, w});
    AttentionParams p;
    Filterbank fb = bank(write_head_(sd.h), w, &p);
    canvas = add(canvas, write_window(patch, fb, p.gamma));
  }
  auto stack = [](const std::vector<Var>& v) {
    Var out = v[0];
    for (size_t i = 1; i < v.size(); ++i) out = concat_last(out, v[i]);
    return out;
  };
  ReconstructResult r;
  r.mu = stack(mus);
  r.logvar = stack(logvars);
  r.z = stack(zs);
  r.canvas = canvas;
  r.image = sigmoid(canvas);
  return r;
}

Var SketchModel::decode_interleaved(const Var& z, std::vector<Tensor>* frames,
                                    Var* canvas_out) const {
  int b = z->value.dim(0);
  int n = cfg_.image_size, w = cfg_.write_window, k = cfg_.latent;
  LSTMCell::State sd = dec_.initial_state(b);
  Var canvas = constant(Tensor::zeros({b, n, n}));
  for (int t = 0; t < cfg_.timesteps; ++t) {
    sd = dec_.step(slice_last(z, t * k, k), sd);
    Var patch = reshape(patch_head_(sd.h), {b, w, w});
    AttentionParams p;
    Filterbank fb = bank(write_head_(sd.h), w, &p);
    canvas = add(canvas, write_window(patch, fb, p.gamma));
    if (frames) frames->push_back(sigmoid_tensor(canvas->value));
  }
  if (canvas_out) *canvas_out = canvas;
  return sigmoid(canvas);
}

std::vector<Var> SketchModel::encoder_params() const {
  std::vector<Var> out;
  for (auto& [name, p] : store_.params())
    if (name.rfind("encoder_lstm", 0) == 0 ||
        name.rfind("read_attention", 0) == 0 ||
        name.rfind("latent_map", 0) == 0)
      out.push_back(p);
  return out;
}

std::vector<Var> SketchModel::decoder_params() const {
  std::vector<Var> out;
  for (auto& [name, p] : store_.params())
    if (name.rfind("decoder_lstm", 0) == 0 ||
        name.rfind("write_attention", 0) == 0 ||
        name.rfind("write_patch", 0) == 0)
      out.push_back(p);
  return out;
}

}  // namespace sketchlab
