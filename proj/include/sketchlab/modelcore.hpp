#pragma once

#include <vector>

#include "sketchlab/attention.hpp"
#include "sketchlab/nn.hpp"

namespace sketchlab {

// Recurrent sketching model: an LSTM encoder reads the input through a
// Gaussian-filterbank window and maps it to a diagonal-Gaussian latent code;
// an LSTM decoder, fed the latent code at every step, paints stroke-like
// patches onto an additive canvas whose sigmoid is the output image.
//
// Two latent regimes share the machinery:
//   - single latent (default): the code comes from the final encoder hidden
//     state and the same z is injected at every decoder step; the encoder
//     window is steered by the encoder's own hidden state and the residual
//     image is taken against the untouched (zero) canvas.
//   - per-step latents: encoder and decoder run interleaved; each step reads
//     the residual against the evolving canvas (window steered by the
//     previous decoder state), samples its own z_t, and writes. Sampling and
//     interpolation then act on the T stacked codes.
struct ModelConfig {
  int image_size = 64;
  int timesteps = 64;
  int hidden = 256;
  int latent = 100;
  int read_window = 7;
  int write_window = 12;
  bool per_step_latent = false;
};

struct EncodeResult {
  Var mu, logvar, z;  // [B, latent] each
};

struct ReconstructResult {
  Var mu, logvar, z;  // single-latent mode: [B, latent]; per-step: stacked
  Var image;          // [B, N, N] in (0,1)
  Var canvas;         // pre-sigmoid accumulator, [B, N, N]; image = sigmoid(canvas)
};

class SketchModel {
 public:
  SketchModel(const ModelConfig& cfg, Rng& rng);

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }

  // Width of the latent code a sampler must provide: latent for the
  // single-code regime, timesteps*latent when every step has its own code.
  int sample_dim() const {
    return cfg_.per_step_latent ? cfg_.timesteps * cfg_.latent : cfg_.latent;
  }

  // Standard-normal noise for the reparameterized sample, [B, sample_dim].
  Tensor sample_eps(int batch, Rng& rng) const;

  // Deterministic given (x, eps).  eps: [B, sample_dim].
  EncodeResult encode(const Tensor& x, const Tensor& eps) const;

  // z: [B, sample_dim].  If `frames` is given it receives the sigmoid of the
  // canvas after every step; the last frame equals the returned image.
  Var decode(const Var& z, std::vector<Tensor>* frames = nullptr) const;

  ReconstructResult reconstruct(const Tensor& x, const Tensor& eps) const;

  // Parameter groups for split optimization (inference side vs painting side).
  std::vector<Var> encoder_params() const;
  std::vector<Var> decoder_params() const;

 private:
  EncodeResult encode_single(const Var& xv, const Var& eps) const;
  Var decode_single(const Var& z, std::vector<Tensor>* frames,
                    Var* canvas_out = nullptr) const;
  ReconstructResult reconstruct_interleaved(const Var& xv,
                                            const Var& eps) const;
  Var decode_interleaved(const Var& z, std::vector<Tensor>* frames,
                         Var* canvas_out = nullptr) const;

  // One filterbank from a 5-wide head output.
  Filterbank bank(const Var& head5, int window, AttentionParams* out) const;
  Var read_both(const Var& xv, const Var& err, const Var& steer) const;

  ModelConfig cfg_;
  ParamStore store_;
  LSTMCell enc_, dec_;
  Linear read_head_, write_head_, patch_head_, latent_head_;
};

}  // namespace sketchlab
