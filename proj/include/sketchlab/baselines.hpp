#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "sketchlab/adversary.hpp"
#include "sketchlab/modelcore.hpp"
#include "sketchlab/trainer.hpp"

namespace sketchlab {

// (layer label, per-sample output shape) rows, used both for the static
// architecture listings and for runtime traces so the two can be compared.
using ShapeRows = std::vector<std::pair<std::string, Shape>>;

// Transposed-convolution image generator: a fully-connected projection to a
// 4x4x256 feature map followed by four stride-2 up-convolutions
// (3x3/256, 3x3/256, 5x5/128, then 7x7 down to one grayscale channel with a
// tanh output), batch norm on every up-convolution.  Serves both as the GAN
// generator and as the adversarial autoencoder's decoder.
class GeneratorNet {
 public:
  GeneratorNet() = default;
  GeneratorNet(ParamStore& store, const std::string& prefix, int latent,
               double bn_decay, Rng& rng);

  // z [B,latent] -> images [B,64,64]; the tanh range [-1,1] is rescaled to
  // [0,1] so outputs compose with the rest of the pipeline.
  Var operator()(const Var& z, bool training,
                 ShapeRows* trace = nullptr) const;

  static ShapeRows layer_audit();
  int latent() const { return latent_; }

 private:
  int latent_ = 0;
  Linear fc_;
  ConvTranspose2d u1_, u2_, u3_, u4_;
  BatchNorm n1_, n2_, n3_, n4_;
};

// Deep convolutional GAN over 64x64 sketches: the GeneratorNet above against
// a three-convolution discriminator (7x7/64, 5x5/64, 3x3/64, each stride 2
// with batch norm and leaky ReLU) topped by 128- and 1-unit fully-connected
// layers.  Discriminator input is rescaled to the generator's tanh range.
class Dcgan {
 public:
  struct Config {
    int latent = 100;
    double bn_decay = 0.9;
    double leaky_slope = 0.2;
  };

  explicit Dcgan(Rng& rng);
  Dcgan(Rng& rng, Config cfg);

  Var generate(const Var& z, bool training, ShapeRows* trace = nullptr) const;

  // images [B,64,64] in [0,1] -> raw scores [B,1] (sigmoid of the score is
  // the real-image probability).
  Var discriminate_logits(const Var& images, bool training,
                          ShapeRows* trace = nullptr) const;

  Tensor sample_z(int n, Rng& rng) const;  // standard normal [n, latent]
  int latent_dim() const { return cfg_.latent; }

  ParamStore& generator_params() { return *gen_store_; }
  ParamStore& discriminator_params() { return *dis_store_; }

  static ShapeRows generator_audit() { return GeneratorNet::layer_audit(); }
  static ShapeRows discriminator_audit();

 private:
  Config cfg_;
  std::shared_ptr<ParamStore> gen_store_, dis_store_;
  GeneratorNet gen_;
  Conv2d c1_, c2_, c3_;
  BatchNorm n1_, n2_, n3_;
  Linear fc1_, fc2_;
};

// Variational autoencoder trained against an adversary: a three-convolution
// encoder (5x5/64, 3x3/128, 3x3/256, stride 2, batch norm + ReLU) with
// 256-wide mu and log-variance heads, the GeneratorNet as decoder, and the
// shared Discriminator, whose third/fourth conv stacks and first
// fully-connected layer provide the feature-matching reconstruction space.
class VaeGan {
 public:
  struct Config {
    int latent = 256;
    double bn_decay = 0.9;
    double leaky_slope = 0.2;
  };

  explicit VaeGan(Rng& rng);
  VaeGan(Rng& rng, Config cfg);

  // images [B,64,64] in [0,1], eps [B,latent] standard normal.
  EncodeResult encode(const Var& images, const Var& eps, bool training,
                      ShapeRows* trace = nullptr) const;
  Var decode(const Var& z, bool training) const;

  Discriminator& discriminator() { return disc_; }
  const Discriminator& discriminator() const { return disc_; }
  int latent_dim() const { return cfg_.latent; }

  ParamStore& encoder_params() { return *enc_store_; }
  ParamStore& decoder_params() { return *dec_store_; }

  static ShapeRows encoder_audit();
  static ShapeRows discriminator_audit() {
    return Discriminator::layer_audit();
  }

 private:
  Config cfg_;
  std::shared_ptr<ParamStore> enc_store_, dec_store_;
  Conv2d e1_, e2_, e3_;
  BatchNorm en1_, en2_, en3_;
  Linear mu_head_, logvar_head_;
  GeneratorNet dec_;
  Discriminator disc_;
};

// --- baseline training -------------------------------------------------------

enum class BaselineKind { kDcgan, kVaeGan, kDraw };

BaselineKind baseline_kind_from_name(const std::string& name);  // throws
std::string baseline_name(BaselineKind kind);

// Shared run-shape settings (epochs, batch size, seed, clipping, checkpoint
// cadence, and the desk-scale model dimensions) pass through; the optimizer
// recipe and any architecture constants each baseline publishes are pinned:
// the GAN trains both nets at lr 5e-4 with beta1 0.5, the adversarial
// autoencoder uses three optimizers at lr 1e-4 with a 256-wide latent, and
// the attention-only model uses beta1 0.9 at lr 5e-4 with 3x3 read and 5x5
// write windows and per-step latents.
TrainConfig apply_baseline_recipe(BaselineKind kind, TrainConfig cfg);

// Trains one baseline with the same dataset, batching, logging, and
// checkpoint machinery as the main trainer, so step budgets and loss CSVs
// stay comparable.  Models without a term log zeros in that CSV column.
class BaselineTrainer {
 public:
  BaselineTrainer(BaselineKind kind, const TrainConfig& cfg,
                  LoadedDataset data, const std::string& resume_from = "");

  StepResult train_step(const Tensor& images, int epoch);
  void run(const std::string& out_dir);

  void save_checkpoint(const std::string& path);
  void resume(const std::string& path);

  // Deterministic decode of standard-normal latents, [n,64,64] in [0,1].
  Tensor sample_images(int n, Rng& rng);

  BaselineKind kind() const { return kind_; }
  const TrainConfig& config() const { return cfg_; }
  int completed_epochs() const { return epoch_; }
  long global_step() const { return step_; }

  Dcgan& dcgan();
  VaeGan& vaegan();
  SketchModel& draw();
  std::vector<Adam*> optimizers();

 private:
  StepResult step_dcgan(const Tensor& images);
  StepResult step_vaegan(const Tensor& images);
  StepResult step_draw(const Tensor& images);
  void check_finite(const LossBundle& b, int epoch) const;

  BaselineKind kind_;
  TrainConfig cfg_;
  LoadedDataset data_;
  std::unique_ptr<Dcgan> dcgan_;
  std::unique_ptr<VaeGan> vaegan_;
  std::unique_ptr<SketchModel> draw_;
  std::unique_ptr<Adam> opt_a_, opt_b_, opt_c_;  // meaning depends on kind
  Rng shuffle_rng_, latent_rng_, prior_rng_, dropout_rng_;
  int epoch_ = 0;
  long step_ = 0;
};

}  // namespace sketchlab
