#pragma once

#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "sketchlab/adversary.hpp"
#include "sketchlab/dataio.hpp"
#include "sketchlab/losses.hpp"
#include "sketchlab/modelcore.hpp"
#include "sketchlab/optim.hpp"

namespace sketchlab {

// Hyperparameters of a full training run.  Defaults are the full-scale
// recipe; the desk profile in configs/desk.cfg overrides the size knobs.
struct TrainConfig {
  int epochs = 600;
  int batch_size = 100;
  double lr_encdec = 5e-4;  // encoder and decoder groups
  double lr_disc = 1e-4;    // discriminator group
  double adam_beta1 = 0.5;
  double grad_clip_norm = 10.0;  // per-group global norm
  double leaky_slope = 0.2;
  double bn_decay = 0.9;
  int T = 64;  // drawing steps
  int hidden = 256;
  int latent_k = 100;
  int read_window = 7;
  int write_window = 12;
  double skip_coefficient = 1.5;  // discriminator-skip threshold scale
  double skip_log_base = 10.0;    // log base of the skip schedule
  uint64_t seed = 0;
  int checkpoint_every = 10;  // epochs between checkpoints
  std::string feature_net = "surrogate";  // "surrogate" or "vgg19"
  std::string feature_weights_file;       // container path (vgg19 only)
  int surrogate_epochs = 3;               // classifier pretraining length
  double lambda_pxl = 0.5;
  double lambda_feat = 10.0;

  ModelConfig model_config() const;
  LossWeights loss_weights() const;
  void validate() const;  // throws Error on out-of-range values
};

// Flat "key = value" config file ('#' starts a comment, keys exactly the
// TrainConfig field names).  Unknown keys and malformed values throw.
TrainConfig load_train_config(const std::string& path);
void set_config_key(TrainConfig& cfg, const std::string& key,
                    const std::string& value);
nlohmann::json config_json(const TrainConfig& cfg);

// Discriminator-skip schedule: skip the update when the loss magnitude ratio
// |L_dis / L_gen| reaches coefficient * log_base(1 + epoch).  Epochs are
// 1-indexed; L_gen == 0 counts as an infinite ratio (skip).
bool should_skip_disc(double l_dis, double l_gen, int epoch,
                      double coefficient = 1.5, double log_base = 10.0);

struct StepResult {
  LossBundle losses;
  bool skipped_disc = false;
};

// Orchestrates the hybrid objective: one model forward per step, losses
// routed to three disjoint parameter groups (encoder gets the variational
// objective, decoder additionally the adversarial generator term, the
// discriminator its own loss unless the skip schedule holds it back).
class Trainer {
 public:
  // Copies the dataset; label names drive surrogate pretraining classes.
  // With a resume path, surrogate pretraining is skipped (the checkpoint
  // carries its weights) and all state is restored from the file.
  Trainer(const TrainConfig& cfg, LoadedDataset data,
          const std::string& resume_from = "");

  // One optimization step on an image batch [B,64,64]; epoch is 1-indexed.
  StepResult train_step(const Tensor& images, int epoch);

  // Epoch loop with per-step CSV logging and periodic checkpoints.
  void run(const std::string& out_dir);

  // Writes a checkpoint, then rounds the live parameters and optimizer
  // moments through float32 so continuing equals resuming.
  void save_checkpoint(const std::string& path);
  void resume(const std::string& path);

  SketchModel& model() { return *model_; }
  Discriminator& discriminator() { return disc_; }
  FeatureProvider& features() { return *features_; }
  const Adam& encoder_optimizer() const { return *opt_enc_; }
  const Adam& decoder_optimizer() const { return *opt_dec_; }
  const Adam& discriminator_optimizer() const { return *opt_dis_; }
  const TrainConfig& config() const { return cfg_; }
  const LoadedDataset& data() const { return data_; }
  int completed_epochs() const { return epoch_; }
  long global_step() const { return step_; }

 private:
  void check_finite(const LossBundle& b, int epoch) const;

  TrainConfig cfg_;
  LoadedDataset data_;
  std::unique_ptr<SketchModel> model_;
  Discriminator disc_;
  std::unique_ptr<FeatureProvider> features_;
  std::unique_ptr<Adam> opt_enc_, opt_dec_, opt_dis_;
  Rng shuffle_rng_, latent_rng_, prior_rng_, dropout_rng_;
  int epoch_ = 0;  // completed epochs
  long step_ = 0;  // completed steps
};

}  // namespace sketchlab
