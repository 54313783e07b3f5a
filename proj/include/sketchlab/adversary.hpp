#pragma once

#include <memory>
#include <string>
#include <vector>

#include "sketchlab/dataio.hpp"
#include "sketchlab/nn.hpp"

namespace sketchlab {

// Convolutional discriminator over 64x64 sketches.  Four stride-2
// convolutions (5x5/64, 3x3/128, 3x3/256, 3x3/256), each followed by batch
// normalization and leaky ReLU, then a 256-wide fully-connected layer with
// leaky ReLU, 50% dropout, and a single-unit sigmoid head.
class Discriminator {
 public:
  struct Config {
    double bn_decay = 0.9;
    double leaky_slope = 0.2;
    double dropout_rate = 0.5;
  };

  Discriminator() = default;
  explicit Discriminator(Rng& rng);
  Discriminator(Rng& rng, Config cfg);

  // images [B,64,64] in [0,1] -> probabilities [B,1].  Training mode uses
  // batch statistics and dropout (which then requires a noise stream); eval
  // mode is deterministic.
  Var operator()(const Var& images, bool training,
                 Rng* dropout_rng = nullptr) const;

  // Forward pass keeping the raw score and the activations used by
  // feature-matching objectives: the third and fourth conv stacks and the
  // first fully-connected layer (before dropout, so the features carry no
  // regularization noise).
  struct Detail {
    Var prob;               // sigmoid(logit), [B,1]
    Var logit;              // [B,1]
    std::vector<Var> taps;  // [B,256,8,8], [B,256,4,4], [B,256]
  };
  Detail forward_detail(const Var& images, bool training,
                        Rng* dropout_rng = nullptr) const;

  ParamStore& params() { return *store_; }
  const ParamStore& params() const { return *store_; }

  // (layer label, output shape per sample) rows for architecture audits.
  static std::vector<std::pair<std::string, Shape>> layer_audit();

 private:
  Config cfg_;
  std::shared_ptr<ParamStore> store_;
  Conv2d c1_, c2_, c3_, c4_;
  BatchNorm n1_, n2_, n3_, n4_;
  Linear fc1_, fc2_;
};

// Fixed feature extractor backing the perceptual reconstruction loss: four
// activation stacks whose spatial sizes halve from 32x32 down to 4x4.
class FeatureProvider {
 public:
  virtual ~FeatureProvider() = default;
  // images [B,64,64] in [0,1] -> 4 activation tensors [B,C,S,S].
  virtual std::vector<Var> extract(const Var& images) const = 0;
  virtual std::string name() const = 0;
  virtual ParamStore& params() = 0;

  static constexpr int kLayers = 4;
};

// Compact four-stage strided conv net with ReLU taps after every stage;
// briefly trained as a species classifier on the synthetic dataset, then
// frozen.  Stands in when pretrained perceptual weights are unavailable.
class SurrogateFeatureNet : public FeatureProvider {
 public:
  SurrogateFeatureNet(int num_species, Rng& rng);

  std::vector<Var> extract(const Var& images) const override;
  std::string name() const override { return "surrogate"; }
  ParamStore& params() override { return *store_; }

  // One-vs-all species logits [B, num_species] for pretraining.
  Var classify(const Var& images) const;

  int num_species() const { return num_species_; }
  void freeze();
  bool frozen() const { return frozen_; }

 private:
  std::vector<Var> taps(const Var& images4) const;

  int num_species_ = 0;
  bool frozen_ = false;
  std::shared_ptr<ParamStore> store_;
  Conv2d c1_, c2_, c3_, c4_;
  Linear head_;
};

// Brief supervised pass fitting the surrogate as a one-vs-all species
// classifier.  Returns the final epoch's mean classification loss.
double train_surrogate(SurrogateFeatureNet& net, const LoadedDataset& data,
                       int epochs, int batch_size, double lr, Rng& rng);

// VGG-19 convolutional trunk with taps after the second block's last ReLU
// and each deeper block's fourth ReLU (128/256/512/512 channels at
// 32/16/8/4 spatial size for 64x64 inputs).  Weights come from a model
// container holding conv1_1 .. conv5_4; the grayscale input is handled by
// collapsing conv1_1's RGB kernels (identical to replicating the image to
// three channels, since convolution is linear in channels).  Always frozen.
class Vgg19Features : public FeatureProvider {
 public:
  explicit Vgg19Features(const std::string& weights_path);

  std::vector<Var> extract(const Var& images) const override;
  std::string name() const override { return "vgg19"; }
  ParamStore& params() override { return *store_; }

  // (tensor name, shape) listing of the expected container contents.
  static std::vector<std::pair<std::string, Shape>> expected_weights();

 private:
  std::shared_ptr<ParamStore> store_;
  std::vector<Conv2d> convs_;
};

}  // namespace sketchlab
