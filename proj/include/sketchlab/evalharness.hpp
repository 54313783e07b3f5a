#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sketchlab/nn.hpp"
#include "sketchlab/rng.hpp"
#include "sketchlab/tensor.hpp"

namespace sketchlab {

// Classifier-based two-sample evaluation.  A small CNN is trained to tell
// training images from generated ones; each generative model is then scored
// by its false positive rate (FPR): the percentage of its held-out samples
// the classifier mistakes for training data.  50% means indistinguishable.
//
// Two protocols share the machinery:
//   - pooled ("artefact") study: one classifier sees a 50/50 mix of training
//     images and generated images drawn equally from every model, then each
//     model's held-out samples are scored separately;
//   - per-model ("realism") study: each model gets its own classifier trained
//     on a 50/50 mix of training images and that model's output only.
//
// All images are binarised (pixel >= threshold -> 1) before any classifier
// sees them, so the decision cannot shortcut on grayscale-versus-binary
// statistics and must rest on image structure.

enum class Study { kArtefact, kRealism, kUserProxy };
const char* study_name(Study s);  // "artefact" | "realism" | "user-proxy"

// Model name -> [N,64,64] stack of that model's samples, grayscale in [0,1].
using ImageSet = std::map<std::string, Tensor>;

struct EvalReport {
  Study study = Study::kArtefact;
  std::map<std::string, double> per_model_fpr;  // percent, in [0,100]
  int classifier_train_size = 0;  // labelled images the classifier saw
  std::uint64_t seed = 0;
  double binarise_threshold = 0.6;
};

struct EvalConfig {
  int train_size = 3000;     // total labelled images per classifier (even)
  int eval_per_model = 500;  // held-out generated images scored per model
  int epochs = 200;          // full passes; no early stopping
  int batch = 64;
  double lr = 1e-4;
  double binarise_threshold = 0.6;
  bool shuffle_labels = false;  // control: break the image/label pairing

  void validate() const;  // throws Error on out-of-range values
};

// Small fixed CNN: two 5x5 conv + 2x2 max-pool stages (6 and 16 channels)
// over the 64x64 input, then fully connected 120 -> 84 -> 1.  Deliberately
// shallow so the judgement rests on local image evidence rather than a
// memorized deep representation.
class LenetClassifier {
 public:
  explicit LenetClassifier(Rng& rng);

  // images [B,64,64] -> logits [B,1]; positive logit means "training data".
  Var logits(const Var& images) const;

  // Convenience forward without graph construction: [N,64,64] -> [N,1]
  // probabilities in (0,1).
  Tensor probabilities(const Tensor& images) const;

  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }
  long param_count() const { return store_.total_size(); }

 private:
  ParamStore store_;
  Conv2d conv1_, conv2_;
  Linear fc1_, fc2_, fc3_;
};

// Elementwise snap of an [..] image stack: pixel >= threshold -> 1, else 0.
Tensor binarise_stack(const Tensor& images, double threshold = 0.6);

// FNV-1a fingerprint of each image's raw pixel bytes; stack is [N,64,64].
std::vector<std::uint64_t> image_hashes(const Tensor& stack);

// Number of rows of `b` whose fingerprint also appears in `a` (audit tool
// for the no-image-in-both-train-and-eval protocol requirement).
long hash_overlap(const Tensor& a, const Tensor& b);

// The materialized inputs of one classifier: what it trains on and which
// held-out generated images it will be scored against.  Exposed (rather than
// hidden inside the studies) so the train/eval disjointness can be audited
// on the exact stacks a study uses.
struct StudyData {
  Tensor train_images;               // [train_size,64,64], binarised
  std::vector<double> train_labels;  // 1 = training sample, 0 = generated
  std::map<std::string, Tensor> eval_images;  // binarised, per model
};

// Pooled mix: train_size/2 training images plus train_size/2 generated ones
// split as evenly as possible across models (alphabetically earlier models
// absorb any remainder); each model additionally contributes eval_per_model
// held-out images disjoint from its training contribution.  Throws when a
// pool is too small or the mix cannot be balanced.
StudyData make_artefact_data(const Tensor& training_imgs,
                             const ImageSet& generated_by_model,
                             const EvalConfig& cfg, Rng& pick);

// Single-model mix: train_size/2 training images and train_size/2 images
// from one model, plus that model's held-out eval set.
StudyData make_realism_data(const std::string& model,
                            const Tensor& training_imgs,
                            const Tensor& generated, const EvalConfig& cfg,
                            Rng& pick);

// Fixed-schedule training: cfg.epochs seeded-shuffle passes, mini-batches of
// cfg.batch, Adam at cfg.lr, sigmoid cross-entropy.  With shuffle_labels the
// label vector is randomly permuted first (chance-level control).  Streams
// "init" / "shuffle" / "labels" are forked from `rng`.
LenetClassifier train_lenet(const Tensor& images,
                            const std::vector<double>& labels,
                            const EvalConfig& cfg, Rng& rng);

// Percentage of `generated` [N,64,64] the classifier labels as training
// data (logit > 0).  N must be positive.
double false_positive_rate_percent(const LenetClassifier& clf,
                                   const Tensor& generated);

// One pooled classifier, per-model FPR on held-out samples.  Deterministic
// per seed.
EvalReport artefact_study(const Tensor& training_imgs,
                          const ImageSet& generated_by_model,
                          std::uint64_t seed, const EvalConfig& cfg = {});

// One classifier per model, each scored on its own held-out samples.
EvalReport realism_study(const Tensor& training_imgs,
                         const ImageSet& generated_by_model,
                         std::uint64_t seed, const EvalConfig& cfg = {});

// Repeats the pooled study at each classifier training-set size (strictly
// ascending); the reports track how the scores evolve with classifier
// quality.
std::vector<EvalReport> training_size_sweep(
    const std::vector<int>& sizes, const Tensor& training_imgs,
    const ImageSet& generated_by_model, std::uint64_t seed,
    const EvalConfig& cfg = {});

// CSV with header `study,model,fpr_percent,train_size,seed`, one row per
// (report, model) pair.
void write_reports_csv(const std::string& path,
                       const std::vector<EvalReport>& reports);

// Reads every .pgm file in a directory (sorted by filename) into an
// [N,64,64] stack.  Throws when the directory holds none.
Tensor load_pgm_stack(const std::string& dir);

}  // namespace sketchlab
