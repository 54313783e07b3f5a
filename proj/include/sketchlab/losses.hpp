#pragma once

#include <fstream>
#include <string>
#include <vector>

#include "sketchlab/autodiff.hpp"

namespace sketchlab {

// Scalar objectives for the hybrid variational-adversarial trainer.  All
// functions are pure and differentiable; batch reductions are arithmetic
// means over the mini-batch.

struct LossWeights {
  double pixel = 0.5;
  double feature = 10.0;
};

// KL( N(mu, diag(variance)) || N(0, I) ) averaged over batch rows:
// 0.5 * (tr Sigma + mu'mu - k - log det Sigma).  Inputs [B,k] (or [k]).
// Throws if any variance entry is not strictly positive.
Var prior_loss(const Var& mu, const Var& variance);

// Mean over batch and pixels of the squared difference.
Var pixel_loss(const Var& x, const Var& xt);

struct FeatureWeights {
  std::vector<double> weights;  // sigmoid(i / layer_count), i = 1..layer_count
  double normalizer = 0;        // sum of weights
};
FeatureWeights feature_weights(int layer_count);

// (1/N) * sum_i w_i * mean((A_i - B_i)^2) over paired activation stacks.
Var feature_loss(const std::vector<Var>& a, const std::vector<Var>& b);

// mean(-D(x) + D(dec(z_r)) + D(x_recon)); scores are probabilities in (0,1).
Var discriminator_loss(const Var& d_real, const Var& d_random,
                       const Var& d_recon);

// -mean(D(dec(z_r)) + D(x_recon)): the painting side's adversarial objective
// (the real-data term is deliberately absent).
Var generator_loss(const Var& d_random, const Var& d_recon);

// prior + w.pixel * pixel + w.feature * feature.
Var encoder_objective(const Var& prior, const Var& pixel, const Var& feature,
                      const LossWeights& w = {});

// Scalar snapshot of one step's objectives.  The composite fields are
// recomputed from the parts with the same expression the graph uses, so the
// decomposition identity holds bitwise.
struct LossBundle {
  double prior = 0, pixel = 0, feature = 0;
  double encoder_total = 0, discriminator = 0, generator = 0, combined = 0;
  LossWeights weights;

  static LossBundle from(double prior, double pixel, double feature,
                         double discriminator, double generator,
                         LossWeights w = {});
};

// Per-step loss log: step,epoch,L_pr,L_pxl,L_feat,L_enc,L_dis,L_gen,skipped_disc
class LossCsv {
 public:
  LossCsv(const std::string& path, bool append = false);
  void write(long step, int epoch, const LossBundle& b, bool skipped_disc);

 private:
  std::ofstream out_;
};

}  // namespace sketchlab
