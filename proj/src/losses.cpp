#include "sketchlab/losses.hpp"

#include <cmath>
#include <iomanip>

namespace sketchlab {

namespace {

// [k] -> [1,k]; [B,k] passes through.
Var as_batch(const Var& v, const char* what) {
  SK_CHECK(v->value.rank() == 1 || v->value.rank() == 2,
           what << " must be [k] or [B,k], got "
                << shape_str(v->value.shape()));
  if (v->value.rank() == 1) return reshape(v, {1, v->value.dim(0)});
  return v;
}

}  // namespace

Var prior_loss(const Var& mu, const Var& variance) {
  Var m = as_batch(mu, "mean");
  Var s2 = as_batch(variance, "variance");
  SK_CHECK(m->value.same_shape(s2->value),
           "mean/variance shape mismatch: " << shape_str(m->value.shape())
                                            << " vs "
                                            << shape_str(s2->value.shape()));
  SK_CHECK(s2->value.min() > 0.0,
           "variance entries must be positive, min is " << s2->value.min());
  int batch = m->value.dim(0);
  // 0.5 * sum_i (sigma_i^2 + mu_i^2 - 1 - log sigma_i^2), batch-averaged.
  Var per = sub(add(s2, square(m)), add_scalar(log(s2), 1.0));
  return mul_scalar(sum(per), 0.5 / batch);
}

Var pixel_loss(const Var& x, const Var& xt) {
  SK_CHECK(x->value.same_shape(xt->value),
           "pixel loss shape mismatch: " << shape_str(x->value.shape())
                                         << " vs "
                                         << shape_str(xt->value.shape()));
  return mean(square(sub(x, xt)));
}

FeatureWeights feature_weights(int layer_count) {
  SK_CHECK(layer_count >= 1, "need at least one feature layer");
  FeatureWeights fw;
  for (int i = 1; i <= layer_count; ++i) {
    double w = sigmoid_scalar(static_cast<double>(i) / layer_count);
    fw.weights.push_back(w);
    fw.normalizer += w;
  }
  return fw;
}

Var feature_loss(const std::vector<Var>& a, const std::vector<Var>& b) {
  SK_CHECK(!a.empty() && a.size() == b.size(),
           "feature stacks must be non-empty and paired: " << a.size()
                                                           << " vs "
                                                           << b.size());
  FeatureWeights fw = feature_weights(static_cast<int>(a.size()));
  Var total;
  for (size_t i = 0; i < a.size(); ++i) {
    SK_CHECK(a[i]->value.same_shape(b[i]->value),
             "feature layer " << i << " shape mismatch");
    Var term = mul_scalar(mean(square(sub(a[i], b[i]))),
                          fw.weights[i] / fw.normalizer);
    total = total ? add(total, term) : term;
  }
  return total;
}

namespace {

void check_scores(const Var& s, const char* what, long batch) {
  SK_CHECK(s->value.size() == batch, what << " has " << s->value.size()
                                          << " scores, expected " << batch);
}

}  // namespace

Var discriminator_loss(const Var& d_real, const Var& d_random,
                       const Var& d_recon) {
  long batch = d_real->value.size();
  check_scores(d_random, "random-sample scores", batch);
  check_scores(d_recon, "reconstruction scores", batch);
  return add(add(neg(mean(d_real)), mean(d_random)), mean(d_recon));
}

Var generator_loss(const Var& d_random, const Var& d_recon) {
  SK_CHECK(d_random->value.size() == d_recon->value.size(),
           "score batches differ: " << d_random->value.size() << " vs "
                                    << d_recon->value.size());
  return neg(add(mean(d_random), mean(d_recon)));
}

Var encoder_objective(const Var& prior, const Var& pixel, const Var& feature,
                      const LossWeights& w) {
  return add(add(prior, mul_scalar(pixel, w.pixel)),
             mul_scalar(feature, w.feature));
}

LossBundle LossBundle::from(double prior, double pixel, double feature,
                            double discriminator, double generator,
                            LossWeights w) {
  LossBundle b;
  b.prior = prior;
  b.pixel = pixel;
  b.feature = feature;
  b.discriminator = discriminator;
  b.generator = generator;
  b.weights = w;
  // Evaluate the actual objective graph so the bundle matches the training
  // loss bitwise even when the compiler contracts scalar multiply-adds.
  {
    NoGradGuard ng;
    b.encoder_total =
        encoder_objective(constant_scalar(prior), constant_scalar(pixel),
                          constant_scalar(feature), w)
            ->value[0];
  }
  b.combined = b.encoder_total + discriminator;
  return b;
}

LossCsv::LossCsv(const std::string& path, bool append)
    : out_(path, append ? std::ios::app : std::ios::trunc) {
  SK_CHECK(out_.good(), "cannot open loss log " << path);
  if (!append || out_.tellp() == 0)
    out_ << "step,epoch,L_pr,L_pxl,L_feat,L_enc,L_dis,L_gen,skipped_disc\n";
}

void LossCsv::write(long step, int epoch, const LossBundle& b,
                    bool skipped_disc) {
  out_ << step << ',' << epoch << ',' << std::setprecision(10) << b.prior
       << ',' << b.pixel << ',' << b.feature << ',' << b.encoder_total << ','
       << b.discriminator << ',' << b.generator << ','
       << (skipped_disc ? 1 : 0) << '\n';
  out_.flush();
  SK_CHECK(out_.good(), "loss log write failed");
}

}  // namespace sketchlab
