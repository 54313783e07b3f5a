#include "sketchlab/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <sstream>

#include "sketchlab/checkpoint.hpp"
#include "sketchlab/image.hpp"

namespace sketchlab {

namespace fs = std::filesystem;

namespace {

Var ones_target(int b) { return constant(Tensor::ones({b, 1})); }
Var zeros_target(int b) { return constant(Tensor::zeros({b, 1})); }

void trace_row(ShapeRows* trace, const char* label, const Var& h) {
  if (!trace) return;
  Shape per_sample(h->value.shape().begin() + 1, h->value.shape().end());
  trace->emplace_back(label, std::move(per_sample));
}

Var check_image_batch(const Var& images) {
  SK_CHECK(images->value.rank() == 3 && images->value.dim(1) == kImageSize &&
               images->value.dim(2) == kImageSize,
           "expected [B," << kImageSize << "," << kImageSize << "] images, got "
                          << shape_str(images->value.shape()));
  return images;
}

}  // namespace

// --- generator trunk ---------------------------------------------------------

GeneratorNet::GeneratorNet(ParamStore& store, const std::string& prefix,
                           int latent, double bn_decay, Rng& rng)
    : latent_(latent) {
  SK_CHECK(latent >= 1, "generator latent width must be >= 1, got " << latent);
  fc_ = Linear(store, prefix + "fc", latent, 4 * 4 * 256, rng);
  u1_ = ConvTranspose2d(store, prefix + "up1", 256, 256, 3, 2, 1, 1, rng);
  n1_ = BatchNorm(store, prefix + "upbn1", 256, bn_decay);
  u2_ = ConvTranspose2d(store, prefix + "up2", 256, 256, 3, 2, 1, 1, rng);
  n2_ = BatchNorm(store, prefix + "upbn2", 256, bn_decay);
  u3_ = ConvTranspose2d(store, prefix + "up3", 256, 128, 5, 2, 2, 1, rng);
  n3_ = BatchNorm(store, prefix + "upbn3", 128, bn_decay);
  u4_ = ConvTranspose2d(store, prefix + "up4", 128, 1, 7, 2, 3, 1, rng);
  n4_ = BatchNorm(store, prefix + "upbn4", 1, bn_decay);
}

Var GeneratorNet::operator()(const Var& z, bool training,
                             ShapeRows* trace) const {
  SK_CHECK(latent_ > 0, "generator is not initialized");
  SK_CHECK(z->value.rank() == 2 && z->value.dim(1) == latent_,
           "generator expects [B," << latent_ << "] codes, got "
                                   << shape_str(z->value.shape()));
  int b = z->value.dim(0);
  Var h = relu(reshape(fc_(z), {b, 256, 4, 4}));
  trace_row(trace, "fully-connected 4x4x256 + relu", h);
  h = relu(n1_(u1_(h), training));
  trace_row(trace, "up-conv 3x3/256 stride 2 + batchnorm + relu", h);
  h = relu(n2_(u2_(h), training));
  trace_row(trace, "up-conv 3x3/256 stride 2 + batchnorm + relu", h);
  h = relu(n3_(u3_(h), training));
  trace_row(trace, "up-conv 5x5/128 stride 2 + batchnorm + relu", h);
  h = tanh(n4_(u4_(h), training));
  trace_row(trace, "up-conv 7x7 stride 2 + batchnorm + tanh", h);
  // tanh range [-1,1] -> storage range [0,1]
  h = mul_scalar(add_scalar(h, 1.0), 0.5);
  return reshape(h, {b, kImageSize, kImageSize});
}

ShapeRows GeneratorNet::layer_audit() {
  return {
      {"fully-connected 4x4x256 + relu", {256, 4, 4}},
      {"up-conv 3x3/256 stride 2 + batchnorm + relu", {256, 8, 8}},
      {"up-conv 3x3/256 stride 2 + batchnorm + relu", {256, 16, 16}},
      {"up-conv 5x5/128 stride 2 + batchnorm + relu", {128, 32, 32}},
      {"up-conv 7x7 stride 2 + batchnorm + tanh", {1, 64, 64}},
  };
}

// --- DCGAN -------------------------------------------------------------------

Dcgan::Dcgan(Rng& rng) : Dcgan(rng, Config{}) {}

Dcgan::Dcgan(Rng& rng, Config cfg)
    : cfg_(cfg),
      gen_store_(std::make_shared<ParamStore>()),
      dis_store_(std::make_shared<ParamStore>()) {
  gen_ = GeneratorNet(*gen_store_, "gen.", cfg_.latent, cfg_.bn_decay, rng);
  c1_ = Conv2d(*dis_store_, "conv1", 1, 64, 7, 2, 3, rng);
  n1_ = BatchNorm(*dis_store_, "bn1", 64, cfg_.bn_decay);
  c2_ = Conv2d(*dis_store_, "conv2", 64, 64, 5, 2, 2, rng);
  n2_ = BatchNorm(*dis_store_, "bn2", 64, cfg_.bn_decay);
  c3_ = Conv2d(*dis_store_, "conv3", 64, 64, 3, 2, 1, rng);
  n3_ = BatchNorm(*dis_store_, "bn3", 64, cfg_.bn_decay);
  fc1_ = Linear(*dis_store_, "fc1", 64 * 8 * 8, 128, rng);
  fc2_ = Linear(*dis_store_, "fc2", 128, 1, rng);
}

Var Dcgan::generate(const Var& z, bool training, ShapeRows* trace) const {
  return gen_(z, training, trace);
}

Var Dcgan::discriminate_logits(const Var& images, bool training,
                               ShapeRows* trace) const {
  SK_CHECK(gen_store_, "model is not initialized");
  int b = check_image_batch(images)->value.dim(0);
  // The discriminator sees the generator's native tanh range.
  Var h = add_scalar(mul_scalar(images, 2.0), -1.0);
  h = reshape(h, {b, 1, kImageSize, kImageSize});
  h = leaky_relu(n1_(c1_(h), training), cfg_.leaky_slope);
  trace_row(trace, "conv 7x7/64 stride 2 + batchnorm + leaky-relu", h);
  h = leaky_relu(n2_(c2_(h), training), cfg_.leaky_slope);
  trace_row(trace, "conv 5x5/64 stride 2 + batchnorm + leaky-relu", h);
  h = leaky_relu(n3_(c3_(h), training), cfg_.leaky_slope);
  trace_row(trace, "conv 3x3/64 stride 2 + batchnorm + leaky-relu", h);
  h = leaky_relu(fc1_(reshape(h, {b, 64 * 8 * 8})), cfg_.leaky_slope);
  trace_row(trace, "fully-connected 128 + leaky-relu", h);
  h = fc2_(h);
  trace_row(trace, "fully-connected 1 + sigmoid", h);
  return h;
}

Tensor Dcgan::sample_z(int n, Rng& rng) const {
  SK_CHECK(n >= 0, "sample count must be >= 0");
  Tensor z({n, cfg_.latent});
  for (long i = 0; i < z.size(); ++i) z[i] = rng.gaussian();
  return z;
}

ShapeRows Dcgan::discriminator_audit() {
  return {
      {"conv 7x7/64 stride 2 + batchnorm + leaky-relu", {64, 32, 32}},
      {"conv 5x5/64 stride 2 + batchnorm + leaky-relu", {64, 16, 16}},
      {"conv 3x3/64 stride 2 + batchnorm + leaky-relu", {64, 8, 8}},
      {"fully-connected 128 + leaky-relu", {128}},
      {"fully-connected 1 + sigmoid", {1}},
  };
}

// --- VAE-GAN -----------------------------------------------------------------

VaeGan::VaeGan(Rng& rng) : VaeGan(rng, Config{}) {}

VaeGan::VaeGan(Rng& rng, Config cfg)
    : cfg_(cfg),
      enc_store_(std::make_shared<ParamStore>()),
      dec_store_(std::make_shared<ParamStore>()) {
  e1_ = Conv2d(*enc_store_, "conv1", 1, 64, 5, 2, 2, rng);
  en1_ = BatchNorm(*enc_store_, "bn1", 64, cfg_.bn_decay);
  e2_ = Conv2d(*enc_store_, "conv2", 64, 128, 3, 2, 1, rng);
  en2_ = BatchNorm(*enc_store_, "bn2", 128, cfg_.bn_decay);
  e3_ = Conv2d(*enc_store_, "conv3", 128, 256, 3, 2, 1, rng);
  en3_ = BatchNorm(*enc_store_, "bn3", 256, cfg_.bn_decay);
  mu_head_ = Linear(*enc_store_, "mu", 256 * 8 * 8, cfg_.latent, rng);
  logvar_head_ = Linear(*enc_store_, "logvar", 256 * 8 * 8, cfg_.latent, rng);
  dec_ = GeneratorNet(*dec_store_, "dec.", cfg_.latent, cfg_.bn_decay, rng);
  Discriminator::Config dc;
  dc.bn_decay = cfg_.bn_decay;
  dc.leaky_slope = cfg_.leaky_slope;
  disc_ = Discriminator(rng, dc);
}

EncodeResult VaeGan::encode(const Var& images, const Var& eps, bool training,
                            ShapeRows* trace) const {
  SK_CHECK(enc_store_, "model is not initialized");
  int b = check_image_batch(images)->value.dim(0);
  SK_CHECK(eps->value.rank() == 2 && eps->value.dim(0) == b &&
               eps->value.dim(1) == cfg_.latent,
           "eps must be [B," << cfg_.latent << "], got "
                             << shape_str(eps->value.shape()));
  Var h = reshape(images, {b, 1, kImageSize, kImageSize});
  h = relu(en1_(e1_(h), training));
  trace_row(trace, "conv 5x5/64 stride 2 + batchnorm + relu", h);
  h = relu(en2_(e2_(h), training));
  trace_row(trace, "conv 3x3/128 stride 2 + batchnorm + relu", h);
  h = relu(en3_(e3_(h), training));
  trace_row(trace, "conv 3x3/256 stride 2 + batchnorm + relu", h);
  h = reshape(h, {b, 256 * 8 * 8});
  EncodeResult out;
  out.mu = mu_head_(h);
  trace_row(trace, "fully-connected 256 (mean)", out.mu);
  out.logvar = logvar_head_(h);
  trace_row(trace, "fully-connected 256 (log-variance)", out.logvar);
  out.z = add(out.mu, mul(exp(mul_scalar(out.logvar, 0.5)), eps));
  return out;
}

Var VaeGan::decode(const Var& z, bool training) const {
  return dec_(z, training);
}

ShapeRows VaeGan::encoder_audit() {
  return {
      {"conv 5x5/64 stride 2 + batchnorm + relu", {64, 32, 32}},
      {"conv 3x3/128 stride 2 + batchnorm + relu", {128, 16, 16}},
      {"conv 3x3/256 stride 2 + batchnorm + relu", {256, 8, 8}},
      {"fully-connected 256 (mean)", {256}},
      {"fully-connected 256 (log-variance)", {256}},
  };
}

// --- baseline selection ------------------------------------------------------

BaselineKind baseline_kind_from_name(const std::string& name) {
  if (name == "dcgan") return BaselineKind::kDcgan;
  if (name == "vaegan") return BaselineKind::kVaeGan;
  if (name == "draw") return BaselineKind::kDraw;
  SK_CHECK(false, "unknown baseline '" << name
                                       << "' (expected dcgan, vaegan, draw)");
  return BaselineKind::kDcgan;  // unreachable
}

std::string baseline_name(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::kDcgan:
      return "dcgan";
    case BaselineKind::kVaeGan:
      return "vaegan";
    case BaselineKind::kDraw:
      return "draw";
  }
  SK_CHECK(false, "invalid baseline kind");
  return "";
}

TrainConfig apply_baseline_recipe(BaselineKind kind, TrainConfig cfg) {
  switch (kind) {
    case BaselineKind::kDcgan:
      cfg.adam_beta1 = 0.5;
      cfg.lr_encdec = 5e-4;
      cfg.lr_disc = 5e-4;
      break;
    case BaselineKind::kVaeGan:
      cfg.adam_beta1 = 0.5;
      cfg.lr_encdec = 1e-4;
      cfg.lr_disc = 1e-4;
      cfg.latent_k = 256;
      break;
    case BaselineKind::kDraw:
      cfg.adam_beta1 = 0.9;
      cfg.lr_encdec = 5e-4;
      cfg.lr_disc = 5e-4;  // unused; kept consistent for the record
      cfg.read_window = 3;
      cfg.write_window = 5;
      break;
  }
  return cfg;
}

// --- baseline trainer --------------------------------------------------------

BaselineTrainer::BaselineTrainer(BaselineKind kind, const TrainConfig& cfg,
                                 LoadedDataset data,
                                 const std::string& resume_from)
    : kind_(kind), cfg_(cfg), data_(std::move(data)) {
  cfg_.validate();
  SK_CHECK(!data_.images.empty(), "cannot train on an empty dataset");

  Rng root(cfg_.seed);
  Rng init_rng = root.fork("init");
  shuffle_rng_ = root.fork("shuffle");
  latent_rng_ = root.fork("latent");
  prior_rng_ = root.fork("prior");
  dropout_rng_ = root.fork("dropout");

  Adam::Config oc;
  oc.beta1 = cfg_.adam_beta1;
  oc.clip_norm = cfg_.grad_clip_norm;

  switch (kind_) {
    case BaselineKind::kDcgan: {
      Dcgan::Config mc;
      mc.latent = cfg_.latent_k;
      mc.bn_decay = cfg_.bn_decay;
      mc.leaky_slope = cfg_.leaky_slope;
      dcgan_ = std::make_unique<Dcgan>(init_rng, mc);
      oc.lr = cfg_.lr_encdec;
      opt_a_ = std::make_unique<Adam>(dcgan_->generator_params().vars(), oc);
      oc.lr = cfg_.lr_disc;
      opt_b_ =
          std::make_unique<Adam>(dcgan_->discriminator_params().vars(), oc);
      break;
    }
    case BaselineKind::kVaeGan: {
      VaeGan::Config mc;
      mc.latent = cfg_.latent_k;
      mc.bn_decay = cfg_.bn_decay;
      mc.leaky_slope = cfg_.leaky_slope;
      vaegan_ = std::make_unique<VaeGan>(init_rng, mc);
      oc.lr = cfg_.lr_encdec;
      opt_a_ = std::make_unique<Adam>(vaegan_->encoder_params().vars(), oc);
      opt_b_ = std::make_unique<Adam>(vaegan_->decoder_params().vars(), oc);
      oc.lr = cfg_.lr_disc;
      opt_c_ = std::make_unique<Adam>(
          vaegan_->discriminator().params().vars(), oc);
      break;
    }
    case BaselineKind::kDraw: {
      ModelConfig mc = cfg_.model_config();
      mc.per_step_latent = true;
      draw_ = std::make_unique<SketchModel>(mc, init_rng);
      oc.lr = cfg_.lr_encdec;
      opt_a_ = std::make_unique<Adam>(draw_->params().vars(), oc);
      break;
    }
  }

  if (!resume_from.empty()) resume(resume_from);
}

Dcgan& BaselineTrainer::dcgan() {
  SK_CHECK(dcgan_, "this trainer does not hold the GAN baseline");
  return *dcgan_;
}

VaeGan& BaselineTrainer::vaegan() {
  SK_CHECK(vaegan_, "this trainer does not hold the autoencoder baseline");
  return *vaegan_;
}

SketchModel& BaselineTrainer::draw() {
  SK_CHECK(draw_, "this trainer does not hold the attention baseline");
  return *draw_;
}

std::vector<Adam*> BaselineTrainer::optimizers() {
  std::vector<Adam*> out;
  for (Adam* o : {opt_a_.get(), opt_b_.get(), opt_c_.get()})
    if (o) out.push_back(o);
  return out;
}

void BaselineTrainer::check_finite(const LossBundle& b, int epoch) const {
  const std::pair<const char*, double> terms[] = {
      {"prior", b.prior},
      {"pixel", b.pixel},
      {"feature", b.feature},
      {"encoder_total", b.encoder_total},
      {"discriminator", b.discriminator},
      {"generator", b.generator}};
  for (const auto& [name, v] : terms)
    SK_CHECK(std::isfinite(v), "non-finite " << baseline_name(kind_)
                                             << " loss at epoch " << epoch
                                             << " step " << step_ + 1 << ": "
                                             << name << " = " << v);
}

StepResult BaselineTrainer::train_step(const Tensor& images, int epoch) {
  SK_CHECK(images.rank() == 3, "expected an image batch, got "
                                   << shape_str(images.shape()));
  StepResult r;
  switch (kind_) {
    case BaselineKind::kDcgan:
      r = step_dcgan(images);
      break;
    case BaselineKind::kVaeGan:
      r = step_vaegan(images);
      break;
    case BaselineKind::kDraw:
      r = step_draw(images);
      break;
  }
  check_finite(r.losses, epoch);
  ++step_;
  return r;
}

StepResult BaselineTrainer::step_dcgan(const Tensor& images) {
  int b = images.dim(0);
  Tensor z = dcgan_->sample_z(b, latent_rng_);
  Var fake = dcgan_->generate(constant(std::move(z)), /*training=*/true);
  Var d_real = dcgan_->discriminate_logits(constant(images), true);
  Var d_fake = dcgan_->discriminate_logits(fake, true);

  Var d_loss = add(bce_with_logits_mean(d_real, ones_target(b)),
                   bce_with_logits_mean(d_fake, zeros_target(b)));
  Var g_loss = bce_with_logits_mean(d_fake, ones_target(b));

  opt_a_->zero_grad();
  opt_b_->zero_grad();
  backward(g_loss, opt_a_->params());
  backward(d_loss, opt_b_->params());
  opt_a_->step();
  opt_b_->step();

  StepResult out;
  out.losses.discriminator = d_loss->value[0];
  out.losses.generator = g_loss->value[0];
  return out;
}

StepResult BaselineTrainer::step_vaegan(const Tensor& images) {
  int b = images.dim(0);
  Tensor eps({b, vaegan_->latent_dim()});
  for (long i = 0; i < eps.size(); ++i) eps[i] = latent_rng_.gaussian();
  Tensor zp({b, vaegan_->latent_dim()});
  for (long i = 0; i < zp.size(); ++i) zp[i] = prior_rng_.gaussian();

  Var x = constant(images);
  EncodeResult er = vaegan_->encode(x, constant(std::move(eps)), true);
  Var recon = vaegan_->decode(er.z, true);
  Var sampled = vaegan_->decode(constant(std::move(zp)), true);

  const Discriminator& d = vaegan_->discriminator();
  Discriminator::Detail dr = d.forward_detail(x, true, &dropout_rng_);
  Discriminator::Detail df = d.forward_detail(recon, true, &dropout_rng_);
  Discriminator::Detail ds = d.forward_detail(sampled, true, &dropout_rng_);

  Var pr = prior_loss(er.mu, exp(er.logvar));
  Var ft = feature_loss(dr.taps, df.taps);
  Var enc_obj = add(pr, ft);
  Var adv = add(bce_with_logits_mean(df.logit, ones_target(b)),
                bce_with_logits_mean(ds.logit, ones_target(b)));
  Var dec_obj = add(ft, adv);
  Var dis_obj = add(add(bce_with_logits_mean(dr.logit, ones_target(b)),
                        bce_with_logits_mean(df.logit, zeros_target(b))),
                    bce_with_logits_mean(ds.logit, zeros_target(b)));

  opt_a_->zero_grad();
  opt_b_->zero_grad();
  opt_c_->zero_grad();
  backward(enc_obj, opt_a_->params());
  backward(dec_obj, opt_b_->params());
  backward(dis_obj, opt_c_->params());
  opt_a_->step();
  opt_b_->step();
  opt_c_->step();

  StepResult out;
  out.losses.prior = pr->value[0];
  out.losses.feature = ft->value[0];
  out.losses.encoder_total = enc_obj->value[0];
  out.losses.discriminator = dis_obj->value[0];
  out.losses.generator = adv->value[0];
  return out;
}

StepResult BaselineTrainer::step_draw(const Tensor& images) {
  int b = images.dim(0);
  Tensor eps = draw_->sample_eps(b, latent_rng_);
  ReconstructResult rec = draw_->reconstruct(images, eps);

  Var pr = prior_loss(rec.mu, exp(rec.logvar));
  // Negative log likelihood of the binary image: per-pixel cross entropy
  // summed over the canvas, averaged over the batch.
  Var nll = mul_scalar(bce_with_logits_mean(rec.canvas, constant(images)),
                       static_cast<double>(kImagePixels));
  Var total = add(pr, nll);

  opt_a_->zero_grad();
  backward(total, opt_a_->params());
  opt_a_->step();

  StepResult out;
  out.losses.prior = pr->value[0];
  out.losses.pixel = nll->value[0];
  out.losses.encoder_total = total->value[0];
  return out;
}

void BaselineTrainer::run(const std::string& out_dir) {
  fs::create_directories(out_dir);
  LossCsv csv(out_dir + "/losses.csv", /*append=*/epoch_ > 0);
  for (int e = epoch_ + 1; e <= cfg_.epochs; ++e) {
    BatchStream stream(data_, cfg_.batch_size, shuffle_rng_.next_u64());
    while (auto mb = stream.next()) {
      StepResult r = train_step(mb->images, e);
      csv.write(step_, e, r.losses, r.skipped_disc);
    }
    epoch_ = e;
    if (e % cfg_.checkpoint_every == 0 || e == cfg_.epochs) {
      std::ostringstream name;
      name << out_dir << "/checkpoint_epoch" << std::setw(4)
           << std::setfill('0') << e << ".bin";
      save_checkpoint(name.str());
      fs::copy_file(name.str(), out_dir + "/checkpoint_latest.bin",
                    fs::copy_options::overwrite_existing);
    }
  }
}

Tensor BaselineTrainer::sample_images(int n, Rng& rng) {
  SK_CHECK(n >= 0, "sample count must be >= 0");
  NoGradGuard no_grad;
  Tensor out({n, kImageSize, kImageSize});
  constexpr int kChunk = 100;
  for (int at = 0; at < n; at += kChunk) {
    int m = std::min(kChunk, n - at);
    Var batch;
    switch (kind_) {
      case BaselineKind::kDcgan:
        batch = dcgan_->generate(constant(dcgan_->sample_z(m, rng)),
                                 /*training=*/false);
        break;
      case BaselineKind::kVaeGan: {
        Tensor z({m, vaegan_->latent_dim()});
        for (long i = 0; i < z.size(); ++i) z[i] = rng.gaussian();
        batch = vaegan_->decode(constant(std::move(z)), false);
        break;
      }
      case BaselineKind::kDraw:
        batch = draw_->decode(constant(draw_->sample_eps(m, rng)));
        break;
    }
    std::copy(batch->value.data(), batch->value.data() + batch->value.size(),
              out.data() + static_cast<long>(at) * kImagePixels);
  }
  return out;
}

void BaselineTrainer::save_checkpoint(const std::string& path) {
  CheckpointData data;
  data.meta["kind"] = "baseline-" + baseline_name(kind_);
  data.meta["epoch"] = epoch_;
  data.meta["step"] = step_;
  data.meta["config"] = config_json(cfg_);
  data.meta["species"] = data_.label_names;
  data.meta["rng"] =
      nlohmann::json{{"shuffle", shuffle_rng_.state()},
                     {"latent", latent_rng_.state()},
                     {"prior", prior_rng_.state()},
                     {"dropout", dropout_rng_.state()}};
  switch (kind_) {
    case BaselineKind::kDcgan:
      add_store(data, "gen.", dcgan_->generator_params());
      add_store(data, "dis.", dcgan_->discriminator_params());
      add_adam(data, "opt_gen.", *opt_a_);
      add_adam(data, "opt_dis.", *opt_b_);
      break;
    case BaselineKind::kVaeGan:
      add_store(data, "enc.", vaegan_->encoder_params());
      add_store(data, "dec.", vaegan_->decoder_params());
      add_store(data, "dis.", vaegan_->discriminator().params());
      add_adam(data, "opt_enc.", *opt_a_);
      add_adam(data, "opt_dec.", *opt_b_);
      add_adam(data, "opt_dis.", *opt_c_);
      break;
    case BaselineKind::kDraw:
      add_store(data, "model.", draw_->params());
      add_adam(data, "opt.", *opt_a_);
      break;
  }
  write_checkpoint(path, data);

  // Round live state to the stored precision so continuing equals resuming.
  switch (kind_) {
    case BaselineKind::kDcgan:
      quantize_store(dcgan_->generator_params());
      quantize_store(dcgan_->discriminator_params());
      break;
    case BaselineKind::kVaeGan:
      quantize_store(vaegan_->encoder_params());
      quantize_store(vaegan_->decoder_params());
      quantize_store(vaegan_->discriminator().params());
      break;
    case BaselineKind::kDraw:
      quantize_store(draw_->params());
      break;
  }
  for (Adam* o : optimizers()) quantize_adam(*o);
}

void BaselineTrainer::resume(const std::string& path) {
  CheckpointData data = read_checkpoint(path);
  std::string want = "baseline-" + baseline_name(kind_);
  SK_CHECK(data.meta.value("kind", "") == want,
           path << " is not a " << want << " checkpoint (kind = '"
                << data.meta.value("kind", "") << "')");
  if (data.meta.contains("config")) {
    const auto& c = data.meta["config"];
    auto expect_eq = [&](const char* key, auto have) {
      SK_CHECK(c.contains(key), "checkpoint config is missing " << key);
      auto want_v = c[key].get<decltype(have)>();
      SK_CHECK(want_v == have, "checkpoint was trained with "
                                   << key << " = " << want_v
                                   << " but the current config has " << have);
    };
    expect_eq("latent_k", cfg_.latent_k);
    if (kind_ == BaselineKind::kDraw) {
      expect_eq("T", cfg_.T);
      expect_eq("hidden", cfg_.hidden);
      expect_eq("read_window", cfg_.read_window);
      expect_eq("write_window", cfg_.write_window);
    }
  }
  switch (kind_) {
    case BaselineKind::kDcgan:
      load_store(data, "gen.", dcgan_->generator_params());
      load_store(data, "dis.", dcgan_->discriminator_params());
      load_adam(data, "opt_gen.", *opt_a_);
      load_adam(data, "opt_dis.", *opt_b_);
      break;
    case BaselineKind::kVaeGan:
      load_store(data, "enc.", vaegan_->encoder_params());
      load_store(data, "dec.", vaegan_->decoder_params());
      load_store(data, "dis.", vaegan_->discriminator().params());
      load_adam(data, "opt_enc.", *opt_a_);
      load_adam(data, "opt_dec.", *opt_b_);
      load_adam(data, "opt_dis.", *opt_c_);
      break;
    case BaselineKind::kDraw:
      load_store(data, "model.", draw_->params());
      load_adam(data, "opt.", *opt_a_);
      break;
  }
  epoch_ = data.meta.at("epoch").get<int>();
  step_ = data.meta.at("step").get<long>();
  const auto& rng = data.meta.at("rng");
  shuffle_rng_.set_state(rng.at("shuffle").get<uint64_t>());
  latent_rng_.set_state(rng.at("latent").get<uint64_t>());
  prior_rng_.set_state(rng.at("prior").get<uint64_t>());
  dropout_rng_.set_state(rng.at("dropout").get<uint64_t>());
}

}  // namespace sketchlab
