#include "sketchlab/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "sketchlab/checkpoint.hpp"

namespace sketchlab {

namespace fs = std::filesystem;

// --- configuration -----------------------------------------------------------

ModelConfig TrainConfig::model_config() const {
  ModelConfig m;
  m.timesteps = T;
  m.hidden = hidden;
  m.latent = latent_k;
  m.read_window = read_window;
  m.write_window = write_window;
  return m;
}

LossWeights TrainConfig::loss_weights() const {
  return LossWeights{lambda_pxl, lambda_feat};
}

void TrainConfig::validate() const {
  SK_CHECK(epochs >= 1, "epochs must be >= 1, got " << epochs);
  SK_CHECK(batch_size >= 1, "batch_size must be >= 1, got " << batch_size);
  SK_CHECK(lr_encdec > 0 && lr_disc > 0, "learning rates must be positive");
  SK_CHECK(adam_beta1 >= 0 && adam_beta1 < 1,
           "adam_beta1 must lie in [0,1), got " << adam_beta1);
  SK_CHECK(grad_clip_norm >= 0, "grad_clip_norm must be >= 0");
  SK_CHECK(bn_decay >= 0 && bn_decay < 1, "bn_decay must lie in [0,1)");
  SK_CHECK(skip_coefficient > 0, "skip_coefficient must be positive");
  SK_CHECK(skip_log_base > 1, "skip_log_base must exceed 1");
  SK_CHECK(checkpoint_every >= 1, "checkpoint_every must be >= 1");
  SK_CHECK(feature_net == "surrogate" || feature_net == "vgg19",
           "feature_net must be 'surrogate' or 'vgg19', got " << feature_net);
  SK_CHECK(surrogate_epochs >= 0, "surrogate_epochs must be >= 0");
  SK_CHECK(lambda_pxl >= 0 && lambda_feat >= 0,
           "loss weights must be >= 0");
  // Model-shape fields are validated when the model is built.
}

namespace {

long long parse_ll(const std::string& key, const std::string& value) {
  size_t pos = 0;
  long long v = 0;
  try {
    v = std::stoll(value, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  SK_CHECK(pos == value.size() && !value.empty(),
           "config key '" << key << "' needs an integer, got '" << value
                          << "'");
  return v;
}

double parse_d(const std::string& key, const std::string& value) {
  size_t pos = 0;
  double v = 0;
  try {
    v = std::stod(value, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  SK_CHECK(pos == value.size() && !value.empty(),
           "config key '" << key << "' needs a number, got '" << value << "'");
  return v;
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

void set_config_key(TrainConfig& cfg, const std::string& key,
                    const std::string& value) {
  if (key == "epochs") cfg.epochs = static_cast<int>(parse_ll(key, value));
  else if (key == "batch_size") cfg.batch_size = static_cast<int>(parse_ll(key, value));
  else if (key == "lr_encdec") cfg.lr_encdec = parse_d(key, value);
  else if (key == "lr_disc") cfg.lr_disc = parse_d(key, value);
  else if (key == "adam_beta1") cfg.adam_beta1 = parse_d(key, value);
  else if (key == "grad_clip_norm") cfg.grad_clip_norm = parse_d(key, value);
  else if (key == "leaky_slope") cfg.leaky_slope = parse_d(key, value);
  else if (key == "bn_decay") cfg.bn_decay = parse_d(key, value);
  else if (key == "T") cfg.T = static_cast<int>(parse_ll(key, value));
  else if (key == "hidden") cfg.hidden = static_cast<int>(parse_ll(key, value));
  else if (key == "latent_k") cfg.latent_k = static_cast<int>(parse_ll(key, value));
  else if (key == "read_window") cfg.read_window = static_cast<int>(parse_ll(key, value));
  else if (key == "write_window") cfg.write_window = static_cast<int>(parse_ll(key, value));
  else if (key == "skip_coefficient") cfg.skip_coefficient = parse_d(key, value);
  else if (key == "skip_log_base") cfg.skip_log_base = parse_d(key, value);
  else if (key == "seed") cfg.seed = static_cast<uint64_t>(parse_ll(key, value));
  else if (key == "checkpoint_every") cfg.checkpoint_every = static_cast<int>(parse_ll(key, value));
  else if (key == "feature_net") cfg.feature_net = value;
  else if (key == "feature_weights_file") cfg.feature_weights_file = value;
  else if (key == "surrogate_epochs") cfg.surrogate_epochs = static_cast<int>(parse_ll(key, value));
  else if (key == "lambda_pxl") cfg.lambda_pxl = parse_d(key, value);
  else if (key == "lambda_feat") cfg.lambda_feat = parse_d(key, value);
  else SK_CHECK(false, "unknown config key '" << key << "'");
}

TrainConfig load_train_config(const std::string& path) {
  std::ifstream in(path);
  SK_CHECK(in.good(), "cannot open config file " << path);
  TrainConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (size_t hash = line.find('#'); hash != std::string::npos)
      line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    SK_CHECK(eq != std::string::npos,
             path << ":" << lineno << ": expected 'key = value', got '" << line
                  << "'");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    try {
      set_config_key(cfg, key, value);
    } catch (const Error& e) {
      throw Error(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

nlohmann::json config_json(const TrainConfig& cfg) {
  return nlohmann::json{{"epochs", cfg.epochs},
                        {"batch_size", cfg.batch_size},
                        {"lr_encdec", cfg.lr_encdec},
                        {"lr_disc", cfg.lr_disc},
                        {"adam_beta1", cfg.adam_beta1},
                        {"grad_clip_norm", cfg.grad_clip_norm},
                        {"leaky_slope", cfg.leaky_slope},
                        {"bn_decay", cfg.bn_decay},
                        {"T", cfg.T},
                        {"hidden", cfg.hidden},
                        {"latent_k", cfg.latent_k},
                        {"read_window", cfg.read_window},
                        {"write_window", cfg.write_window},
                        {"skip_coefficient", cfg.skip_coefficient},
                        {"skip_log_base", cfg.skip_log_base},
                        {"seed", cfg.seed},
                        {"checkpoint_every", cfg.checkpoint_every},
                        {"feature_net", cfg.feature_net},
                        {"feature_weights_file", cfg.feature_weights_file},
                        {"surrogate_epochs", cfg.surrogate_epochs},
                        {"lambda_pxl", cfg.lambda_pxl},
                        {"lambda_feat", cfg.lambda_feat}};
}

// --- skip schedule -----------------------------------------------------------

bool should_skip_disc(double l_dis, double l_gen, int epoch,
                      double coefficient, double log_base) {
  SK_CHECK(epoch >= 1, "epochs are 1-indexed, got " << epoch);
  if (l_gen == 0.0) return true;  // infinite ratio
  double ratio = std::abs(l_dis / l_gen);
  double threshold =
      coefficient * (std::log(1.0 + epoch) / std::log(log_base));
  return ratio >= threshold;
}

// --- trainer -----------------------------------------------------------------

Trainer::Trainer(const TrainConfig& cfg, LoadedDataset data,
                 const std::string& resume_from)
    : cfg_(cfg), data_(std::move(data)) {
  cfg_.validate();
  SK_CHECK(!data_.images.empty(), "training dataset is empty");
  const bool resuming = !resume_from.empty();

  Rng root(cfg_.seed);
  Rng init_rng = root.fork("init");
  shuffle_rng_ = root.fork("shuffle");
  latent_rng_ = root.fork("latent");
  prior_rng_ = root.fork("prior");
  dropout_rng_ = root.fork("dropout");

  model_ = std::make_unique<SketchModel>(cfg_.model_config(), init_rng);
  Discriminator::Config dcfg;
  dcfg.bn_decay = cfg_.bn_decay;
  dcfg.leaky_slope = cfg_.leaky_slope;
  disc_ = Discriminator(init_rng, dcfg);

  if (cfg_.feature_net == "surrogate") {
    int species = std::max<int>(1, static_cast<int>(data_.label_names.size()));
    auto net = std::make_unique<SurrogateFeatureNet>(species, init_rng);
    if (cfg_.surrogate_epochs > 0 && !resuming) {
      Rng pre_rng = root.fork("feature-train");
      train_surrogate(*net, data_, cfg_.surrogate_epochs,
                      std::min(cfg_.batch_size, 32), 1e-3, pre_rng);
    }
    net->freeze();
    features_ = std::move(net);
  } else {
    features_ = std::make_unique<Vgg19Features>(cfg_.feature_weights_file);
  }

  Adam::Config oc;
  oc.beta1 = cfg_.adam_beta1;
  oc.clip_norm = cfg_.grad_clip_norm;
  oc.lr = cfg_.lr_encdec;
  opt_enc_ = std::make_unique<Adam>(model_->encoder_params(), oc);
  opt_dec_ = std::make_unique<Adam>(model_->decoder_params(), oc);
  oc.lr = cfg_.lr_disc;
  opt_dis_ = std::make_unique<Adam>(disc_.params().vars(), oc);

  if (resuming) resume(resume_from);
}

void Trainer::check_finite(const LossBundle& b, int epoch) const {
  const std::pair<const char*, double> terms[] = {
      {"prior", b.prior},         {"pixel", b.pixel},
      {"feature", b.feature},     {"encoder_total", b.encoder_total},
      {"discriminator", b.discriminator}, {"generator", b.generator}};
  for (const auto& [name, v] : terms) {
    SK_CHECK(std::isfinite(v), "non-finite loss at epoch "
                                   << epoch << " step " << step_ + 1 << ": "
                                   << name << " = " << v
                                   << " (prior=" << b.prior
                                   << " pixel=" << b.pixel
                                   << " feature=" << b.feature
                                   << " dis=" << b.discriminator
                                   << " gen=" << b.generator << ")");
  }
}

StepResult Trainer::train_step(const Tensor& images, int epoch) {
  SK_CHECK(images.rank() == 3, "expected an image batch, got "
                                   << shape_str(images.shape()));
  int b = images.dim(0);

  // Forward: reconstruction, a decode of fresh prior noise, and the three
  // discriminator scores, all in one graph so the routed backward passes
  // reuse shared values.
  Tensor eps = model_->sample_eps(b, latent_rng_);
  ReconstructResult rec = model_->reconstruct(images, eps);
  Tensor zr({b, model_->sample_dim()});
  for (long i = 0; i < zr.size(); ++i) zr[i] = prior_rng_.gaussian();
  Var random_image = model_->decode(constant(std::move(zr)));

  Var x = constant(images);
  Var d_real = disc_(x, /*training=*/true, &dropout_rng_);
  Var d_random = disc_(random_image, true, &dropout_rng_);
  Var d_recon = disc_(rec.image, true, &dropout_rng_);

  Var pr = prior_loss(rec.mu, exp(rec.logvar));
  Var px = pixel_loss(x, rec.image);
  Var ft = feature_loss(features_->extract(x), features_->extract(rec.image));
  LossWeights w = cfg_.loss_weights();
  Var enc = encoder_objective(pr, px, ft, w);
  Var dis = discriminator_loss(d_real, d_random, d_recon);
  Var gen = generator_loss(d_random, d_recon);

  StepResult out;
  out.losses = LossBundle::from(pr->value[0], px->value[0], ft->value[0],
                                dis->value[0], gen->value[0], w);
  check_finite(out.losses, epoch);
  out.skipped_disc =
      should_skip_disc(out.losses.discriminator, out.losses.generator, epoch,
                       cfg_.skip_coefficient, cfg_.skip_log_base);

  // Routing: encoder <- d(enc)/dθ, decoder <- d(enc + gen)/dθ,
  // discriminator <- d(dis)/dθ.  Backward passes are scoped to a parameter
  // group, so e.g. the generator term never deposits gradient in the encoder
  // or the discriminator.
  opt_enc_->zero_grad();
  opt_dec_->zero_grad();
  opt_dis_->zero_grad();
  std::vector<Var> encdec = opt_enc_->params();
  encdec.insert(encdec.end(), opt_dec_->params().begin(),
                opt_dec_->params().end());
  backward(enc, encdec);
  backward(gen, opt_dec_->params());
  backward(dis, opt_dis_->params());

  opt_enc_->step();
  opt_dec_->step();
  if (!out.skipped_disc) opt_dis_->step();  // skip freezes moments too

  ++step_;
  return out;
}

void Trainer::run(const std::string& out_dir) {
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

void Trainer::save_checkpoint(const std::string& path) {
  CheckpointData data;
  data.meta["kind"] = "sketch-trainer";
  data.meta["epoch"] = epoch_;
  data.meta["step"] = step_;
  data.meta["config"] = config_json(cfg_);
  data.meta["species"] = data_.label_names;
  data.meta["rng"] =
      nlohmann::json{{"shuffle", shuffle_rng_.state()},
                     {"latent", latent_rng_.state()},
                     {"prior", prior_rng_.state()},
                     {"dropout", dropout_rng_.state()}};
  add_store(data, "model.", model_->params());
  add_store(data, "disc.", disc_.params());
  if (features_->name() == "surrogate")
    add_store(data, "feature.", features_->params());
  add_adam(data, "opt_enc.", *opt_enc_);
  add_adam(data, "opt_dec.", *opt_dec_);
  add_adam(data, "opt_dis.", *opt_dis_);
  write_checkpoint(path, data);

  // Drop live state to the stored precision so the continuation of this run
  // and a resume from the file follow identical trajectories.
  quantize_store(model_->params());
  quantize_store(disc_.params());
  quantize_store(features_->params());
  quantize_adam(*opt_enc_);
  quantize_adam(*opt_dec_);
  quantize_adam(*opt_dis_);
}

void Trainer::resume(const std::string& path) {
  CheckpointData data = read_checkpoint(path);
  SK_CHECK(data.meta.value("kind", "") == "sketch-trainer",
           path << " is not a trainer checkpoint");
  if (data.meta.contains("config")) {
    const auto& c = data.meta["config"];
    auto expect_eq = [&](const char* key, auto have) {
      SK_CHECK(c.contains(key), "checkpoint config is missing " << key);
      auto want = c[key].get<decltype(have)>();
      SK_CHECK(want == have, "checkpoint was trained with "
                                 << key << " = " << want
                                 << " but the current config has " << have);
    };
    expect_eq("T", cfg_.T);
    expect_eq("hidden", cfg_.hidden);
    expect_eq("latent_k", cfg_.latent_k);
    expect_eq("read_window", cfg_.read_window);
    expect_eq("write_window", cfg_.write_window);
    expect_eq("feature_net", cfg_.feature_net);
  }
  load_store(data, "model.", model_->params());
  load_store(data, "disc.", disc_.params());
  if (features_->name() == "surrogate")
    load_store(data, "feature.", features_->params());
  load_adam(data, "opt_enc.", *opt_enc_);
  load_adam(data, "opt_dec.", *opt_dec_);
  load_adam(data, "opt_dis.", *opt_dis_);
  epoch_ = data.meta.at("epoch").get<int>();
  step_ = data.meta.at("step").get<long>();
  const auto& rng = data.meta.at("rng");
  shuffle_rng_.set_state(rng.at("shuffle").get<uint64_t>());
  latent_rng_.set_state(rng.at("latent").get<uint64_t>());
  prior_rng_.set_state(rng.at("prior").get<uint64_t>());
  dropout_rng_.set_state(rng.at("dropout").get<uint64_t>());
}

}  // namespace sketchlab
