#include "sketchlab/adversary.hpp"

#include <algorithm>

#include "sketchlab/checkpoint.hpp"
#include "sketchlab/optim.hpp"

namespace sketchlab {

namespace {

Var as_conv_input(const Var& images) {
  SK_CHECK(images->value.rank() == 3 && images->value.dim(1) == kImageSize &&
               images->value.dim(2) == kImageSize,
           "expected [B," << kImageSize << "," << kImageSize << "] images, got "
                          << shape_str(images->value.shape()));
  int b = images->value.dim(0);
  return reshape(images, {b, 1, kImageSize, kImageSize});
}

}  // namespace

// --- discriminator -----------------------------------------------------------

Discriminator::Discriminator(Rng& rng) : Discriminator(rng, Config{}) {}

Discriminator::Discriminator(Rng& rng, Config cfg)
    : cfg_(cfg), store_(std::make_shared<ParamStore>()) {
  c1_ = Conv2d(*store_, "conv1", 1, 64, 5, 2, 2, rng);
  n1_ = BatchNorm(*store_, "bn1", 64, cfg_.bn_decay);
  c2_ = Conv2d(*store_, "conv2", 64, 128, 3, 2, 1, rng);
  n2_ = BatchNorm(*store_, "bn2", 128, cfg_.bn_decay);
  c3_ = Conv2d(*store_, "conv3", 128, 256, 3, 2, 1, rng);
  n3_ = BatchNorm(*store_, "bn3", 256, cfg_.bn_decay);
  c4_ = Conv2d(*store_, "conv4", 256, 256, 3, 2, 1, rng);
  n4_ = BatchNorm(*store_, "bn4", 256, cfg_.bn_decay);
  fc1_ = Linear(*store_, "fc1", 256 * 4 * 4, 256, rng);
  fc2_ = Linear(*store_, "fc2", 256, 1, rng);
}

Var Discriminator::operator()(const Var& images, bool training,
                              Rng* dropout_rng) const {
  return forward_detail(images, training, dropout_rng).prob;
}

Discriminator::Detail Discriminator::forward_detail(const Var& images,
                                                    bool training,
                                                    Rng* dropout_rng) const {
  SK_CHECK(store_, "discriminator is not initialized");
  SK_CHECK(!training || dropout_rng,
           "training-mode scoring needs a dropout noise stream");
  Detail out;
  Var h = as_conv_input(images);
  h = leaky_relu(n1_(c1_(h), training), cfg_.leaky_slope);
  h = leaky_relu(n2_(c2_(h), training), cfg_.leaky_slope);
  h = leaky_relu(n3_(c3_(h), training), cfg_.leaky_slope);
  out.taps.push_back(h);
  h = leaky_relu(n4_(c4_(h), training), cfg_.leaky_slope);
  out.taps.push_back(h);
  int b = h->value.dim(0);
  h = reshape(h, {b, 256 * 4 * 4});
  h = leaky_relu(fc1_(h), cfg_.leaky_slope);
  out.taps.push_back(h);
  if (training) h = dropout(h, cfg_.dropout_rate, *dropout_rng, true);
  out.logit = fc2_(h);
  out.prob = sigmoid(out.logit);
  return out;
}

std::vector<std::pair<std::string, Shape>> Discriminator::layer_audit() {
  return {
      {"conv 5x5/64 stride 2 + batchnorm + leaky-relu", {64, 32, 32}},
      {"conv 3x3/128 stride 2 + batchnorm + leaky-relu", {128, 16, 16}},
      {"conv 3x3/256 stride 2 + batchnorm + leaky-relu", {256, 8, 8}},
      {"conv 3x3/256 stride 2 + batchnorm + leaky-relu", {256, 4, 4}},
      {"fully-connected 256 + leaky-relu", {256}},
      {"dropout 0.5", {256}},
      {"fully-connected 1 + sigmoid", {1}},
  };
}

// --- surrogate feature net ---------------------------------------------------

SurrogateFeatureNet::SurrogateFeatureNet(int num_species, Rng& rng)
    : num_species_(num_species), store_(std::make_shared<ParamStore>()) {
  SK_CHECK(num_species >= 1, "need at least one species class");
  c1_ = Conv2d(*store_, "stage1", 1, 16, 3, 2, 1, rng);
  c2_ = Conv2d(*store_, "stage2", 16, 32, 3, 2, 1, rng);
  c3_ = Conv2d(*store_, "stage3", 32, 48, 3, 2, 1, rng);
  c4_ = Conv2d(*store_, "stage4", 48, 64, 3, 2, 1, rng);
  head_ = Linear(*store_, "classify", 64 * 4 * 4, num_species, rng);
}

std::vector<Var> SurrogateFeatureNet::taps(const Var& images4) const {
  std::vector<Var> out;
  Var h = relu(c1_(images4));
  out.push_back(h);  // [B,16,32,32]
  h = relu(c2_(h));
  out.push_back(h);  // [B,32,16,16]
  h = relu(c3_(h));
  out.push_back(h);  // [B,48,8,8]
  h = relu(c4_(h));
  out.push_back(h);  // [B,64,4,4]
  return out;
}

std::vector<Var> SurrogateFeatureNet::extract(const Var& images) const {
  return taps(as_conv_input(images));
}

Var SurrogateFeatureNet::classify(const Var& images) const {
  std::vector<Var> t = taps(as_conv_input(images));
  int b = images->value.dim(0);
  return head_(reshape(t.back(), {b, 64 * 4 * 4}));
}

void SurrogateFeatureNet::freeze() {
  for (const auto& [name, p] : store_->params()) p->requires_grad = false;
  frozen_ = true;
}

double train_surrogate(SurrogateFeatureNet& net, const LoadedDataset& data,
                       int epochs, int batch_size, double lr, Rng& rng) {
  SK_CHECK(!net.frozen(), "surrogate is already frozen");
  SK_CHECK(!data.images.empty(), "empty dataset");
  Adam::Config ocfg;
  ocfg.lr = lr;
  Adam opt(net.params().vars(), ocfg);
  double epoch_loss = 0;
  for (int e = 0; e < epochs; ++e) {
    BatchStream stream(data, batch_size, rng.next_u64());
    epoch_loss = 0;
    long batches = 0;
    while (auto mb = stream.next()) {
      Tensor targets({mb->images.dim(0), net.num_species()});
      for (int i = 0; i < mb->images.dim(0); ++i)
        targets[static_cast<long>(i) * net.num_species() + mb->labels[i]] =
            1.0;
      Var logits = net.classify(constant(mb->images));
      Var loss = bce_with_logits_mean(logits, constant(std::move(targets)));
      opt.zero_grad();
      backward(loss, opt.params());
      opt.step();
      epoch_loss += loss->value[0];
      ++batches;
    }
    epoch_loss /= std::max<long>(1, batches);
  }
  return epoch_loss;
}

// --- VGG-19 trunk ------------------------------------------------------------

namespace {

struct VggLayer {
  const char* name;
  int in_ch, out_ch;
  bool pool_after;  // max-pool follows this conv
  bool tap;         // activation is one of the four feature layers
};

constexpr VggLayer kVggLayout[] = {
    {"conv1_1", 3, 64, false, false},   {"conv1_2", 64, 64, true, false},
    {"conv2_1", 64, 128, false, false}, {"conv2_2", 128, 128, false, true},
    {"conv3_1", 128, 256, false, false}, {"conv3_2", 256, 256, false, false},
    {"conv3_3", 256, 256, false, false}, {"conv3_4", 256, 256, false, true},
    {"conv4_1", 256, 512, false, false}, {"conv4_2", 512, 512, false, false},
    {"conv4_3", 512, 512, false, false}, {"conv4_4", 512, 512, false, true},
    {"conv5_1", 512, 512, false, false}, {"conv5_2", 512, 512, false, false},
    {"conv5_3", 512, 512, false, false}, {"conv5_4", 512, 512, false, true},
};

// Pools sit after blocks 2, 3 and 4 as well; encode them via tap positions:
// a tap at 32/16/8 is followed by a pool before the next block.
bool pool_after_layer(int idx) {
  return kVggLayout[idx].pool_after ||
         (kVggLayout[idx].tap && std::string(kVggLayout[idx].name) != "conv5_4");
}

}  // namespace

Vgg19Features::Vgg19Features(const std::string& weights_path)
    : store_(std::make_shared<ParamStore>()) {
  CheckpointData data;
  try {
    data = read_checkpoint(weights_path);
  } catch (const Error& e) {
    throw Error(std::string("feature network unavailable: ") + e.what());
  }
  Rng dummy(0);
  for (const VggLayer& l : kVggLayout) {
    // conv1_1 consumes the single-channel input directly; its RGB kernels
    // are collapsed below.
    int in_ch = std::string(l.name) == "conv1_1" ? 1 : l.in_ch;
    convs_.emplace_back(*store_, l.name, in_ch, l.out_ch, 3, 1, 1, dummy);

    const Tensor* w = data.find(std::string(l.name) + ".weight");
    const Tensor* b = data.find(std::string(l.name) + ".bias");
    SK_CHECK(w && b, "feature network unavailable: container is missing "
                         << l.name);
    SK_THROW_IF(!(w->shape() == Shape{l.out_ch, l.in_ch, 3, 3}),
                DimensionError,
                l.name << ".weight has shape " << shape_str(w->shape())
                       << ", expected "
                       << shape_str({l.out_ch, l.in_ch, 3, 3}));
    SK_THROW_IF(!(b->shape() == Shape{l.out_ch}), DimensionError,
                l.name << ".bias has shape " << shape_str(b->shape()));

    Var wv = store_->find(std::string(l.name) + ".weight");
    Var bv = store_->find(std::string(l.name) + ".bias");
    if (in_ch != l.in_ch) {
      // Sum over the RGB input channels: conv(replicate(x)) == conv'(x).
      Tensor collapsed({l.out_ch, 1, 3, 3});
      for (int f = 0; f < l.out_ch; ++f)
        for (int c = 0; c < l.in_ch; ++c)
          for (int k = 0; k < 9; ++k)
            collapsed[static_cast<long>(f) * 9 + k] +=
                (*w)[(static_cast<long>(f) * l.in_ch + c) * 9 + k];
      wv->value = collapsed;
    } else {
      wv->value = *w;
    }
    bv->value = *b;
  }
  for (const auto& [name, p] : store_->params()) p->requires_grad = false;
}

std::vector<Var> Vgg19Features::extract(const Var& images) const {
  Var h = as_conv_input(images);
  std::vector<Var> out;
  for (size_t i = 0; i < convs_.size(); ++i) {
    h = relu(convs_[i](h));
    if (kVggLayout[i].tap) out.push_back(h);
    if (pool_after_layer(static_cast<int>(i))) h = maxpool2d(h);
  }
  SK_CHECK(out.size() == kLayers, "expected " << kLayers << " taps");
  return out;
}

std::vector<std::pair<std::string, Shape>> Vgg19Features::expected_weights() {
  std::vector<std::pair<std::string, Shape>> out;
  for (const VggLayer& l : kVggLayout) {
    out.emplace_back(std::string(l.name) + ".weight",
                     Shape{l.out_ch, l.in_ch, 3, 3});
    out.emplace_back(std::string(l.name) + ".bias", Shape{l.out_ch});
  }
  return out;
}

}  // namespace sketchlab
