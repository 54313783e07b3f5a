#include <cstdio>
#include <string>

#include "doctest.h"
#include "sketchlab/adversary.hpp"
#include "sketchlab/checkpoint.hpp"
#include "sketchlab/nnops.hpp"
#include "testutil.hpp"

using namespace sketchlab;
using testutil::random_tensor;

namespace {

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& p) : path(p) {}
  ~TempFile() { std::remove(path.c_str()); }
};

Tensor random_images(int batch, Rng& rng) {
  Tensor t({batch, kImageSize, kImageSize});
  for (long i = 0; i < t.size(); ++i) t[i] = rng.uniform();
  return t;
}

// Two trivially separable species: a vertical bar on the left or right half,
// with a few pixels of per-image jitter.
LoadedDataset separable_dataset(int per_species, Rng& rng) {
  LoadedDataset data;
  data.label_names = {"left", "right"};
  for (int s = 0; s < 2; ++s) {
    for (int i = 0; i < per_species; ++i) {
      SkeletonImage img;
      int base = (s == 0 ? 10 : 42) + static_cast<int>(rng.uniform_int(6));
      for (int r = 4; r < 60; ++r)
        for (int c = base; c < base + 3; ++c) img.set(r, c, 1.0);
      data.images.push_back(img);
      data.labels.push_back(s);
    }
  }
  return data;
}

Tensor batch_of(const LoadedDataset& data) {
  Tensor t({static_cast<int>(data.size()), kImageSize, kImageSize});
  for (size_t i = 0; i < data.size(); ++i)
    for (long j = 0; j < kImagePixels; ++j)
      t[static_cast<long>(i) * kImagePixels + j] = data.images[i].px[j];
  return t;
}

Var classification_loss(const SurrogateFeatureNet& net,
                        const LoadedDataset& data) {
  Tensor targets({static_cast<int>(data.size()), net.num_species()});
  for (size_t i = 0; i < data.size(); ++i)
    targets[static_cast<long>(i) * net.num_species() + data.labels[i]] = 1.0;
  return bce_with_logits_mean(net.classify(constant(batch_of(data))),
                              constant(std::move(targets)));
}

bool grad_unused(const Var& p) {
  if (p->grad.size() == 0) return true;
  for (long i = 0; i < p->grad.size(); ++i)
    if (p->grad[i] != 0.0) return false;
  return true;
}

}  // namespace

TEST_CASE("discriminator maps image batches to probabilities") {
  Rng rng(60);
  Discriminator d(rng);
  CHECK(d.params().params().size() == 20);  // 4x(conv+bn) + 2 fc, each w+b

  Tensor images = random_images(3, rng);
  Var out = d(constant(images), /*training=*/false);
  REQUIRE(out->value.shape() == Shape{3, 1});
  for (long i = 0; i < 3; ++i) {
    CHECK(out->value[i] > 0.0);
    CHECK(out->value[i] < 1.0);
  }

  // Scoring is deterministic outside of training.
  Var again = d(constant(images), false);
  for (long i = 0; i < 3; ++i) CHECK(out->value[i] == again->value[i]);

  // Training mode needs an explicit noise stream for dropout.
  CHECK_THROWS_AS((void)d(constant(images), true), Error);
  CHECK_THROWS_AS((void)d(constant(random_tensor({3, 8, 8}, rng)), false),
                  Error);
}

TEST_CASE("discriminator dropout is reproducible from its seed") {
  Rng rng(61);
  Discriminator d(rng);
  Tensor images = random_images(4, rng);

  Rng noise_a(99), noise_b(99), noise_c(100);
  Var a = d(constant(images), true, &noise_a);
  Var b = d(constant(images), true, &noise_b);
  Var c = d(constant(images), true, &noise_c);
  bool same_seed_equal = true, other_seed_equal = true;
  for (long i = 0; i < 4; ++i) {
    same_seed_equal = same_seed_equal && a->value[i] == b->value[i];
    other_seed_equal = other_seed_equal && a->value[i] == c->value[i];
  }
  CHECK(same_seed_equal);
  CHECK_FALSE(other_seed_equal);
}

TEST_CASE("discriminator training pass updates norm statistics and gradients") {
  Rng rng(62);
  Discriminator d(rng);
  Tensor images = random_images(4, rng);

  const Tensor* run_mean = nullptr;
  for (const auto& [name, buf] : d.params().buffers())
    if (name == "bn1.running_mean") run_mean = buf.get();
  REQUIRE(run_mean);
  Tensor before = *run_mean;

  Rng noise(7);
  Var score = d(constant(images), true, &noise);
  bool moved = false;
  for (long i = 0; i < run_mean->size(); ++i)
    if ((*run_mean)[i] != before[i]) moved = true;
  CHECK(moved);

  auto params = d.params().vars();
  zero_grad(params);
  backward(sum(score), params);
  for (const auto& [name, p] : d.params().params()) {
    CAPTURE(name);
    CHECK(p->grad.size() == p->value.size());
  }
  CHECK_FALSE(grad_unused(d.params().find("conv1.weight")));
}

TEST_CASE("discriminator layer audit lists the seven stages with shapes") {
  auto audit = Discriminator::layer_audit();
  REQUIRE(audit.size() == 7);
  CHECK(audit[0].second == Shape{64, 32, 32});
  CHECK(audit[1].second == Shape{128, 16, 16});
  CHECK(audit[2].second == Shape{256, 8, 8});
  CHECK(audit[3].second == Shape{256, 4, 4});
  CHECK(audit[4].second == Shape{256});
  CHECK(audit[5].second == Shape{256});
  CHECK(audit[6].second == Shape{1});
}

TEST_CASE("surrogate feature taps have the documented shapes") {
  Rng rng(63);
  SurrogateFeatureNet net(3, rng);
  CHECK(net.name() == "surrogate");
  CHECK(net.num_species() == 3);
  CHECK_FALSE(net.frozen());

  Tensor images = random_images(2, rng);
  auto taps = net.extract(constant(images));
  REQUIRE(taps.size() == FeatureProvider::kLayers);
  CHECK(taps[0]->value.shape() == Shape{2, 16, 32, 32});
  CHECK(taps[1]->value.shape() == Shape{2, 32, 16, 16});
  CHECK(taps[2]->value.shape() == Shape{2, 48, 8, 8});
  CHECK(taps[3]->value.shape() == Shape{2, 64, 4, 4});
  // ReLU taps are non-negative.
  for (const auto& t : taps)
    for (long i = 0; i < t->value.size(); ++i) CHECK(t->value[i] >= 0.0);

  CHECK(net.classify(constant(images))->value.shape() == Shape{2, 3});
}

TEST_CASE("surrogate training reduces classification loss, then freezes") {
  Rng rng(64);
  SurrogateFeatureNet net(2, rng);
  LoadedDataset data = separable_dataset(16, rng);

  double before;
  {
    NoGradGuard ng;
    before = classification_loss(net, data)->value[0];
  }
  Rng train_rng(65);
  double reported = train_surrogate(net, data, 6, 8, 2e-3, train_rng);
  double after;
  {
    NoGradGuard ng;
    after = classification_loss(net, data)->value[0];
  }
  CHECK(std::isfinite(reported));
  CHECK(after < before);

  net.freeze();
  CHECK(net.frozen());
  for (const auto& [name, p] : net.params().params())
    CHECK_FALSE(p->requires_grad);
  Rng again(66);
  CHECK_THROWS_AS((void)train_surrogate(net, data, 1, 8, 1e-3, again), Error);

  // Gradients still flow to the *input* of a frozen provider, while the
  // provider's own parameters stay untouched.
  zero_grad(net.params().vars());
  Var image = make_param(random_images(1, rng));
  auto taps = net.extract(image);
  Var loss = mean(square(taps[0]));
  for (size_t i = 1; i < taps.size(); ++i)
    loss = add(loss, mean(square(taps[i])));
  zero_grad({image});
  backward(loss, {image});
  REQUIRE(image->grad.size() == image->value.size());
  bool input_grad_nonzero = false;
  for (long i = 0; i < image->grad.size(); ++i)
    if (image->grad[i] != 0.0) input_grad_nonzero = true;
  CHECK(input_grad_nonzero);
  for (const auto& [name, p] : net.params().params()) {
    CAPTURE(name);
    CHECK(grad_unused(p));
  }
}

TEST_CASE("deep feature trunk loads from a weight container") {
  TempFile tf("build_test_vgg.bin");
  Rng rng(67);

  CheckpointData weights;
  weights.meta["source"] = "unit-test random";
  for (const auto& [name, shape] : Vgg19Features::expected_weights()) {
    double scale = shape.size() == 1 ? 0.01 : 0.05;
    weights.add(name, random_tensor(shape, rng, scale));
  }
  write_checkpoint(tf.path, weights);

  Vgg19Features net(tf.path);
  CHECK(net.name() == "vgg19");
  for (const auto& [name, p] : net.params().params())
    CHECK_FALSE(p->requires_grad);

  // The first convolution absorbs the RGB kernels by summing input channels.
  Var first = net.params().find("conv1_1.weight");
  REQUIRE(first);
  REQUIRE(first->value.shape() == Shape{64, 1, 3, 3});
  CheckpointData reread = read_checkpoint(tf.path);
  const Tensor* rgb = reread.find("conv1_1.weight");
  REQUIRE(rgb);
  for (long f = 0; f < 64; ++f) {
    for (long k = 0; k < 9; ++k) {
      double expected = 0.0;
      for (long c = 0; c < 3; ++c) expected += (*rgb)[(f * 3 + c) * 9 + k];
      CHECK(first->value[f * 9 + k] == doctest::Approx(expected).epsilon(1e-12));
    }
  }

  Tensor images = random_images(1, rng);
  auto taps = net.extract(constant(images));
  REQUIRE(taps.size() == 4);
  CHECK(taps[0]->value.shape() == Shape{1, 128, 32, 32});
  CHECK(taps[1]->value.shape() == Shape{1, 256, 16, 16});
  CHECK(taps[2]->value.shape() == Shape{1, 512, 8, 8});
  CHECK(taps[3]->value.shape() == Shape{1, 512, 4, 4});
  for (const auto& t : taps)
    for (long i = 0; i < t->value.size(); ++i)
      CHECK(std::isfinite(t->value[i]));
}

TEST_CASE("deep feature trunk reports unusable weight files clearly") {
  // No file at all.
  try {
    Vgg19Features net("no_such_weights.bin");
    FAIL("expected a load failure");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("feature network unavailable") !=
          std::string::npos);
  }

  // A container whose first kernel has the wrong shape.
  {
    TempFile tf("build_test_vgg_badshape.bin");
    Rng rng(68);
    CheckpointData weights;
    weights.add("conv1_1.weight", random_tensor({64, 1, 3, 3}, rng, 0.05));
    weights.add("conv1_1.bias", random_tensor({64}, rng, 0.01));
    write_checkpoint(tf.path, weights);
    CHECK_THROWS_AS((void)Vgg19Features(tf.path), DimensionError);
  }

  // A container missing later layers.
  {
    TempFile tf("build_test_vgg_missing.bin");
    Rng rng(69);
    CheckpointData weights;
    weights.add("conv1_1.weight", random_tensor({64, 3, 3, 3}, rng, 0.05));
    weights.add("conv1_1.bias", random_tensor({64}, rng, 0.01));
    write_checkpoint(tf.path, weights);
    try {
      Vgg19Features net(tf.path);
      FAIL("expected a missing-layer failure");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("missing") != std::string::npos);
    }
  }
}
