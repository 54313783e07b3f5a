#include <cmath>
#include <set>
#include <vector>

#include "doctest.h"
#include "sketchlab/modelcore.hpp"
#include "testutil.hpp"

using namespace sketchlab;
using testutil::random_tensor;

namespace {

ModelConfig reduced_config(bool per_step = false) {
  ModelConfig c;
  c.image_size = 8;
  c.timesteps = 2;
  c.hidden = 8;
  c.latent = 4;
  c.read_window = 2;
  c.write_window = 3;
  c.per_step_latent = per_step;
  return c;
}

Tensor random_image_batch(int b, int n, Rng& rng) {
  Tensor x({b, n, n});
  for (long i = 0; i < x.size(); ++i) x[i] = rng.uniform();
  return x;
}

// Reconstruction error plus a latent regularizer; exercises every parameter.
Var composite_loss(const SketchModel& m, const Tensor& x, const Tensor& eps) {
  ReconstructResult r = m.reconstruct(x, eps);
  Var mse = mean(square(sub(r.image, constant(x))));
  Var reg = sum(add(square(r.mu), sub(exp(r.logvar), r.logvar)));
  return add(mse, mul_scalar(reg, 0.05));
}

}  // namespace

TEST_CASE("model registers the expected parameter tensors") {
  Rng rng(1);
  ModelConfig c = reduced_config();
  SketchModel m(c, rng);
  std::set<std::string> names;
  for (auto& [n, p] : m.params().params()) names.insert(n);
  for (const char* n :
       {"encoder_lstm.weight", "encoder_lstm.bias", "decoder_lstm.weight",
        "decoder_lstm.bias", "read_attention.weight", "read_attention.bias",
        "write_attention.weight", "write_attention.bias", "write_patch.weight",
        "write_patch.bias", "latent_map.weight", "latent_map.bias"})
    CHECK(names.count(n) == 1);
  CHECK(names.size() == 12);

  // Encoder input is two flattened read windows.
  Var ew = m.params().find("encoder_lstm.weight");
  CHECK(ew->value.dim(0) == 2 * 2 * 2 + c.hidden);
  // Interleaved mode additionally conditions on the previous decoder state.
  Rng rng2(1);
  SketchModel md(reduced_config(true), rng2);
  Var ew2 = md.params().find("encoder_lstm.weight");
  CHECK(ew2->value.dim(0) == 2 * 2 * 2 + 2 * c.hidden);

  CHECK(m.sample_dim() == 4);
  CHECK(md.sample_dim() == 2 * 4);
}

TEST_CASE("encoder and decoder parameter groups partition the store") {
  Rng rng(2);
  SketchModel m(reduced_config(), rng);
  auto enc = m.encoder_params();
  auto dec = m.decoder_params();
  CHECK(enc.size() == 6);
  CHECK(dec.size() == 6);
  std::set<Node*> seen;
  for (auto& p : enc) seen.insert(p.get());
  for (auto& p : dec) CHECK(seen.count(p.get()) == 0);
  CHECK(enc.size() + dec.size() == m.params().params().size());
}

TEST_CASE("encoding is deterministic and centered by the noise") {
  Rng rng(3);
  SketchModel m(reduced_config(), rng);
  Rng data(10);
  Tensor x = random_image_batch(2, 8, data);

  Tensor eps0 = Tensor::zeros({2, 4});
  EncodeResult a = m.encode(x, eps0);
  EncodeResult b = m.encode(x, eps0);
  for (long i = 0; i < a.z->value.size(); ++i) {
    CHECK(a.z->value[i] == b.z->value[i]);
    CHECK(a.z->value[i] == a.mu->value[i]);  // eps = 0 -> z = mu
  }
  for (long i = 0; i < a.logvar->value.size(); ++i)
    CHECK(std::exp(a.logvar->value[i]) > 0.0);

  Rng noise(77);
  Tensor eps = m.sample_eps(2, noise);
  EncodeResult c = m.encode(x, eps);
  Rng noise2(77);
  EncodeResult d = m.encode(x, m.sample_eps(2, noise2));
  for (long i = 0; i < c.z->value.size(); ++i)
    CHECK(c.z->value[i] == d.z->value[i]);
}

TEST_CASE("decoding is deterministic with sigmoid-bounded output and frames") {
  Rng rng(4);
  ModelConfig cfg = reduced_config();
  cfg.timesteps = 5;
  SketchModel m(cfg, rng);
  Rng zr(8);
  Var z = constant(random_tensor({3, 4}, zr));

  std::vector<Tensor> frames;
  Var img = m.decode(z, &frames);
  REQUIRE(img->value.shape() == Shape{3, 8, 8});
  for (long i = 0; i < img->value.size(); ++i) {
    CHECK(img->value[i] > 0.0);
    CHECK(img->value[i] < 1.0);
  }
  REQUIRE(frames.size() == 5);
  for (long i = 0; i < img->value.size(); ++i)
    CHECK(frames.back()[i] == img->value[i]);  // bitwise

  Var img2 = m.decode(z);
  for (long i = 0; i < img->value.size(); ++i)
    CHECK(img2->value[i] == img->value[i]);

  Tensor bad = z->value;
  bad[0] = std::nan("");
  CHECK_THROWS_AS((void)m.decode(constant(bad)), Error);
}

TEST_CASE("decoding is locally smooth in the latent code at initialization") {
  Rng rng(5);
  SketchModel m(reduced_config(), rng);
  Rng zr(9);
  Tensor z0 = random_tensor({1, 4}, zr);
  Tensor z1 = z0;
  for (long i = 0; i < z1.size(); ++i) z1[i] += 1e-6 / std::sqrt(4.0);
  Var a = m.decode(constant(z0));
  Var b = m.decode(constant(z1));
  for (long i = 0; i < a->value.size(); ++i)
    CHECK(std::abs(a->value[i] - b->value[i]) < 1e-3);
}

TEST_CASE("interleaved mode stacks per-step codes") {
  Rng rng(6);
  ModelConfig cfg = reduced_config(true);
  cfg.timesteps = 3;
  SketchModel m(cfg, rng);
  Rng data(11);
  Tensor x = random_image_batch(2, 8, data);
  Rng noise(12);
  Tensor eps = m.sample_eps(2, noise);
  REQUIRE(eps.shape() == Shape{2, 12});

  ReconstructResult r = m.reconstruct(x, eps);
  CHECK(r.mu->value.shape() == Shape{2, 12});
  CHECK(r.logvar->value.shape() == Shape{2, 12});
  CHECK(r.z->value.shape() == Shape{2, 12});
  CHECK(r.image->value.shape() == Shape{2, 8, 8});

  // The stacked code replays to a (different) valid image via pure decoding.
  std::vector<Tensor> frames;
  Var img = m.decode(constant(r.z->value), &frames);
  CHECK(frames.size() == 3);
  for (long i = 0; i < img->value.size(); ++i) {
    CHECK(img->value[i] > 0.0);
    CHECK(img->value[i] < 1.0);
  }

  CHECK_THROWS_AS((void)m.encode(x, eps), Error);
}

TEST_CASE("reduced model matches finite-difference gradients") {
  Rng rng(7);
  SketchModel m(reduced_config(), rng);
  Rng data(13);
  Tensor x = random_image_batch(2, 8, data);
  Rng noise(14);
  Tensor eps = m.sample_eps(2, noise);

  auto build = [&]() { return composite_loss(m, x, eps); };
  auto stats =
      testutil::check_gradients(build, m.params().vars(), 12, 1e-5, 7, 1e-3);
  CHECK(stats.coords_checked >= 100);
  MESSAGE("single-code max rel err: " << stats.max_rel_err);
}

TEST_CASE("reduced interleaved model matches finite-difference gradients") {
  Rng rng(8);
  SketchModel m(reduced_config(true), rng);
  Rng data(15);
  Tensor x = random_image_batch(2, 8, data);
  Rng noise(16);
  Tensor eps = m.sample_eps(2, noise);

  auto build = [&]() { return composite_loss(m, x, eps); };
  auto stats =
      testutil::check_gradients(build, m.params().vars(), 12, 1e-5, 7, 1e-3);
  CHECK(stats.coords_checked >= 100);
  MESSAGE("per-step max rel err: " << stats.max_rel_err);
}
