/*
 * Copyright 2026 The hdrvq Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "pipeline.hpp"
#include "vq.hpp"

using namespace hdrvq;
using hdrvq::testing::random_tensor;

namespace {

// Exhaustive argmin in plain double arithmetic, written independently of
// the library search (expansion form, reverse iteration order).
int brute_force_nearest(const float* q, const float* entries, int n, int d) {
  int best = n - 1;
  double best_dist = 1e300;
  for (int e = n - 1; e >= 0; --e) {
    double dist = 0.0;
    for (int c = 0; c < d; ++c) {
      const double diff = static_cast<double>(q[c]) - entries[e * d + c];
      dist += diff * diff;
    }
    if (dist <= best_dist) {  // reverse order: <= keeps the smaller index
      best_dist = dist;
      best = e;
    }
  }
  return best;
}

RunConfig tiny_config() {
  RunConfig cfg;
  cfg.set("model.base_channels", "8");
  cfg.set("model.codebook_size", "32");
  cfg.set("model.codebook_dim", "16");
  cfg.set("phase1.steps", "220");
  cfg.set("phase1.batch", "2");
  cfg.set("phase1.crop", "16");
  cfg.set("phase1.lr", "2e-3");
  return cfg;
}

}  // namespace

TEST_CASE("quantize: documented cases and the tie rule") {
  // Codebook {(0,0),(1,1)}: query (0.2,0.1) is nearest to entry 0.
  Tensor entries = Tensor::from_data({2, 2}, {0.0f, 0.0f, 1.0f, 1.0f});
  Tensor z = Tensor::from_data({1, 2, 1, 1}, {0.2f, 0.1f});
  QuantizeResult qr = quantize(z, entries);
  CHECK(qr.indices[0] == 0);
  CHECK(qr.distances.data()[0] == doctest::Approx(0.05).epsilon(1e-6));

  // Query equal to an entry: distance 0.
  Tensor z2 = Tensor::from_data({1, 2, 1, 1}, {1.0f, 1.0f});
  QuantizeResult qr2 = quantize(z2, entries);
  CHECK(qr2.indices[0] == 1);
  CHECK(qr2.distances.data()[0] == doctest::Approx(0.0));

  // Equidistant query resolves toward the smaller index.
  Tensor mid = Tensor::from_data({1, 2, 1, 1}, {0.5f, 0.5f});
  CHECK(quantize(mid, entries).indices[0] == 0);

  // Larger codebook with an exact tie between entries 2 and 5; every other
  // entry is far away.
  Tensor book = Tensor::full({8, 2}, 100.0f);
  book.data()[2 * 2] = 0.0f;
  book.data()[2 * 2 + 1] = 0.0f;
  book.data()[5 * 2] = 3.0f;
  book.data()[5 * 2 + 1] = 0.0f;
  Tensor q35 = Tensor::from_data({1, 2, 1, 1}, {1.5f, 0.0f});
  CHECK(quantize(q35, book).indices[0] == 2);
}

TEST_CASE("quantize matches exhaustive brute force on random instances") {
  Pcg32 rng(101);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(40));
    const int d = 1 + static_cast<int>(rng.below(12));
    Tensor entries = random_tensor({n, d}, rng);
    Tensor z = random_tensor({1, d, 2, 3}, rng);
    QuantizeResult qr = quantize(z, entries);
    const std::vector<float> q = to_position_major(z);
    for (int p = 0; p < 6; ++p) {
      const int want = brute_force_nearest(q.data() + p * d, entries.data(), n, d);
      CHECK(qr.indices[static_cast<size_t>(p)] == want);
    }
  }
}

TEST_CASE("quantize output rows are bit-copies of codebook rows") {
  Pcg32 rng(7);
  Tensor entries = random_tensor({16, 8}, rng);
  Tensor z = random_tensor({2, 8, 2, 2}, rng);
  QuantizeResult qr = quantize(z, entries);
  const int hw = 4;
  for (int n = 0; n < 2; ++n)
    for (int i = 0; i < hw; ++i) {
      const int idx = qr.indices[static_cast<size_t>(n) * hw + i];
      for (int c = 0; c < 8; ++c) {
        const float got = qr.z_hat.data()[(static_cast<int64_t>(n) * 8 + c) * hw + i];
        CHECK(got == entries.data()[idx * 8 + c]);
      }
    }
}

TEST_CASE("straight-through: gradient passes to the latent unchanged") {
  Pcg32 rng(13);
  Tensor entries = random_tensor({8, 4}, rng);
  Tensor z = random_tensor({1, 4, 2, 2}, rng);
  Tape tape;
  Tensor zt = tape.watch(z);
  QuantizeResult qr = quantize(zt, entries, &tape);
  Tensor loss = ops::mean_all(ops::square(qr.z_hat, &tape), &tape);
  tape.backward(loss);
  Tensor g = tape.grad(zt);
  // d loss / d z_hat = 2 z_hat / numel, forwarded verbatim to z.
  for (int64_t i = 0; i < z.numel(); ++i)
    CHECK(g.data()[i] ==
          doctest::Approx(2.0f * qr.z_hat.data()[i] / static_cast<float>(z.numel())));
}

TEST_CASE("gather_entries scatters gradients into selected rows only") {
  Tensor entries = Tensor::from_data({3, 2}, {0.f, 0.f, 1.f, 1.f, 2.f, 2.f});
  std::vector<int> idx = {1, 1, 2, 0};
  Tape tape;
  Tensor et = tape.watch(entries);
  Tensor out = gather_entries(et, idx, {1, 2, 2, 2}, &tape);
  Tensor loss = ops::sum_all(out, &tape);
  tape.backward(loss);
  Tensor g = tape.grad(et);
  // Row usage counts: entry0 once, entry1 twice, entry2 once.
  CHECK(g.data()[0] == doctest::Approx(1.0));
  CHECK(g.data()[2] == doctest::Approx(2.0));
  CHECK(g.data()[4] == doctest::Approx(1.0));
}

TEST_CASE("encoder/decoder shape contract and determinism") {
  RunConfig cfg = tiny_config();
  NetDims dims = dims_from_config(cfg);
  ParamStore store;
  Pcg32 rng(3);
  build_encoder_h(store, dims, rng);
  build_codebook(store, dims, rng);
  build_decoder_h(store, dims, rng);

  ColorImage img = ColorImage::make(64, 64, Gamut::BT2020, Transfer::PQ, 1000.0f);
  Pcg32 prng(5);
  for (auto& v : img.pixels) v = prng.uniform();
  EncFeatures e1 = encode_h(store, dims, img);
  EncFeatures e2 = encode_h(store, dims, img);
  CHECK(e1.latent.shape() == Shape{1, dims.latent_dim, 4, 4});
  REQUIRE(e1.stages.size() == 4);
  CHECK(e1.stages[0].dim(2) == 32);
  CHECK(e1.stages[3].dim(2) == 4);
  for (int64_t i = 0; i < e1.latent.numel(); ++i)
    CHECK(e1.latent.data()[i] == e2.latent.data()[i]);

  // Latent responds to an input perturbation.
  ColorImage poked = img;
  poked.pixels[3 * (17 * 64 + 21)] = std::min(1.0f, poked.pixels[3 * (17 * 64 + 21)] + 0.25f);
  EncFeatures e3 = encode_h(store, dims, poked);
  double diff = 0.0;
  for (int64_t i = 0; i < e1.latent.numel(); ++i)
    diff += std::fabs(e3.latent.data()[i] - e1.latent.data()[i]);
  CHECK(diff > 0.0);

  // Decode returns a full-size PQ image.
  QuantizeResult qr = quantize(e1.latent, store.at("cb.entries"));
  ColorImage out = decode_h(store, dims, qr.z_hat);
  CHECK(out.width == 64);
  CHECK(out.height == 64);
  CHECK(out.transfer == Transfer::PQ);
  CHECK(out.gamut == Gamut::BT2020);

  // Wrong tags are rejected.
  ColorImage gamma = ColorImage::make(64, 64, Gamut::BT709, Transfer::Gamma24, 100.0f);
  CHECK_THROWS_AS(encode_h(store, dims, gamma), Error);
  ColorImage odd = ColorImage::make(40, 64, Gamut::BT2020, Transfer::PQ, 1000.0f);
  CHECK_THROWS_AS(encode_h(store, dims, odd), ShapeError);
}

TEST_CASE("codebook perplexity bounds") {
  CHECK(codebook_perplexity({3, 3, 3, 3}, 8) == doctest::Approx(1.0));
  std::vector<int> uniform;
  for (int e = 0; e < 8; ++e)
    for (int r = 0; r < 5; ++r) uniform.push_back(e);
  CHECK(codebook_perplexity(uniform, 8) == doctest::Approx(8.0));
  CHECK_THROWS_AS(codebook_perplexity({}, 8), Error);
}

TEST_CASE("training step: zero-distance latents kill both codebook terms") {
  RunConfig cfg = tiny_config();
  NetDims dims = dims_from_config(cfg);
  // Entries laid out so a handcrafted latent hits them exactly.
  Tensor entries = Tensor::zeros({dims.codebook_size, dims.latent_dim});
  Pcg32 rng(11);
  for (int64_t i = 0; i < entries.numel(); ++i) entries.data()[i] = rng.uniform(-1.0f, 1.0f);
  Tensor z = Tensor::zeros({1, dims.latent_dim, 2, 2});
  for (int p = 0; p < 4; ++p)
    for (int c = 0; c < dims.latent_dim; ++c)
      z.data()[c * 4 + p] = entries.data()[(p + 3) * dims.latent_dim + c];
  QuantizeResult qr = quantize(z, entries);
  Tensor gathered = gather_entries(entries, qr.indices, z.shape());
  CHECK(ops::mse_loss(gathered, z).item() == doctest::Approx(0.0));
  CHECK(ops::mse_loss(z, gathered).item() == doctest::Approx(0.0));
}

TEST_CASE("desk-scale overfit: reconstruction improves and encoder learns") {
  RunConfig cfg = tiny_config();
  NetDims dims = dims_from_config(cfg);
  ParamStore store;
  Pcg32 rng(derive_seed(1009, 1));
  build_encoder_h(store, dims, rng);
  build_codebook(store, dims, rng);
  build_decoder_h(store, dims, rng);
  store.set_trainable_prefixes({"eh.", "dh.", "cb."});

  // Ten 16x16 PQ crops from generated scenes.
  std::vector<Tensor> data;
  for (int i = 0; i < 10; ++i) {
    SceneSpec spec;
    spec.seed = derive_seed(55, static_cast<uint64_t>(i));
    spec.width = 16;
    spec.height = 16;
    data.push_back(image_to_tensor(convert_transfer(gen_hdr_scene(spec), Transfer::PQ)));
  }

  VqTrainState state(cfg, dims, 99);
  Pcg32 batch_rng(7);
  const uint64_t h_before = phase1_hash(store);
  std::vector<double> window_mean;
  double acc = 0.0;
  int count = 0;
  bool encoder_got_grad = false;
  for (int s = 0; s < 220; ++s) {
    std::vector<Tensor> items;
    for (int b = 0; b < 2; ++b)
      items.push_back(data[batch_rng.below(10)]);
    VqStepLosses l = vq_train_step(store, dims, stack_batch(items), state, cfg);
    acc += l.recon_l1;
    if (++count == 20) {
      window_mean.push_back(acc / 20.0);
      acc = 0.0;
      count = 0;
    }
  }
  CHECK(phase1_hash(store) != h_before);  // something trained
  REQUIRE(window_mean.size() >= 10);
  // Reconstruction decreases across 20-step windows front to back.
  CHECK(window_mean.back() < window_mean.front());
  CHECK(window_mean[window_mean.size() - 2] < window_mean[1]);
}

TEST_CASE("straight-through feeds the encoder nonzero gradients") {
  RunConfig cfg = tiny_config();
  NetDims dims = dims_from_config(cfg);
  ParamStore store;
  Pcg32 rng(21);
  build_encoder_h(store, dims, rng);
  build_codebook(store, dims, rng);
  build_decoder_h(store, dims, rng);
  store.set_trainable_prefixes({"eh.", "dh.", "cb."});

  Tensor x = random_tensor({1, 3, 16, 16}, rng, 0.0f, 1.0f);
  Tape tape;
  ParamCtx p(store, &tape, {"eh.", "dh.", "cb."});
  EncFeatures enc = encode_h_t(p, dims, x, &tape);
  QuantizeResult qr = quantize(enc.latent, store.at("cb.entries"), &tape);
  Tensor recon = decode_h_t(p, dims, qr.z_hat, &tape);
  Tensor loss = ops::l1_loss(recon, x, &tape);
  tape.backward(loss);
  Tensor g = p.grad("eh.stem.w", tape);
  double norm = 0.0;
  for (int64_t i = 0; i < g.numel(); ++i) norm += std::fabs(g.data()[i]);
  CHECK(norm > 0.0);
}

TEST_CASE("freezing is real: phase-1 hash is stable when not trainable") {
  RunConfig cfg = tiny_config();
  NetDims dims = dims_from_config(cfg);
  ParamStore store;
  Pcg32 rng(33);
  build_encoder_h(store, dims, rng);
  build_codebook(store, dims, rng);
  build_decoder_h(store, dims, rng);
  store.set_trainable_prefixes({});  // all frozen

  const uint64_t before = phase1_hash(store);
  Tensor x = random_tensor({1, 3, 16, 16}, rng, 0.0f, 1.0f);
  Tape tape;
  ParamCtx p(store, &tape);
  Tensor xt = tape.watch(x);  // keeps the graph alive while params stay frozen
  EncFeatures enc = encode_h_t(p, dims, xt, &tape);
  Tensor loss = ops::mean_all(ops::square(enc.latent, &tape), &tape);
  tape.backward(loss);
  Adam opt(1e-2f, 10);
  opt.step(store, p, tape);
  CHECK(phase1_hash(store) == before);
}
