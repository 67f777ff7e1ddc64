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
#include "scene.hpp"
#include "sfm.hpp"

using namespace hdrvq;
using hdrvq::testing::random_tensor;

namespace {

RunConfig tiny_config() {
  RunConfig cfg;
  cfg.set("model.base_channels", "8");
  cfg.set("model.codebook_size", "32");
  cfg.set("model.codebook_dim", "16");
  cfg.set("phase2.steps", "500");
  cfg.set("phase2.batch", "4");
  cfg.set("phase2.lr", "3e-3");
  return cfg;
}

struct TinyWorld {
  RunConfig cfg = tiny_config();
  NetDims dims;
  ParamStore store;
  TinyWorld(bool with_sfm = true, int size = 32) {
    dims = dims_from_config(cfg);
    Pcg32 rng(3);
    build_encoder_h(store, dims, rng);
    build_codebook(store, dims, rng);
    build_decoder_h(store, dims, rng);
    build_sfm_encoder(store, dims, size / 16, size / 16, with_sfm, rng);
    store.set_trainable_prefixes({"sfm."});
    store.set_trainable("sfm.pos_hw", false);
  }
};

// Paired 32x32 data. With all_styles, every scene appears under the three
// tone curves at two exposures each with saturation jitter - the
// multi-style regime the modulation blocks exist for.
void make_pairs(int count, std::vector<Tensor>* sdr, std::vector<Tensor>* hdr,
                bool all_styles = false) {
  Pcg32 jrng(321);
  for (int i = 0; i < count; ++i) {
    SceneSpec spec;
    spec.seed = derive_seed(4242, static_cast<uint64_t>(i));
    spec.width = 32;
    spec.height = 32;
    const ColorImage scene = gen_hdr_scene(spec);
    const Tensor hdr_t = image_to_tensor(convert_transfer(scene, Transfer::PQ));
    if (!all_styles) {
      hdr->push_back(hdr_t);
      sdr->push_back(image_to_tensor(degrade_to_sdr(scene, {ToneStyle::Reinhard, 1.0f, 1.0f})));
      continue;
    }
    for (int st = 0; st < 3; ++st)
      for (float exposure : {0.65f, 1.55f}) {
        const float saturation = jrng.uniform(0.75f, 1.25f);
        hdr->push_back(hdr_t);
        sdr->push_back(image_to_tensor(
            degrade_to_sdr(scene, {static_cast<ToneStyle>(st), exposure, saturation})));
      }
  }
}

}  // namespace

TEST_CASE("sfm_modulate: identity, beta-only, and elementwise oracle") {
  ParamStore store;
  Pcg32 rng(5);
  Builder b(store, rng);
  build_sfm(b, "mod", 4);
  // Zero parameters: alpha = 1, beta = 0 -> identity.
  Tensor& w = store.at("mod.mod.w");
  for (int64_t i = 0; i < w.numel(); ++i) w.data()[i] = 0.0f;
  ParamCtx p(store, nullptr);
  Tensor x = random_tensor({1, 4, 6, 6}, rng);
  Tensor same = sfm_modulate(p, "mod", x, nullptr);
  for (int64_t i = 0; i < x.numel(); ++i)
    CHECK(same.data()[i] == doctest::Approx(x.data()[i]));

  // Forced alpha = 0 (bias -1 on the alpha half), beta = 0.7.
  Tensor& bias = store.at("mod.mod.b");
  for (int c = 0; c < 4; ++c) {
    bias.data()[c] = -1.0f;
    bias.data()[4 + c] = 0.7f;
  }
  Tensor beta_only = sfm_modulate(p, "mod", x, nullptr);
  for (int64_t i = 0; i < x.numel(); ++i)
    CHECK(beta_only.data()[i] == doctest::Approx(0.7).epsilon(1e-6));

  // Random parameters against an explicit alpha*x+beta oracle.
  Pcg32 rng2(9);
  for (int64_t i = 0; i < w.numel(); ++i) w.data()[i] = rng2.uniform(-0.2f, 0.2f);
  for (int64_t i = 0; i < bias.numel(); ++i) bias.data()[i] = rng2.uniform(-0.2f, 0.2f);
  Tensor got = sfm_modulate(p, "mod", x, nullptr);
  Tensor ab = ops::conv2d(x, w, bias, 1, 1);
  for (int c = 0; c < 4; ++c)
    for (int i = 0; i < 36; ++i) {
      const float alpha = 1.0f + ab.data()[c * 36 + i];
      const float beta = ab.data()[(4 + c) * 36 + i];
      const float want = alpha * x.data()[c * 36 + i] + beta;
      CHECK(std::fabs(got.data()[c * 36 + i] - want) < 1e-6);
    }
}

TEST_CASE("encode_sfm: shape contract and determinism") {
  TinyWorld w;
  ColorImage sdr = ColorImage::make(32, 32, Gamut::BT709, Transfer::Gamma24, 100.0f);
  Pcg32 rng(11);
  for (auto& v : sdr.pixels) v = rng.uniform();
  SfmFeatures f1 = encode_sfm(w.store, w.dims, sdr);
  SfmFeatures f2 = encode_sfm(w.store, w.dims, sdr);
  CHECK(f1.z_sfm.shape() == Shape{1, w.dims.latent_dim, 2, 2});
  REQUIRE(f1.msf.size() == 4);
  CHECK(f1.msf[0].dim(2) == 16);  // stride 2
  CHECK(f1.msf[1].dim(2) == 8);   // stride 4
  CHECK(f1.msf[2].dim(2) == 4);   // stride 8
  CHECK(f1.msf[3].dim(2) == 2);   // stride 16
  CHECK(f1.msf[0].dim(1) == 2 * w.dims.base_channels);
  CHECK(f1.msf[3].dim(1) == 8 * w.dims.base_channels);
  for (int64_t i = 0; i < f1.z_sfm.numel(); ++i)
    CHECK(f1.z_sfm.data()[i] == f2.z_sfm.data()[i]);

  ColorImage wrong = ColorImage::make(32, 32, Gamut::BT2020, Transfer::PQ, 1000.0f);
  CHECK_THROWS_AS(encode_sfm(w.store, w.dims, wrong), Error);
}

TEST_CASE("encode_sfm equals the explicit stage composition") {
  TinyWorld w;
  Pcg32 rng(13);
  Tensor x = random_tensor({1, 3, 32, 32}, rng, 0.0f, 1.0f);
  ParamCtx p(w.store, nullptr);
  SfmFeatures got = encode_sfm_t(p, w.dims, x, nullptr);

  // Step-by-step replay: stem, then (ResBlock, SFM, Down) x 4, positional
  // bias, attention with residual, tail ResBlock, projection.
  Tensor h = ops::leaky_relu(conv_layer(p, "sfm.stem", x, 1, 1, nullptr), kLeakySlope, nullptr);
  for (int i = 0; i < 4; ++i) {
    h = res_block(p, "sfm.rb" + std::to_string(i), h, nullptr);
    h = sfm_modulate(p, "sfm.mod" + std::to_string(i), h, nullptr);
    h = down_layer(p, "sfm.down" + std::to_string(i), h, nullptr);
    for (int64_t j = 0; j < h.numel(); ++j)
      CHECK(h.data()[j] == got.msf[static_cast<size_t>(i)].data()[j]);
  }
  Tensor tokens = ops::add_bcast_batch(ops::nchw_to_nlc(h), w.store.at("sfm.pos"));
  tokens = ops::add(tokens, attention_block(p, "sfm.attn", tokens, nullptr));
  h = ops::nlc_to_nchw(tokens, 2, 2);
  h = res_block(p, "sfm.rbtail", h, nullptr);
  Tensor want = conv_layer(p, "sfm.proj", h, 1, 0, nullptr);
  for (int64_t i = 0; i < want.numel(); ++i) CHECK(got.z_sfm.data()[i] == want.data()[i]);
}

TEST_CASE("phase 2 step: freeze contract enforced and codebook untouched") {
  TinyWorld w;
  std::vector<Tensor> sdr, hdr;
  make_pairs(2, &sdr, &hdr);
  Phase2TrainState st(w.cfg);

  // Unfrozen phase-1 parameters are a contract violation.
  w.store.set_trainable_prefixes({"sfm.", "cb."});
  CHECK_THROWS_AS(
      phase2_train_step(w.store, w.dims, stack_batch(sdr), stack_batch(hdr), st, w.cfg), Error);

  w.store.set_trainable_prefixes({"sfm."});
  w.store.set_trainable("sfm.pos_hw", false);
  const uint64_t before = phase1_hash(w.store);
  Phase2StepLosses l =
      phase2_train_step(w.store, w.dims, stack_batch(sdr), stack_batch(hdr), st, w.cfg);
  CHECK(phase1_hash(w.store) == before);  // codebook and codec bit-identical
  CHECK(l.total > 0.0);
  CHECK(l.latent_l2 > 0.0);
}

TEST_CASE("phase 2 loss is strictly positive when latents differ") {
  TinyWorld w;
  std::vector<Tensor> sdr, hdr;
  make_pairs(1, &sdr, &hdr);
  ParamCtx p(w.store, nullptr);
  EncFeatures teacher = encode_h_t(p, w.dims, hdr[0], nullptr);
  SfmFeatures student = encode_sfm_t(p, w.dims, sdr[0], nullptr);
  double l2 = ops::mse_loss(student.z_sfm, teacher.latent).item();
  CHECK(l2 > 0.0);
}

TEST_CASE("desk-scale overfit: index prediction accuracy rises above 0.9") {
  TinyWorld w;
  std::vector<Tensor> sdr, hdr;
  make_pairs(10, &sdr, &hdr);
  Phase2TrainState st(w.cfg);
  Pcg32 batch_rng(17);
  const int steps = 500;
  for (int s = 0; s < steps; ++s) {
    std::vector<Tensor> bs, bh;
    for (int b = 0; b < 4; ++b) {
      const uint32_t pick = batch_rng.below(10);
      bs.push_back(sdr[pick]);
      bh.push_back(hdr[pick]);
    }
    phase2_train_step(w.store, w.dims, stack_batch(bs), stack_batch(bh), st, w.cfg);
  }
  double acc = index_match_accuracy(w.store, w.dims, stack_batch(sdr), stack_batch(hdr));
  MESSAGE("index match accuracy after overfit: " << acc);
  CHECK(acc > 0.9);
}

TEST_CASE("modulated encoder beats the plain-resblock encoder at index matching") {
  // Operationalized ablation direction in the setting the modulation is
  // for: one scene maps to several SDR styles, and the encoder must adapt
  // per style. Held-out scenes in all three styles score the match.
  auto train_and_score = [](bool with_sfm) {
    TinyWorld w(with_sfm);
    std::vector<Tensor> sdr, hdr;
    make_pairs(50, &sdr, &hdr, /*all_styles=*/true);  // 300 pairs
    const size_t held = 12 * 6;
    std::vector<Tensor> train_s(sdr.begin(), sdr.end() - held);
    std::vector<Tensor> train_h(hdr.begin(), hdr.end() - held);
    std::vector<Tensor> held_s(sdr.end() - held, sdr.end());
    std::vector<Tensor> held_h(hdr.end() - held, hdr.end());
    Phase2TrainState st(w.cfg);
    Pcg32 batch_rng(23);
    for (int s = 0; s < 800; ++s) {
      std::vector<Tensor> bs, bh;
      for (int b = 0; b < 4; ++b) {
        const uint32_t pick = batch_rng.below(static_cast<uint32_t>(train_s.size()));
        bs.push_back(train_s[pick]);
        bh.push_back(train_h[pick]);
      }
      phase2_train_step(w.store, w.dims, stack_batch(bs), stack_batch(bh), st, w.cfg);
    }
    return index_match_accuracy(w.store, w.dims, stack_batch(held_s), stack_batch(held_h));
  };
  const double acc_sfm = train_and_score(true);
  const double acc_plain = train_and_score(false);
  MESSAGE("held-out index accuracy, modulated " << acc_sfm << " vs plain " << acc_plain);
  CHECK(acc_sfm > acc_plain);
  CHECK(acc_sfm > 0.9);
}

TEST_CASE("z_sfm width always matches the codebook dimension") {
  TinyWorld w;
  Pcg32 rng(29);
  Tensor x = random_tensor({2, 3, 32, 32}, rng, 0.0f, 1.0f);
  ParamCtx p(w.store, nullptr);
  SfmFeatures f = encode_sfm_t(p, w.dims, x, nullptr);
  CHECK(f.z_sfm.dim(1) == w.dims.latent_dim);
  CHECK(f.z_sfm.dim(1) == w.store.at("cb.entries").dim(1));
}
