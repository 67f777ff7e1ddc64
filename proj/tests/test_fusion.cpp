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

using namespace hdrvq;
using hdrvq::testing::random_tensor;

namespace {

RunConfig tiny_config() {
  RunConfig cfg;
  cfg.set("model.base_channels", "8");
  cfg.set("model.codebook_size", "32");
  cfg.set("model.codebook_dim", "16");
  cfg.set("phase3.steps", "120");
  cfg.set("phase3.batch", "2");
  cfg.set("phase3.lr", "1e-3");
  return cfg;
}

struct TinyWorld {
  RunConfig cfg = tiny_config();
  NetDims dims;
  ParamStore store;
  explicit TinyWorld(int size = 32) {
    dims = dims_from_config(cfg);
    Pcg32 rng(3);
    build_encoder_h(store, dims, rng);
    build_codebook(store, dims, rng);
    build_decoder_h(store, dims, rng);
    build_sfm_encoder(store, dims, size / 16, size / 16, true, rng);
    build_hca(store, dims, /*bias_path=*/false, rng);
    build_sta(store, dims, rng);
    store.set_trainable_prefixes({});
  }
};

void make_pairs(int count, std::vector<Tensor>* sdr, std::vector<Tensor>* hdr) {
  for (int i = 0; i < count; ++i) {
    SceneSpec spec;
    spec.seed = derive_seed(777, static_cast<uint64_t>(i));
    spec.width = 32;
    spec.height = 32;
    const ColorImage scene = gen_hdr_scene(spec);
    hdr->push_back(image_to_tensor(convert_transfer(scene, Transfer::PQ)));
    sdr->push_back(image_to_tensor(degrade_to_sdr(scene, {ToneStyle::Hable, 1.0f, 1.0f})));
  }
}

}  // namespace

TEST_CASE("brightness prior: zero mask with no bias path gives exactly zero") {
  TinyWorld w;
  Pcg32 rng(7);
  Tensor x = random_tensor({1, 3, 32, 32}, rng, 0.0f, 1.0f);
  Tensor mask = Tensor::zeros({1, 1, 32, 32});
  ParamCtx p(w.store, nullptr);
  Tensor z_c = brightness_prior_t(p, w.dims, x, mask, nullptr);
  CHECK(z_c.shape() == Shape{1, w.dims.latent_dim, 2, 2});
  for (int64_t i = 0; i < z_c.numel(); ++i) CHECK(z_c.data()[i] == 0.0f);
}

TEST_CASE("brightness prior: raising highlight luminance moves the code locally") {
  TinyWorld w;
  ColorImage sdr = ColorImage::make(32, 32, Gamut::BT709, Transfer::Gamma24, 100.0f);
  for (auto& v : sdr.pixels) v = 0.4f;
  // A bright patch in the top-left quadrant.
  for (int y = 2; y < 9; ++y)
    for (int x = 2; x < 9; ++x)
      for (int c = 0; c < 3; ++c) sdr.pixels[(static_cast<size_t>(y) * 32 + x) * 3 + c] = 0.92f;

  Tensor xt = image_to_tensor(sdr);
  Tensor mask = highlight_mask_t(xt);
  ParamCtx p(w.store, nullptr);
  Tensor z0 = brightness_prior_t(p, w.dims, xt, mask, nullptr);

  ColorImage brighter = sdr;
  for (int y = 2; y < 9; ++y)
    for (int x = 2; x < 9; ++x)
      for (int c = 0; c < 3; ++c)
        brighter.pixels[(static_cast<size_t>(y) * 32 + x) * 3 + c] = 1.0f;
  Tensor xt2 = image_to_tensor(brighter);
  Tensor z1 = brightness_prior_t(p, w.dims, xt2, highlight_mask_t(xt2), nullptr);

  // The latent cell covering the patch must respond. (Deeper cells also
  // move through the stack's receptive field; only responsiveness of the
  // corresponding cell is contractual.)
  double diff00 = 0.0, total = 0.0;
  for (int c = 0; c < w.dims.latent_dim; ++c) {
    diff00 += std::fabs(z1.data()[c * 4 + 0] - z0.data()[c * 4 + 0]);
    for (int p2 = 0; p2 < 4; ++p2)
      total += std::fabs(z1.data()[c * 4 + p2] - z0.data()[c * 4 + p2]);
  }
  CHECK(diff00 > 0.0);
  CHECK(total > diff00);
}

TEST_CASE("prior_match: identity case, brute-force agreement, soft k=1 bitwise") {
  TinyWorld w;
  Pcg32 rng(13);
  const Tensor& entries = w.store.at("cb.entries");

  // Query rows equal to entries with zero position code: exact passthrough.
  Tensor q = Tensor::zeros({1, w.dims.latent_dim, 2, 2});
  for (int p = 0; p < 4; ++p)
    for (int c = 0; c < w.dims.latent_dim; ++c)
      q.data()[c * 4 + p] = entries.data()[(5 + p) * w.dims.latent_dim + c];
  MatchedPrior hard = prior_match(q, entries, MatchMode::Hard, 1, 1.0f);
  for (int p = 0; p < 4; ++p) CHECK(hard.indices[static_cast<size_t>(p)] == 5 + p);
  for (int64_t i = 0; i < q.numel(); ++i) CHECK(hard.z_hm.data()[i] == q.data()[i]);

  // Hard indices equal brute force on random queries.
  Tensor qr = random_tensor({2, w.dims.latent_dim, 2, 2}, rng);
  MatchedPrior mp = prior_match(qr, entries, MatchMode::Hard, 1, 1.0f);
  QuantizeResult ref = quantize(qr, entries);
  for (size_t i = 0; i < mp.indices.size(); ++i) CHECK(mp.indices[i] == ref.indices[i]);

  // Soft with k=1 is bitwise identical to hard.
  MatchedPrior soft1 = prior_match(qr, entries, MatchMode::SoftK, 1, 0.7f);
  for (int64_t i = 0; i < qr.numel(); ++i) CHECK(soft1.z_hm.data()[i] == mp.z_hm.data()[i]);
}

TEST_CASE("prior_match soft mode: convex combination and gradient check") {
  Pcg32 rng(17);
  Tensor entries = random_tensor({6, 4}, rng);
  Tensor q = random_tensor({1, 4, 1, 2}, rng);
  MatchedPrior soft = prior_match(q, entries, MatchMode::SoftK, 3, 0.5f);
  // Outputs stay within the convex hull coordinate-wise bounds of entries.
  for (int c = 0; c < 4; ++c) {
    float lo = 1e9f, hi = -1e9f;
    for (int e = 0; e < 6; ++e) {
      lo = std::min(lo, entries.data()[e * 4 + c]);
      hi = std::max(hi, entries.data()[e * 4 + c]);
    }
    for (int p = 0; p < 2; ++p) {
      const float v = soft.z_hm.data()[c * 2 + p];
      CHECK(v >= lo - 1e-5f);
      CHECK(v <= hi + 1e-5f);
    }
  }

  // Finite-difference check of the soft matching gradient w.r.t. the query.
  auto forward = [&entries](const std::vector<Tensor>& in) {
    MatchedPrior m = prior_match(in[0], entries, MatchMode::SoftK, 3, 0.5f);
    double acc = 0.0;
    for (int64_t i = 0; i < m.z_hm.numel(); ++i) {
      const double v = m.z_hm.data()[i];
      acc += v * (0.5 + 0.25 * v);
    }
    return acc / static_cast<double>(m.z_hm.numel());
  };
  Tape tape;
  Tensor qt = tape.watch(q);
  MatchedPrior m = prior_match(qt, entries, MatchMode::SoftK, 3, 0.5f, &tape);
  Tensor readout = ops::mean_all(
      ops::add(ops::mul_scalar(m.z_hm, 0.5f, &tape),
               ops::mul_scalar(ops::square(m.z_hm, &tape), 0.25f, &tape), &tape),
      &tape);
  tape.backward(readout);
  auto res = hdrvq::testing::gradcheck(forward, {q}, {tape.grad(qt)}, 5e-3);
  CHECK(res.max_rel_err < 1e-3);
}

TEST_CASE("prior_adain: statistics transfer and identity") {
  Pcg32 rng(19);
  Tensor content = random_tensor({2, 5, 4, 4}, rng, -2.0f, 2.0f);
  Tensor style = random_tensor({2, 5, 4, 4}, rng, -1.0f, 3.0f);
  Tensor out = prior_adain(content, style);
  auto [mo, so] = ops::instance_stats(out);
  auto [ms, ss] = ops::instance_stats(style);
  for (int64_t i = 0; i < mo.numel(); ++i) {
    CHECK(std::fabs(mo.data()[i] - ms.data()[i]) < 1e-4);
    CHECK(std::fabs(so.data()[i] - ss.data()[i]) < 1e-4);
  }

  Tensor same = prior_adain(content, content);
  for (int64_t i = 0; i < content.numel(); ++i)
    CHECK(std::fabs(same.data()[i] - content.data()[i]) < 1e-4);

  // Explicit formula oracle.
  auto [mc, sc] = ops::instance_stats(content);
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 5; ++c)
      for (int i = 0; i < 16; ++i) {
        const float v = content.data()[(n * 5 + c) * 16 + i];
        const float want = ss.data()[n * 5 + c] * (v - mc.data()[n * 5 + c]) /
                               sc.data()[n * 5 + c] +
                           ms.data()[n * 5 + c];
        CHECK(std::fabs(out.data()[(n * 5 + c) * 16 + i] - want) < 1e-5);
      }
}

TEST_CASE("sta_align: zero offsets + zero modulation leave the decoder feature") {
  TinyWorld w;
  Pcg32 rng(23);
  const int cd = 8 * w.dims.base_channels;
  const int cm = 8 * w.dims.base_channels;
  Tensor msf = random_tensor({1, cm, 4, 4}, rng);
  Tensor zd = random_tensor({1, cd, 4, 4}, rng);
  // off2, gamma, delta are zero-initialized by construction.
  ParamCtx p(w.store, nullptr);
  Tensor out = sta_align_t(p, 0, msf, zd, nullptr);
  REQUIRE(out.shape() == zd.shape());
  for (int64_t i = 0; i < zd.numel(); ++i) CHECK(out.data()[i] == zd.data()[i]);
}

TEST_CASE("sta_align: constant forced offset shifts the sampled features") {
  TinyWorld w;
  Pcg32 rng(29);
  const int b = w.dims.base_channels;
  const int cm = 8 * b, cd = 8 * b;
  Tensor msf = random_tensor({1, cm, 6, 6}, rng);
  Tensor zd = random_tensor({1, cd, 6, 6}, rng);

  // Force all offsets to (dy=1, dx=0) through the off2 bias, mix = averaging
  // over taps of the center channel pattern: use a one-hot mix kernel that
  // copies tap 4 (the 0,0 tap) of channel 0.
  Tensor& off_b = w.store.at("sta.l0.off2.b");
  for (int t = 0; t < 9; ++t) {
    off_b.data()[2 * t] = 1.0f;      // row offset
    off_b.data()[2 * t + 1] = 0.0f;  // col offset
  }
  Tensor& off_w = w.store.at("sta.l0.off2.w");
  for (int64_t i = 0; i < off_w.numel(); ++i) off_w.data()[i] = 0.0f;
  Tensor& mix = w.store.at("sta.l0.mix.w");
  for (int64_t i = 0; i < mix.numel(); ++i) mix.data()[i] = 0.0f;
  // Output channel 0 reads the (0,0) tap of input channel 0: tap index 4.
  mix.data()[static_cast<int64_t>(0) * (9 * cm) + 4 * cm + 0] = 1.0f;
  Tensor& mix_b = w.store.at("sta.l0.mix.b");
  for (int64_t i = 0; i < mix_b.numel(); ++i) mix_b.data()[i] = 0.0f;
  // delta = identity on channel 0 so z_n shows up in the output.
  Tensor& delta = w.store.at("sta.l0.delta.w");
  delta.data()[0] = 1.0f;

  ParamCtx p(w.store, nullptr);
  Tensor out = sta_align_t(p, 0, msf, zd, nullptr);
  // Away from borders: out[y][x] = zd[y][x] + msf[channel 0][y+1][x].
  for (int y = 1; y < 4; ++y)
    for (int x = 1; x < 5; ++x) {
      const float want = zd.data()[y * 6 + x] + msf.data()[(y + 1) * 6 + x];
      CHECK(out.data()[y * 6 + x] == doctest::Approx(want).epsilon(1e-5));
    }
}

TEST_CASE("full_forward: contract, determinism, and config equivalence") {
  TinyWorld w;
  std::vector<Tensor> sdr, hdr;
  make_pairs(1, &sdr, &hdr);
  ParamCtx p(w.store, nullptr);
  ForwardOptions opt = forward_options(w.cfg, true);

  Tensor y1 = full_forward_t(p, w.dims, sdr[0], w.store.at("cb.entries"), opt, nullptr);
  Tensor y2 = full_forward_t(p, w.dims, sdr[0], w.store.at("cb.entries"), opt, nullptr);
  CHECK(y1.shape() == sdr[0].shape());
  for (int64_t i = 0; i < y1.numel(); ++i) CHECK(y1.data()[i] == y2.data()[i]);

  // HCA and STA disabled reduces to decode(z_sfm) exactly.
  ForwardOptions off = opt;
  off.hca = false;
  off.sta = false;
  Tensor direct = full_forward_t(p, w.dims, sdr[0], w.store.at("cb.entries"), off, nullptr);
  SfmFeatures sf = encode_sfm_t(p, w.dims, sdr[0], nullptr);
  Tensor want = decode_h_t(p, w.dims, sf.z_sfm, nullptr);
  for (int64_t i = 0; i < want.numel(); ++i) CHECK(direct.data()[i] == want.data()[i]);

  // Zero-parameter STA is bitwise absent from the graph.
  ForwardOptions sta_only = off;
  sta_only.sta = true;
  Tensor with_idle_sta =
      full_forward_t(p, w.dims, sdr[0], w.store.at("cb.entries"), sta_only, nullptr);
  for (int64_t i = 0; i < want.numel(); ++i) CHECK(with_idle_sta.data()[i] == want.data()[i]);
}

TEST_CASE("full_forward image wrapper tags and clamps") {
  TinyWorld w;
  ModelBundle bundle;
  bundle.store = std::move(w.store);
  bundle.config = w.cfg;
  bundle.dims = w.dims;
  bundle.phase = 3;
  ColorImage sdr = ColorImage::make(32, 32, Gamut::BT709, Transfer::Gamma24, 100.0f);
  Pcg32 rng(31);
  for (auto& v : sdr.pixels) v = rng.uniform();
  ColorImage out = full_forward(bundle, sdr);
  CHECK(out.width == 32);
  CHECK(out.height == 32);
  CHECK(out.gamut == Gamut::BT2020);
  CHECK(out.transfer == Transfer::PQ);
  for (float v : out.pixels) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }

  ColorImage bad = ColorImage::make(24, 32, Gamut::BT709, Transfer::Gamma24, 100.0f);
  CHECK_THROWS_AS(full_forward(bundle, bad), ShapeError);
  bundle.phase = 2;
  CHECK_THROWS_AS(full_forward(bundle, sdr), Error);
}

TEST_CASE("phase 3 training: frozen codec, decreasing loss") {
  TinyWorld w;
  std::vector<Tensor> sdr, hdr;
  make_pairs(10, &sdr, &hdr);

  RunConfig cfg = w.cfg;
  cfg.set("phase3.finetune_esfm", "true");
  w.store.set_trainable_prefixes({"hca.", "sta.", "sfm."});
  w.store.set_trainable("sfm.pos_hw", false);

  const uint64_t codec_hash = phase1_hash(w.store);
  Phase3TrainState st(cfg);
  Pcg32 batch_rng(37);
  std::vector<double> window;
  double acc = 0.0;
  for (int s = 0; s < 120; ++s) {
    std::vector<Tensor> bs, bh;
    for (int b = 0; b < 2; ++b) {
      const uint32_t pick = batch_rng.below(10);
      bs.push_back(sdr[pick]);
      bh.push_back(hdr[pick]);
    }
    Phase3StepLosses l =
        phase3_train_step(w.store, w.dims, stack_batch(bs), stack_batch(bh), st, cfg);
    acc += l.total;
    if ((s + 1) % 40 == 0) {
      window.push_back(acc / 40.0);
      acc = 0.0;
    }
  }
  CHECK(phase1_hash(w.store) == codec_hash);
  REQUIRE(window.size() == 3);
  CHECK(window.back() < window.front());

  // Unfrozen decoder is rejected outright.
  w.store.set_trainable_prefixes({"dh.", "hca."});
  CHECK_THROWS_AS(
      phase3_train_step(w.store, w.dims, stack_batch(sdr), stack_batch(hdr), st, cfg), Error);
}
