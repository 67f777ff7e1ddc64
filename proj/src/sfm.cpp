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

#include "sfm.hpp"

namespace hdrvq {

namespace {

struct Schedule {
  int ch[4];
  int next[4];
  int mid;
};

Schedule schedule(const NetDims& d) {
  const int b = d.base_channels;
  return {{b, 2 * b, 4 * b, 8 * b}, {2 * b, 4 * b, 8 * b, 8 * b}, 8 * b};
}

// Nearest-neighbor lookup of the stored positional-bias grid, so inputs of
// any multiple-of-16 size reuse the bias learned at the configured size.
Tensor resample_pos_bias(const Tensor& pos, int built_h, int built_w, int h, int w) {
  const int d = pos.dim(1);
  if (built_h == h && built_w == w) return pos;
  Tensor out = Tensor::zeros({h * w, d});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int sy = std::min(y * built_h / h, built_h - 1);
      const int sx = std::min(x * built_w / w, built_w - 1);
      const float* src = pos.data() + (static_cast<int64_t>(sy) * built_w + sx) * d;
      float* dst = out.data() + (static_cast<int64_t>(y) * w + x) * d;
      for (int c = 0; c < d; ++c) dst[c] = src[c];
    }
  return out;
}

}  // namespace

void build_sfm_encoder(ParamStore& store, const NetDims& dims, int latent_h, int latent_w,
                       bool with_sfm_blocks, Pcg32& rng) {
  Builder b(store, rng);
  const Schedule s = schedule(dims);
  b.conv("sfm.stem", s.ch[0], 3, 3);
  for (int i = 0; i < 4; ++i) {
    build_res_block(b, "sfm.rb" + std::to_string(i), s.ch[i]);
    if (with_sfm_blocks)
      build_sfm(b, "sfm.mod" + std::to_string(i), s.ch[i]);
    else
      build_res_block(b, "sfm.plain" + std::to_string(i), s.ch[i]);
    b.conv("sfm.down" + std::to_string(i), s.next[i], s.ch[i], 3);
  }
  b.normal("sfm.pos", {latent_h * latent_w, s.mid}, 0.02f);
  build_attention(b, "sfm.attn", s.mid);
  build_res_block(b, "sfm.rbtail", s.mid);
  b.conv("sfm.proj", dims.latent_dim, s.mid, 1);
  // Latent geometry the positional bias was built for.
  store.create("sfm.pos_hw", {2});
  store.at("sfm.pos_hw").data()[0] = static_cast<float>(latent_h);
  store.at("sfm.pos_hw").data()[1] = static_cast<float>(latent_w);
  store.set_trainable("sfm.pos_hw", false);
}

SfmFeatures encode_sfm_t(ParamCtx& p, const NetDims& dims, const Tensor& x_s, Tape* tape) {
  if (x_s.ndim() != 4 || x_s.dim(1) != 3) throw ShapeError("encode_sfm: input must be [N,3,H,W]");
  if (x_s.dim(2) % 16 != 0 || x_s.dim(3) % 16 != 0)
    throw ShapeError("encode_sfm: H and W must be multiples of 16");
  const bool with_sfm = p.maybe("sfm.mod0.mod.w").defined() ||
                        p.maybe("sfm.mod0.mod.b").defined();
  SfmFeatures out;
  Tensor h = ops::leaky_relu(conv_layer(p, "sfm.stem", x_s, 1, 1, tape), kLeakySlope, tape);
  for (int i = 0; i < 4; ++i) {
    h = res_block(p, "sfm.rb" + std::to_string(i), h, tape);
    if (with_sfm)
      h = sfm_modulate(p, "sfm.mod" + std::to_string(i), h, tape);
    else
      h = res_block(p, "sfm.plain" + std::to_string(i), h, tape);
    h = down_layer(p, "sfm.down" + std::to_string(i), h, tape);
    out.msf.push_back(h);
  }

  const int lh = h.dim(2), lw = h.dim(3);
  Tensor pos_hw = p.maybe("sfm.pos_hw");
  const int built_h = pos_hw.defined() ? static_cast<int>(pos_hw.data()[0]) : lh;
  const int built_w = pos_hw.defined() ? static_cast<int>(pos_hw.data()[1]) : lw;
  Tensor tokens = ops::nchw_to_nlc(h, tape);
  Tensor pos = p("sfm.pos");
  if (built_h != lh || built_w != lw)
    pos = resample_pos_bias(ops::detach(pos), built_h, built_w, lh, lw);
  tokens = ops::add_bcast_batch(tokens, pos, tape);
  Tensor attn = attention_block(p, "sfm.attn", tokens, tape);
  tokens = ops::add(tokens, attn, tape);
  h = ops::nlc_to_nchw(tokens, lh, lw, tape);
  h = res_block(p, "sfm.rbtail", h, tape);
  out.z_sfm = conv_layer(p, "sfm.proj", h, 1, 0, tape);
  return out;
}

SfmFeatures encode_sfm(ParamStore& store, const NetDims& dims, const ColorImage& sdr) {
  if (sdr.transfer != Transfer::Gamma24 || sdr.gamut != Gamut::BT709)
    throw Error("encode_sfm: expects an SDR gamma BT.709 image");
  ParamCtx p(store, nullptr);
  return encode_sfm_t(p, dims, image_to_tensor(sdr), nullptr);
}

Phase2TrainState::Phase2TrainState(const RunConfig& cfg)
    : opt(static_cast<float>(cfg.get_double("phase2.lr")), cfg.get_int("phase2.steps")) {}

Phase2StepLosses phase2_train_step(ParamStore& store, const NetDims& dims, const Tensor& sdr_batch,
                                   const Tensor& hdr_batch, Phase2TrainState& state,
                                   const RunConfig& cfg) {
  if (store.trainable("cb.entries") || store.trainable("eh.stem.w"))
    throw Error("phase2_train_step: phase-I parameters must be frozen");
  const float lambda_ce = static_cast<float>(cfg.get_double("phase2.lambda_ce"));

  Tape tape;
  ParamCtx p(store, &tape, {"sfm."});
  // Teacher latents and indices from the frozen encoder + codebook; no
  // gradient flows here because none of these parameters are watched and
  // the input is a leaf.
  EncFeatures teacher = encode_h_t(p, dims, hdr_batch, &tape);
  QuantizeResult qr = quantize(teacher.latent, store.at("cb.entries"), nullptr);

  SfmFeatures student = encode_sfm_t(p, dims, sdr_batch, &tape);
  Tensor latent_l2 = ops::mse_loss(student.z_sfm, ops::detach(teacher.latent), &tape);
  Tensor logits = neg_sqdist_logits(student.z_sfm, store.at("cb.entries"), &tape);
  Tensor ce = ops::cross_entropy_indices(logits, qr.indices, &tape);
  Tensor total = ops::add(latent_l2, ops::mul_scalar(ce, lambda_ce, &tape), &tape);

  Phase2StepLosses losses;
  losses.latent_l2 = latent_l2.item();
  losses.index_ce = ce.item();
  losses.total = total.item();
  tape.backward(total);
  state.opt.step(store, p, tape);
  ++state.step;
  return losses;
}

double index_match_accuracy(ParamStore& store, const NetDims& dims, const Tensor& sdr_batch,
                            const Tensor& hdr_batch) {
  ParamCtx p(store, nullptr);
  EncFeatures teacher = encode_h_t(p, dims, hdr_batch, nullptr);
  QuantizeResult target = quantize(teacher.latent, store.at("cb.entries"), nullptr);
  SfmFeatures student = encode_sfm_t(p, dims, sdr_batch, nullptr);
  QuantizeResult pred = quantize(student.z_sfm, store.at("cb.entries"), nullptr);
  int hits = 0;
  for (size_t i = 0; i < target.indices.size(); ++i)
    if (target.indices[i] == pred.indices[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(target.indices.size());
}

}  // namespace hdrvq
