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

#include "fusion.hpp"

#include <algorithm>
#include <cmath>

#include "checkpoint.hpp"
#include "metrics.hpp"

namespace hdrvq {

ModelBundle load_bundle(const std::string& checkpoint_path) {
  LoadedCheckpoint ck = load_checkpoint(checkpoint_path);
  ModelBundle b;
  b.store = std::move(ck.store);
  b.config = RunConfig::parse(ck.config_text);
  b.phase = ck.phase;
  b.dims = dims_from_config(b.config);
  // Nothing trains until a phase opts in.
  b.store.set_trainable_prefixes({});
  return b;
}

void save_bundle(const std::string& path, const ModelBundle& bundle) {
  save_checkpoint(path, bundle.store, bundle.config.canonical_text(), bundle.phase);
}

// ---------------------------------------------------------------------------
// HCA
// ---------------------------------------------------------------------------

void build_hca(ParamStore& store, const NetDims& dims, bool bias_path, Pcg32& rng) {
  Builder b(store, rng);
  const int c = dims.base_channels;
  b.conv("hca.bp0", c, 4, 3, bias_path);
  b.conv("hca.bp1", 2 * c, c, 3, bias_path);
  b.conv("hca.bp2", 4 * c, 2 * c, 3, bias_path);
  b.conv("hca.bp3", dims.latent_dim, 4 * c, 3, bias_path);
}

Tensor brightness_prior_t(ParamCtx& p, const NetDims& dims, const Tensor& x_s,
                          const Tensor& mask_n1hw, Tape* tape) {
  if (x_s.dim(2) != mask_n1hw.dim(2) || x_s.dim(3) != mask_n1hw.dim(3) ||
      x_s.dim(0) != mask_n1hw.dim(0))
    throw ShapeError("brightness_prior: mask/image size mismatch");
  // Gating by the mask keeps the code strictly a function of highlight
  // content: zero mask, zero biases -> zero code.
  Tensor gated = ops::mul_n1hw(x_s, mask_n1hw, tape);
  Tensor h = ops::concat_channels(gated, mask_n1hw, tape);
  h = ops::leaky_relu(conv_layer(p, "hca.bp0", ops::avgpool2(h, tape), 1, 1, tape), kLeakySlope,
                      tape);
  h = ops::leaky_relu(conv_layer(p, "hca.bp1", ops::avgpool2(h, tape), 1, 1, tape), kLeakySlope,
                      tape);
  h = ops::leaky_relu(conv_layer(p, "hca.bp2", ops::avgpool2(h, tape), 1, 1, tape), kLeakySlope,
                      tape);
  return conv_layer(p, "hca.bp3", ops::avgpool2(h, tape), 1, 1, tape);
}

MatchedPrior prior_match(const Tensor& query, const Tensor& entries, MatchMode mode, int k,
                         float tau, Tape* tape) {
  if (query.ndim() != 4 || entries.ndim() != 2 || entries.dim(1) != query.dim(1))
    throw ShapeError("prior_match: dimension mismatch");
  if (mode == MatchMode::Hard || k == 1) {
    QuantizeResult qr = quantize(query, entries, tape);
    return {qr.z_hat, std::move(qr.indices)};
  }

  const int N = query.dim(0), d = query.dim(1), h = query.dim(2), w = query.dim(3);
  const int hw = h * w, P = N * hw;
  const int n = entries.dim(0);
  k = std::min(k, n);
  const std::vector<float> q = to_position_major(query);

  std::vector<int> top_idx(static_cast<size_t>(P) * k);
  std::vector<float> top_w(static_cast<size_t>(P) * k);
  std::vector<int> best(static_cast<size_t>(P));
  Tensor out = Tensor::zeros(query.shape());

  std::vector<std::pair<double, int>> dist(static_cast<size_t>(n));
  for (int pp = 0; pp < P; ++pp) {
    const float* qp = q.data() + static_cast<int64_t>(pp) * d;
    for (int e = 0; e < n; ++e) {
      const float* row = entries.data() + static_cast<int64_t>(e) * d;
      double acc = 0.0;
      for (int c = 0; c < d; ++c) {
        const double diff = static_cast<double>(qp[c]) - row[c];
        acc += diff * diff;
      }
      dist[static_cast<size_t>(e)] = {acc, e};
    }
    // Ties resolve toward the smallest index.
    std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
    const double dmin = dist[0].first;
    double denom = 0.0;
    for (int t = 0; t < k; ++t)
      denom += std::exp(-(dist[static_cast<size_t>(t)].first - dmin) / tau);
    best[static_cast<size_t>(pp)] = dist[0].second;
    const int bn = pp / hw, bi = pp % hw;
    for (int t = 0; t < k; ++t) {
      const double wgt = std::exp(-(dist[static_cast<size_t>(t)].first - dmin) / tau) / denom;
      top_idx[static_cast<size_t>(pp) * k + t] = dist[static_cast<size_t>(t)].second;
      top_w[static_cast<size_t>(pp) * k + t] = static_cast<float>(wgt);
    }
    for (int c = 0; c < d; ++c) {
      double acc = 0.0;
      for (int t = 0; t < k; ++t)
        acc += static_cast<double>(top_w[static_cast<size_t>(pp) * k + t]) *
               entries.data()[static_cast<int64_t>(top_idx[static_cast<size_t>(pp) * k + t]) * d +
                              c];
      out.data()[(static_cast<int64_t>(bn) * d + c) * hw + bi] = static_cast<float>(acc);
    }
  }
  check_finite(out, "prior_match");

  if (tape && (query.tracked() || entries.tracked())) {
    int sq = query.grad_slot(), se = entries.grad_slot();
    int so = tape->track(out);
    tape->push_node([=](Tape& tp) {
      const auto& g = tp.slot_grad(so);
      for (int pp = 0; pp < P; ++pp) {
        const int bn = pp / hw, bi = pp % hw;
        const float* qp = q.data() + static_cast<int64_t>(pp) * d;
        // g_t = <gout, e_t>; mixed = sum_t w_t g_t.
        double gdot[16];  // k <= 16 in practice
        double mixed = 0.0;
        for (int t = 0; t < k; ++t) {
          const float* row =
              entries.data() + static_cast<int64_t>(top_idx[static_cast<size_t>(pp) * k + t]) * d;
          double acc = 0.0;
          for (int c = 0; c < d; ++c)
            acc += static_cast<double>(g[(static_cast<size_t>(bn) * d + c) * hw + bi]) * row[c];
          gdot[t] = acc;
          mixed += top_w[static_cast<size_t>(pp) * k + t] * acc;
        }
        for (int t = 0; t < k; ++t) {
          const double wt = top_w[static_cast<size_t>(pp) * k + t];
          const double dl_dd = (-1.0 / tau) * wt * (gdot[t] - mixed);
          const float* row =
              entries.data() + static_cast<int64_t>(top_idx[static_cast<size_t>(pp) * k + t]) * d;
          for (int c = 0; c < d; ++c) {
            const double diff = static_cast<double>(qp[c]) - row[c];
            const float gout = g[(static_cast<size_t>(bn) * d + c) * hw + bi];
            if (sq >= 0)
              tp.slot_grad(sq)[(static_cast<size_t>(bn) * d + c) * hw + bi] +=
                  static_cast<float>(dl_dd * 2.0 * diff);
            if (se >= 0)
              tp.slot_grad(se)[static_cast<int64_t>(
                                   top_idx[static_cast<size_t>(pp) * k + t]) *
                                   d +
                               c] +=
                  static_cast<float>(static_cast<double>(gout) * wt - dl_dd * 2.0 * diff);
          }
        }
      }
    });
  }
  return {out, std::move(best)};
}

Tensor prior_adain(const Tensor& content, const Tensor& style, Tape* tape) {
  if (content.shape() != style.shape()) throw ShapeError("prior_adain: shape mismatch");
  auto [mu_c, sd_c] = ops::instance_stats(content, 1e-5f, tape);
  auto [mu_s, sd_s] = ops::instance_stats(style, 1e-5f, tape);
  Tensor normalized = ops::div_nc(ops::sub_nc(content, mu_c, tape), sd_c, tape);
  return ops::add_nc(ops::mul_nc(normalized, sd_s, tape), mu_s, tape);
}

// ---------------------------------------------------------------------------
// STA
// ---------------------------------------------------------------------------

namespace {

// Encoder-feature channels paired with decoder level 0..3 (coarse to fine).
int msf_channels_for_level(const NetDims& d, int level) {
  const int b = d.base_channels;
  const int by_level[4] = {8 * b, 8 * b, 4 * b, 2 * b};
  return by_level[level];
}

int decoder_channels_for_level(const NetDims& d, int level) {
  const int b = d.base_channels;
  const int by_level[4] = {8 * b, 4 * b, 2 * b, b};
  return by_level[level];
}

// [N,2,h,w] constant of absolute sample positions for one 3x3 tap.
Tensor tap_grid(int N, int h, int w, int di, int dj) {
  Tensor g = Tensor::zeros({N, 2, h, w});
  const int hw = h * w;
  for (int n = 0; n < N; ++n)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        g.data()[(static_cast<int64_t>(n) * 2) * hw + y * w + x] = static_cast<float>(y + di);
        g.data()[(static_cast<int64_t>(n) * 2 + 1) * hw + y * w + x] = static_cast<float>(x + dj);
      }
  return g;
}

}  // namespace

void build_sta(ParamStore& store, const NetDims& dims, Pcg32& rng) {
  Builder b(store, rng);
  for (int level = 0; level < 4; ++level) {
    const std::string pre = "sta.l" + std::to_string(level);
    const int cm = msf_channels_for_level(dims, level);
    const int cd = decoder_channels_for_level(dims, level);
    b.conv(pre + ".off1", 2 * dims.base_channels, cm + cd, 3);
    // Offsets and modulation start at zero so the module begins as identity.
    b.conv_zero(pre + ".off2", 18, 2 * dims.base_channels, 3);
    b.conv(pre + ".mix", cd, 9 * cm, 1);
    b.conv_zero(pre + ".gamma", cd, cd, 1);
    b.conv_zero(pre + ".delta", cd, cd, 1);
  }
}

Tensor sta_align_t(ParamCtx& p, int level, const Tensor& msf, const Tensor& z_d, Tape* tape) {
  if (msf.dim(2) != z_d.dim(2) || msf.dim(3) != z_d.dim(3))
    throw ShapeError("sta_align: level resolution mismatch");
  const std::string pre = "sta.l" + std::to_string(level);
  const int N = z_d.dim(0), h = z_d.dim(2), w = z_d.dim(3);

  Tensor cat = ops::concat_channels(msf, z_d, tape);
  Tensor oh = ops::leaky_relu(conv_layer(p, pre + ".off1", cat, 1, 1, tape), kLeakySlope, tape);
  Tensor offsets = conv_layer(p, pre + ".off2", oh, 1, 1, tape);  // [N,18,h,w]

  Tensor taps;
  int t = 0;
  for (int di = -1; di <= 1; ++di)
    for (int dj = -1; dj <= 1; ++dj, ++t) {
      Tensor o = ops::slice_channels(offsets, 2 * t, 2 * t + 2, tape);
      Tensor coords = ops::add(o, tap_grid(N, h, w, di, dj), tape);
      Tensor sampled = ops::bilinear_sample(msf, coords, tape);
      taps = t == 0 ? sampled : ops::concat_channels(taps, sampled, tape);
    }
  Tensor aligned = conv_layer(p, pre + ".mix", taps, 1, 0, tape);  // z_n
  Tensor gamma = conv_layer(p, pre + ".gamma", aligned, 1, 0, tape);
  Tensor delta = conv_layer(p, pre + ".delta", aligned, 1, 0, tape);
  return ops::add(ops::mul(z_d, ops::add_scalar(gamma, 1.0f, tape), tape), delta, tape);
}

// ---------------------------------------------------------------------------
// full pipeline
// ---------------------------------------------------------------------------

ForwardOptions forward_options(const RunConfig& cfg, bool inference) {
  ForwardOptions o;
  o.hca = cfg.get_bool("phase3.hca_enabled");
  o.sta = cfg.get_bool("phase3.sta_enabled");
  o.mode = inference ? MatchMode::Hard : MatchMode::SoftK;
  o.soft_k = static_cast<int>(cfg.get_int("phase3.soft_k"));
  o.tau = static_cast<float>(cfg.get_double("phase3.tau"));
  return o;
}

Tensor highlight_mask_t(const Tensor& sdr_batch) {
  const int N = sdr_batch.dim(0), H = sdr_batch.dim(2), W = sdr_batch.dim(3);
  const int hw = H * W;
  Tensor mask = Tensor::zeros({N, 1, H, W});
  for (int n = 0; n < N; ++n)
    for (int i = 0; i < hw; ++i) {
      const float r = sdr_batch.data()[(static_cast<int64_t>(n) * 3 + 0) * hw + i];
      const float g = sdr_batch.data()[(static_cast<int64_t>(n) * 3 + 1) * hw + i];
      const float b = sdr_batch.data()[(static_cast<int64_t>(n) * 3 + 2) * hw + i];
      const float y = 0.2126f * r + 0.7152f * g + 0.0722f * b;
      float u = (y - kHighlightLo) / (kHighlightHi - kHighlightLo);
      u = std::min(std::max(u, 0.0f), 1.0f);
      mask.data()[static_cast<int64_t>(n) * hw + i] = u * u * (3.0f - 2.0f * u);
    }
  return mask;
}

Tensor full_forward_t(ParamCtx& p, const NetDims& dims, const Tensor& x_s,
                      const Tensor& entries, const ForwardOptions& opt, Tape* tape) {
  SfmFeatures sf = encode_sfm_t(p, dims, x_s, tape);
  Tensor z_dec = sf.z_sfm;
  if (opt.hca) {
    Tensor mask = highlight_mask_t(x_s);
    Tensor z_c = brightness_prior_t(p, dims, x_s, mask, tape);
    Tensor query = ops::add(sf.z_sfm, z_c, tape);
    MatchedPrior mp = prior_match(query, entries, opt.mode, opt.soft_k, opt.tau, tape);
    z_dec = prior_adain(sf.z_sfm, mp.z_hm, tape);
  }
  DecoderHook hook = [&](int level, const Tensor& zd, Tape* t) {
    return sta_align_t(p, level, sf.msf[static_cast<size_t>(3 - level)], zd, t);
  };
  return decode_h_t(p, dims, z_dec, tape, opt.sta ? &hook : nullptr);
}

ColorImage full_forward(ModelBundle& bundle, const ColorImage& sdr) {
  if (sdr.transfer != Transfer::Gamma24 || sdr.gamut != Gamut::BT709)
    throw Error("full_forward: expects an SDR gamma BT.709 image");
  if (sdr.width % 16 != 0 || sdr.height % 16 != 0)
    throw ShapeError("full_forward: image size must be a multiple of 16");
  if (bundle.phase < 3) throw Error("full_forward: bundle is missing phase-3 components");
  ParamCtx p(bundle.store, nullptr);
  ForwardOptions opt = forward_options(bundle.config, /*inference=*/true);
  Tensor y = full_forward_t(p, bundle.dims, image_to_tensor(sdr),
                            bundle.store.at("cb.entries"), opt, nullptr);
  return tensor_to_image(y, Gamut::BT2020, Transfer::PQ, 1000.0f, /*clamp01=*/true);
}

// ---------------------------------------------------------------------------
// phase III training
// ---------------------------------------------------------------------------

Phase3TrainState::Phase3TrainState(const RunConfig& cfg)
    : opt(static_cast<float>(cfg.get_double("phase3.lr")), cfg.get_int("phase3.steps")) {}

Phase3StepLosses phase3_train_step(ParamStore& store, const NetDims& dims, const Tensor& sdr_batch,
                                   const Tensor& hdr_batch, Phase3TrainState& state,
                                   const RunConfig& cfg) {
  if (store.trainable("cb.entries") || store.trainable("eh.stem.w") ||
      store.trainable("dh.proj.w"))
    throw Error("phase3_train_step: phase-I parameters must be frozen");
  const float lambda_p = static_cast<float>(cfg.get_double("phase3.lambda_lphps"));
  std::vector<std::string> prefixes;
  if (cfg.get_bool("phase3.hca_enabled")) prefixes.push_back("hca.");
  if (cfg.get_bool("phase3.sta_enabled")) prefixes.push_back("sta.");
  if (cfg.get_bool("phase3.finetune_esfm")) prefixes.push_back("sfm.");
  if (prefixes.empty()) throw Error("phase3_train_step: nothing to train with this config");

  Tape tape;
  ParamCtx p(store, &tape, prefixes);
  ForwardOptions opt = forward_options(cfg, /*inference=*/false);
  Tensor y = full_forward_t(p, dims, sdr_batch, store.at("cb.entries"), opt, &tape);
  Tensor l1 = ops::l1_loss(y, hdr_batch, &tape);
  Tensor percep = lphps_t(p, dims, y, hdr_batch, &tape);
  Tensor total = ops::add(l1, ops::mul_scalar(percep, lambda_p, &tape), &tape);

  Phase3StepLosses losses;
  losses.l1 = l1.item();
  losses.lphps = percep.item();
  losses.total = total.item();
  tape.backward(total);
  state.opt.step(store, p, tape);
  ++state.step;
  return losses;
}

}  // namespace hdrvq
