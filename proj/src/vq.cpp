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

#include "vq.hpp"

#include <cmath>

namespace hdrvq {

NetDims dims_from_config(const RunConfig& cfg) {
  NetDims d;
  d.base_channels = static_cast<int>(cfg.get_int("model.base_channels"));
  d.latent_dim = static_cast<int>(cfg.get_int("model.codebook_dim"));
  d.codebook_size = static_cast<int>(cfg.get_int("model.codebook_size"));
  return d;
}

namespace {

struct Schedule {
  int ch[4];    // stage channels
  int next[4];  // channels after each downsampling conv
  int mid;
};

Schedule schedule(const NetDims& d) {
  const int b = d.base_channels;
  return {{b, 2 * b, 4 * b, 8 * b}, {2 * b, 4 * b, 8 * b, 8 * b}, 8 * b};
}

}  // namespace

void build_encoder_h(ParamStore& store, const NetDims& dims, Pcg32& rng) {
  Builder b(store, rng);
  const Schedule s = schedule(dims);
  b.conv("eh.stem", s.ch[0], 3, 3);
  for (int i = 0; i < 4; ++i) {
    build_res_block(b, "eh.rb" + std::to_string(i), s.ch[i]);
    b.conv("eh.down" + std::to_string(i), s.next[i], s.ch[i], 3);
  }
  build_res_block(b, "eh.rbmid", s.mid);
  b.conv("eh.proj", dims.latent_dim, s.mid, 1);
}

void build_decoder_h(ParamStore& store, const NetDims& dims, Pcg32& rng) {
  Builder b(store, rng);
  const Schedule s = schedule(dims);
  b.conv("dh.proj", s.mid, dims.latent_dim, 1);
  build_res_block(b, "dh.rbmid", s.mid);
  const int up_in[4] = {s.mid, s.ch[2], s.ch[1], s.ch[0]};
  const int up_out[4] = {s.ch[2], s.ch[1], s.ch[0], s.ch[0]};
  for (int i = 0; i < 4; ++i) {
    b.conv("dh.up" + std::to_string(i), up_out[i], up_in[i], 3);
    build_res_block(b, "dh.rb" + std::to_string(i), up_out[i]);
  }
  b.conv("dh.out", 3, s.ch[0], 3);
}

void build_codebook(ParamStore& store, const NetDims& dims, Pcg32& rng) {
  Builder b(store, rng);
  b.normal("cb.entries", {dims.codebook_size, dims.latent_dim}, 0.02f);
}

void build_discriminator(ParamStore& store, const NetDims& dims, Pcg32& rng) {
  Builder b(store, rng);
  const int c = dims.base_channels;
  b.conv("disc.c0", c, 3, 3);
  b.conv("disc.c1", 2 * c, c, 3);
  b.conv("disc.c2", 4 * c, 2 * c, 3);
  b.conv("disc.c3", 1, 4 * c, 3);
}

EncFeatures encode_h_t(ParamCtx& p, const NetDims& dims, const Tensor& x, Tape* tape) {
  if (x.ndim() != 4 || x.dim(1) != 3) throw ShapeError("encode_h: input must be [N,3,H,W]");
  if (x.dim(2) % 16 != 0 || x.dim(3) % 16 != 0)
    throw ShapeError("encode_h: H and W must be multiples of 16");
  EncFeatures out;
  Tensor h = ops::leaky_relu(conv_layer(p, "eh.stem", x, 1, 1, tape), kLeakySlope, tape);
  for (int i = 0; i < 4; ++i) {
    h = res_block(p, "eh.rb" + std::to_string(i), h, tape);
    h = down_layer(p, "eh.down" + std::to_string(i), h, tape);
    out.stages.push_back(h);
  }
  h = res_block(p, "eh.rbmid", h, tape);
  out.latent = conv_layer(p, "eh.proj", h, 1, 0, tape);
  return out;
}

Tensor decode_h_t(ParamCtx& p, const NetDims& dims, const Tensor& z, Tape* tape,
                  const DecoderHook* hook) {
  if (z.ndim() != 4 || z.dim(1) != dims.latent_dim)
    throw ShapeError("decode_h: latent must be [N," + std::to_string(dims.latent_dim) + ",h,w]");
  Tensor h = conv_layer(p, "dh.proj", z, 1, 0, tape);
  h = res_block(p, "dh.rbmid", h, tape);
  for (int i = 0; i < 4; ++i) {
    if (hook && *hook) h = (*hook)(i, h, tape);
    h = up_layer(p, "dh.up" + std::to_string(i), h, tape);
    h = res_block(p, "dh.rb" + std::to_string(i), h, tape);
  }
  return conv_layer(p, "dh.out", h, 1, 1, tape);
}

Tensor discriminate_t(ParamCtx& p, const NetDims& dims, const Tensor& x, Tape* tape) {
  Tensor h = down_layer(p, "disc.c0", x, tape);
  h = down_layer(p, "disc.c1", h, tape);
  h = down_layer(p, "disc.c2", h, tape);
  return conv_layer(p, "disc.c3", h, 1, 1, tape);
}

EncFeatures encode_h(ParamStore& store, const NetDims& dims, const ColorImage& img) {
  if (img.transfer != Transfer::PQ || img.gamut != Gamut::BT2020)
    throw Error("encode_h: expects a PQ BT.2020 image, got " +
                std::string(transfer_name(img.transfer)) + "/" + gamut_name(img.gamut));
  ParamCtx p(store, nullptr);
  return encode_h_t(p, dims, image_to_tensor(img), nullptr);
}

ColorImage decode_h(ParamStore& store, const NetDims& dims, const Tensor& z_hat) {
  ParamCtx p(store, nullptr);
  Tensor y = decode_h_t(p, dims, z_hat, nullptr);
  return tensor_to_image(y, Gamut::BT2020, Transfer::PQ, 1000.0f, /*clamp01=*/true);
}

// ---------------------------------------------------------------------------
// quantization
// ---------------------------------------------------------------------------

std::vector<float> to_position_major(const Tensor& z) {
  const int N = z.dim(0), d = z.dim(1), hw = z.dim(2) * z.dim(3);
  std::vector<float> q(static_cast<size_t>(N) * hw * d);
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < d; ++c)
      for (int i = 0; i < hw; ++i)
        q[(static_cast<size_t>(n) * hw + i) * d + c] =
            z.data()[(static_cast<int64_t>(n) * d + c) * hw + i];
  return q;
}

void nearest_entries(const float* queries, int count, const float* entries, int n, int d,
                     int* out_indices, float* out_distances) {
  for (int p = 0; p < count; ++p) {
    const float* q = queries + static_cast<int64_t>(p) * d;
    double best = 0.0;
    int best_idx = 0;
    for (int e = 0; e < n; ++e) {
      const float* row = entries + static_cast<int64_t>(e) * d;
      double acc = 0.0;
      for (int c = 0; c < d; ++c) {
        const double diff = static_cast<double>(q[c]) - row[c];
        acc += diff * diff;
        if (e > 0 && acc > best) break;
      }
      if (e == 0 || acc < best) {
        best = acc;
        best_idx = e;
      }
    }
    out_indices[p] = best_idx;
    out_distances[p] = static_cast<float>(best);
  }
}

QuantizeResult quantize(const Tensor& z, const Tensor& entries, Tape* tape) {
  if (z.ndim() != 4) throw ShapeError("quantize: latent must be [N,d,h,w]");
  if (entries.ndim() != 2 || entries.dim(1) != z.dim(1))
    throw ShapeError("quantize: entry dimension mismatch");
  const int N = z.dim(0), d = z.dim(1), h = z.dim(2), w = z.dim(3);
  const int P = N * h * w;
  const int n = entries.dim(0);

  QuantizeResult res;
  res.index_shape = {N, h, w};
  res.indices.resize(static_cast<size_t>(P));
  std::vector<float> dist(static_cast<size_t>(P));
  const std::vector<float> q = to_position_major(z);
  nearest_entries(q.data(), P, entries.data(), n, d, res.indices.data(), dist.data());
  res.distances = Tensor::from_data({N, h, w}, std::move(dist));

  // Bit-copy of the selected rows; gradient passes straight through to z.
  Tensor z_hat = Tensor::zeros(z.shape());
  const int hw = h * w;
  for (int nn = 0; nn < N; ++nn)
    for (int i = 0; i < hw; ++i) {
      const float* row = entries.data() +
                         static_cast<int64_t>(res.indices[static_cast<size_t>(nn) * hw + i]) * d;
      for (int c = 0; c < d; ++c)
        z_hat.data()[(static_cast<int64_t>(nn) * d + c) * hw + i] = row[c];
    }
  if (tape && z.tracked()) {
    int sz = z.grad_slot();
    int so = tape->track(z_hat);
    tape->push_node([sz, so](Tape& tp) {
      const auto& g = tp.slot_grad(so);
      auto& gz = tp.slot_grad(sz);
      for (size_t i = 0; i < gz.size(); ++i) gz[i] += g[i];
    });
  }
  res.z_hat = z_hat;
  return res;
}

Tensor gather_entries(const Tensor& entries, const std::vector<int>& indices,
                      const Shape& latent_shape, Tape* tape) {
  const int N = latent_shape[0], d = latent_shape[1], h = latent_shape[2], w = latent_shape[3];
  if (entries.dim(1) != d) throw ShapeError("gather_entries: dimension mismatch");
  if (static_cast<int>(indices.size()) != N * h * w)
    throw ShapeError("gather_entries: index count mismatch");
  const int hw = h * w;
  Tensor out = Tensor::zeros({N, d, h, w});
  for (int n = 0; n < N; ++n)
    for (int i = 0; i < hw; ++i) {
      const float* row =
          entries.data() + static_cast<int64_t>(indices[static_cast<size_t>(n) * hw + i]) * d;
      for (int c = 0; c < d; ++c)
        out.data()[(static_cast<int64_t>(n) * d + c) * hw + i] = row[c];
    }
  if (tape && entries.tracked()) {
    int se = entries.grad_slot();
    int so = tape->track(out);
    tape->push_node([se, so, indices, N, d, hw](Tape& tp) {
      const auto& g = tp.slot_grad(so);
      auto& ge = tp.slot_grad(se);
      for (int n = 0; n < N; ++n)
        for (int i = 0; i < hw; ++i) {
          float* row = ge.data() +
                       static_cast<int64_t>(indices[static_cast<size_t>(n) * hw + i]) * d;
          for (int c = 0; c < d; ++c)
            row[c] += g[(static_cast<size_t>(n) * d + c) * hw + i];
        }
    });
  }
  return out;
}

Tensor neg_sqdist_logits(const Tensor& z, const Tensor& entries, Tape* tape) {
  if (z.ndim() != 4 || entries.ndim() != 2 || entries.dim(1) != z.dim(1))
    throw ShapeError("neg_sqdist_logits: shape mismatch");
  const int N = z.dim(0), d = z.dim(1), hw = z.dim(2) * z.dim(3);
  const int P = N * hw, n = entries.dim(0);
  const std::vector<float> q = to_position_major(z);
  Tensor out = Tensor::zeros({P, n});
  for (int p = 0; p < P; ++p) {
    const float* qp = q.data() + static_cast<int64_t>(p) * d;
    for (int e = 0; e < n; ++e) {
      const float* row = entries.data() + static_cast<int64_t>(e) * d;
      double acc = 0.0;
      for (int c = 0; c < d; ++c) {
        const double diff = static_cast<double>(qp[c]) - row[c];
        acc += diff * diff;
      }
      out.data()[static_cast<int64_t>(p) * n + e] = static_cast<float>(-acc);
    }
  }
  check_finite(out, "neg_sqdist_logits");
  if (tape && (z.tracked() || entries.tracked())) {
    int sz = z.grad_slot(), se = entries.grad_slot();
    int so = tape->track(out);
    const Shape zshape = z.shape();
    tape->push_node([sz, se, so, z, entries, q, N, d, hw, n](Tape& tp) {
      const auto& g = tp.slot_grad(so);
      for (int p = 0; p < N * hw; ++p) {
        const float* qp = q.data() + static_cast<int64_t>(p) * d;
        const int bn = p / hw, bi = p % hw;
        for (int e = 0; e < n; ++e) {
          const float gv = g[static_cast<size_t>(p) * n + e];
          if (gv == 0.0f) continue;
          const float* row = entries.data() + static_cast<int64_t>(e) * d;
          for (int c = 0; c < d; ++c) {
            const float diff = qp[c] - row[c];
            if (sz >= 0)
              tp.slot_grad(sz)[(static_cast<size_t>(bn) * d + c) * hw + bi] +=
                  gv * -2.0f * diff;
            if (se >= 0) tp.slot_grad(se)[static_cast<size_t>(e) * d + c] += gv * 2.0f * diff;
          }
        }
      }
    });
  }
  return out;
}

double codebook_perplexity(const std::vector<int>& indices, int n) {
  if (indices.empty()) throw Error("codebook_perplexity: no indices observed");
  std::vector<int64_t> counts(static_cast<size_t>(n), 0);
  for (int idx : indices) counts[static_cast<size_t>(idx)]++;
  const double total = static_cast<double>(indices.size());
  double entropy = 0.0;
  for (int64_t c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / total;
    entropy -= p * std::log(p);
  }
  return std::exp(entropy);
}

// ---------------------------------------------------------------------------
// phase I training
// ---------------------------------------------------------------------------

VqTrainState::VqTrainState(const RunConfig& cfg, const NetDims& dims, uint64_t seed)
    : opt(static_cast<float>(cfg.get_double("phase1.lr")), cfg.get_int("phase1.steps")),
      opt_disc(static_cast<float>(cfg.get_double("phase1.lr")), cfg.get_int("phase1.steps")),
      rng(seed, 0x7a11ull),
      last_used(static_cast<size_t>(dims.codebook_size), 0) {}

VqStepLosses vq_train_step(ParamStore& store, const NetDims& dims, const Tensor& batch,
                           VqTrainState& state, const RunConfig& cfg) {
  const float beta = static_cast<float>(cfg.get_double("phase1.beta_commit"));
  const bool adv = cfg.get_bool("phase1.adv_enabled");
  const float adv_w = static_cast<float>(cfg.get_double("phase1.adv_weight"));
  const int64_t adv_warmup = cfg.get_int("phase1.adv_warmup");
  const int64_t revive_interval = cfg.get_int("phase1.revive_interval");

  Tape tape;
  ParamCtx p(store, &tape, {"eh.", "dh.", "cb."});
  EncFeatures enc = encode_h_t(p, dims, batch, &tape);
  const Tensor& entries_raw = store.at("cb.entries");
  QuantizeResult qr = quantize(enc.latent, entries_raw, &tape);
  Tensor recon = decode_h_t(p, dims, qr.z_hat, &tape);

  Tensor l1 = ops::l1_loss(recon, batch, &tape);
  Tensor gathered = gather_entries(p("cb.entries"), qr.indices, enc.latent.shape(), &tape);
  Tensor cb_term = ops::mse_loss(gathered, ops::detach(enc.latent), &tape);
  Tensor commit = ops::mse_loss(enc.latent, ops::detach(gathered), &tape);
  Tensor total = ops::add(ops::add(l1, cb_term, &tape),
                          ops::mul_scalar(commit, beta, &tape), &tape);

  VqStepLosses losses;
  const bool adv_active = adv && state.step >= adv_warmup;
  if (adv_active) {
    Tensor d_fake = discriminate_t(p, dims, recon, &tape);
    Tensor g_term = ops::mul_scalar(ops::mean_all(d_fake, &tape), -1.0f, &tape);
    total = ops::add(total, ops::mul_scalar(g_term, adv_w, &tape), &tape);
    losses.adv_g = g_term.item();
  }

  losses.recon_l1 = l1.item();
  losses.codebook = cb_term.item();
  losses.commit = commit.item();
  losses.total = total.item();
  losses.perplexity = codebook_perplexity(qr.indices, dims.codebook_size);

  tape.backward(total);
  state.opt.step(store, p, tape);

  if (adv_active) {
    Tape dtape;
    ParamCtx pd(store, &dtape, {"disc."});
    Tensor d_real = discriminate_t(pd, dims, batch, &dtape);
    Tensor d_fake = discriminate_t(pd, dims, ops::detach(recon), &dtape);
    // Hinge loss for the patch discriminator.
    Tensor loss_real = ops::mean_all(
        ops::relu(ops::add_scalar(ops::mul_scalar(d_real, -1.0f, &dtape), 1.0f, &dtape), &dtape),
        &dtape);
    Tensor loss_fake = ops::mean_all(
        ops::relu(ops::add_scalar(d_fake, 1.0f, &dtape), &dtape), &dtape);
    Tensor d_loss = ops::add(loss_real, loss_fake, &dtape);
    losses.adv_d = d_loss.item();
    dtape.backward(d_loss);
    state.opt_disc.step(store, pd, dtape);
  }

  // Usage bookkeeping and dead-entry revival: entries unassigned for
  // `revive_interval` steps are re-seeded from a random latent of the
  // current batch.
  for (int idx : qr.indices) state.last_used[static_cast<size_t>(idx)] = state.step;
  if (revive_interval > 0) {
    const std::vector<float> q = to_position_major(enc.latent);
    const int P = static_cast<int>(q.size()) / dims.latent_dim;
    Tensor& entries = store.at("cb.entries");
    for (int e = 0; e < dims.codebook_size; ++e) {
      if (state.step - state.last_used[static_cast<size_t>(e)] >= revive_interval) {
        const int pick = static_cast<int>(state.rng.below(static_cast<uint32_t>(P)));
        for (int c = 0; c < dims.latent_dim; ++c)
          entries.data()[static_cast<int64_t>(e) * dims.latent_dim + c] =
              q[static_cast<size_t>(pick) * dims.latent_dim + c];
        state.last_used[static_cast<size_t>(e)] = state.step;
      }
    }
  }
  ++state.step;
  return losses;
}

uint64_t phase1_hash(const ParamStore& store) {
  uint64_t h = store.content_hash("eh.");
  h = h * 0x100000001b3ull ^ store.content_hash("dh.");
  h = h * 0x100000001b3ull ^ store.content_hash("cb.");
  return h;
}

}  // namespace hdrvq
