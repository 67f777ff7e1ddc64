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

#ifndef HDRVQ_FUSION_H
#define HDRVQ_FUSION_H

#include "sfm.hpp"

namespace hdrvq {

// Everything one conversion needs: parameters of all phases, the producing
// config, and the highest completed phase.
struct ModelBundle {
  ParamStore store;
  RunConfig config;
  int phase = 0;
  NetDims dims;
};

ModelBundle load_bundle(const std::string& checkpoint_path);
void save_bundle(const std::string& path, const ModelBundle& bundle);

// ---- HDR color alignment (prefix hca.) ----

void build_hca(ParamStore& store, const NetDims& dims, bool bias_path, Pcg32& rng);

// Luminance-aware position code from the mask-gated SDR frame, at latent
// resolution. All-zero mask with the bias path disabled yields exactly zero.
Tensor brightness_prior_t(ParamCtx& p, const NetDims& dims, const Tensor& x_s,
                          const Tensor& mask_n1hw, Tape* tape);

enum class MatchMode { Hard, SoftK };

struct MatchedPrior {
  Tensor z_hm;               // [N,d,h,w] matched prior feature
  std::vector<int> indices;  // per-position selected entry (top-1 in soft mode)
};

// Per-position nearest-entry selection of the query against the codebook.
// Hard mode gathers exact entry rows (ties toward the smallest index) with a
// straight-through gradient; soft mode blends the top-k entries with
// softmax(-distance/tau) weights and is differentiable. Soft with k=1
// reproduces hard mode bitwise.
MatchedPrior prior_match(const Tensor& query, const Tensor& entries, MatchMode mode, int k,
                         float tau, Tape* tape = nullptr);

// Re-statistics `content` to the per-channel mean/std of `style`.
Tensor prior_adain(const Tensor& content, const Tensor& style, Tape* tape = nullptr);

// ---- SDR texture alignment (prefix sta.) ----

void build_sta(ParamStore& store, const NetDims& dims, Pcg32& rng);

// Offset-predicting deformable alignment of the encoder feature onto the
// decoder feature at one resolution, then multiplicative/additive modulation
// of the decoder feature. Zero offsets with zero gamma/delta parameters
// leave the decoder feature unchanged.
Tensor sta_align_t(ParamCtx& p, int level, const Tensor& msf, const Tensor& z_d, Tape* tape);

// ---- full pipeline ----

struct ForwardOptions {
  bool hca = true;
  bool sta = true;
  MatchMode mode = MatchMode::Hard;
  int soft_k = 4;
  float tau = 1.0f;
};

ForwardOptions forward_options(const RunConfig& cfg, bool inference);

// Highlight mask of a [N,3,H,W] SDR gamma batch as [N,1,H,W] (untracked).
Tensor highlight_mask_t(const Tensor& sdr_batch);

Tensor full_forward_t(ParamCtx& p, const NetDims& dims, const Tensor& x_s,
                      const Tensor& entries, const ForwardOptions& opt, Tape* tape);

// Tagged-image entry point: SDR gamma BT.709 in, PQ BT.2020 out, output
// clamped to [0,1]. Uses hard matching.
ColorImage full_forward(ModelBundle& bundle, const ColorImage& sdr);

// ---- phase III training ----

struct Phase3StepLosses {
  double l1 = 0;
  double lphps = 0;
  double total = 0;
};

struct Phase3TrainState {
  explicit Phase3TrainState(const RunConfig& cfg);
  Adam opt;
  int64_t step = 0;
};

Phase3StepLosses phase3_train_step(ParamStore& store, const NetDims& dims, const Tensor& sdr_batch,
                                   const Tensor& hdr_batch, Phase3TrainState& state,
                                   const RunConfig& cfg);

}  // namespace hdrvq

#endif  // HDRVQ_FUSION_H
