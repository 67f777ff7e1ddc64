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

#ifndef HDRVQ_SFM_H
#define HDRVQ_SFM_H

#include "vq.hpp"

namespace hdrvq {

// SDR feature-modulation encoder: four stages of ResBlock / self-modulation /
// downsample, an attention bottleneck with a learned positional bias, a tail
// ResBlock, and a 1x1 projection onto the codebook width.
//
// `with_sfm_blocks=false` swaps each modulation block for a plain ResBlock of
// equal parameter count (the modulation-ablated encoder).
void build_sfm_encoder(ParamStore& store, const NetDims& dims, int latent_h, int latent_w,
                       bool with_sfm_blocks, Pcg32& rng);

struct SfmFeatures {
  Tensor z_sfm;             // [N,d,H/16,W/16]
  std::vector<Tensor> msf;  // multi-scale features, stride {2,4,8,16}, fine to coarse
};

SfmFeatures encode_sfm_t(ParamCtx& p, const NetDims& dims, const Tensor& x_s, Tape* tape);

// Contract wrapper: input must be an SDR gamma BT.709 image.
SfmFeatures encode_sfm(ParamStore& store, const NetDims& dims, const ColorImage& sdr);

struct Phase2StepLosses {
  double latent_l2 = 0;
  double index_ce = 0;
  double total = 0;
};

struct Phase2TrainState {
  Phase2TrainState(const RunConfig& cfg);
  Adam opt;
  int64_t step = 0;
};

// One step against frozen phase-I targets: ||z_sfm - z_h||^2 plus
// cross-entropy of negative-distance logits against the teacher indices.
// Throws if the phase-I parameters are still trainable.
Phase2StepLosses phase2_train_step(ParamStore& store, const NetDims& dims, const Tensor& sdr_batch,
                                   const Tensor& hdr_batch, Phase2TrainState& state,
                                   const RunConfig& cfg);

// Fraction of positions whose nearest entry matches the teacher index.
double index_match_accuracy(ParamStore& store, const NetDims& dims, const Tensor& sdr_batch,
                            const Tensor& hdr_batch);

}  // namespace hdrvq

#endif  // HDRVQ_SFM_H
