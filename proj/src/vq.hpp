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

#ifndef HDRVQ_VQ_H
#define HDRVQ_VQ_H

#include <functional>

#include "color.hpp"
#include "config.hpp"
#include "nn.hpp"
#include "optim.hpp"

namespace hdrvq {

struct NetDims {
  int base_channels = 16;  // stage-1 width; stages run {1,2,4,8} x base
  int latent_dim = 64;     // codebook entry dimension d
  int codebook_size = 256;   // entry count n
};

NetDims dims_from_config(const RunConfig& cfg);

// ---- construction (parameter name prefixes: eh. / dh. / cb. / disc.) ----
void build_encoder_h(ParamStore& store, const NetDims& dims, Pcg32& rng);
void build_decoder_h(ParamStore& store, const NetDims& dims, Pcg32& rng);
void build_codebook(ParamStore& store, const NetDims& dims, Pcg32& rng);
void build_discriminator(ParamStore& store, const NetDims& dims, Pcg32& rng);

// ---- forwards ----

struct EncFeatures {
  Tensor latent;               // [N,d,H/16,W/16]
  std::vector<Tensor> stages;  // stride {2,4,8,16} outputs, fine to coarse
};

EncFeatures encode_h_t(ParamCtx& p, const NetDims& dims, const Tensor& x, Tape* tape);

// Optional per-resolution modulation applied to the running decoder feature
// before each upsampling stage (level 0 = coarsest).
using DecoderHook = std::function<Tensor(int level, const Tensor& z_d, Tape* tape)>;

Tensor decode_h_t(ParamCtx& p, const NetDims& dims, const Tensor& z, Tape* tape,
                  const DecoderHook* hook = nullptr);

Tensor discriminate_t(ParamCtx& p, const NetDims& dims, const Tensor& x, Tape* tape);

// Contract wrappers over tagged images (PQ BT.2020 in, PQ BT.2020 out).
EncFeatures encode_h(ParamStore& store, const NetDims& dims, const ColorImage& img);
ColorImage decode_h(ParamStore& store, const NetDims& dims, const Tensor& z_hat);

// ---- quantization ----

struct QuantizeResult {
  Tensor z_hat;              // [N,d,h,w]; every position is a bit-copy of an entry row
  std::vector<int> indices;  // length N*h*w, position-major
  Shape index_shape;         // {N,h,w}
  Tensor distances;          // [N,h,w] squared distances (untracked)
};

// Exhaustive nearest entry by squared Euclidean distance (double
// accumulation); ties break toward the smallest index. Straight-through:
// d z_hat / d z = identity.
QuantizeResult quantize(const Tensor& z, const Tensor& entries, Tape* tape = nullptr);

// Low-level search over a position-major [P,d] query block.
void nearest_entries(const float* queries, int count, const float* entries, int n, int d,
                     int* out_indices, float* out_distances);

// [N,d,h,w] -> position-major [P,d] copy.
std::vector<float> to_position_major(const Tensor& z);

// Gather of entry rows shaped like `latent_shape`, with gradient scatter
// into `entries` (used by the codebook loss).
Tensor gather_entries(const Tensor& entries, const std::vector<int>& indices,
                      const Shape& latent_shape, Tape* tape = nullptr);

// [P,n] logits = negative squared distance to every entry; differentiable
// w.r.t. both operands.
Tensor neg_sqdist_logits(const Tensor& z, const Tensor& entries, Tape* tape = nullptr);

// exp(entropy) of the empirical index histogram; in [1, n].
double codebook_perplexity(const std::vector<int>& indices, int n);

// ---- phase I training ----

struct VqStepLosses {
  double recon_l1 = 0;
  double codebook = 0;
  double commit = 0;
  double adv_g = 0;
  double adv_d = 0;
  double total = 0;
  double perplexity = 0;
};

struct VqTrainState {
  VqTrainState(const RunConfig& cfg, const NetDims& dims, uint64_t seed);
  Adam opt;
  Adam opt_disc;
  Pcg32 rng;
  std::vector<int64_t> last_used;  // per entry, step of last assignment
  int64_t step = 0;
};

// One optimization step on a [B,3,H,W] batch of PQ code values.
VqStepLosses vq_train_step(ParamStore& store, const NetDims& dims, const Tensor& batch,
                           VqTrainState& state, const RunConfig& cfg);

// Joint hash of the phase-I parameters (encoder, codebook, decoder); used to
// verify freezing across later phases.
uint64_t phase1_hash(const ParamStore& store);

}  // namespace hdrvq

#endif  // HDRVQ_VQ_H
