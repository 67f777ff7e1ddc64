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

#ifndef HDRVQ_OPS_H
#define HDRVQ_OPS_H

#include <utility>

#include "tensor.hpp"

// Differentiable tensor ops. Every op validates shapes, allocates a fresh
// output, rejects non-finite results, and (when a tape is supplied and any
// input is tracked) records its backward closure. Reductions accumulate in
// double.
namespace hdrvq::ops {

// ---- elementwise ----
Tensor add(const Tensor& a, const Tensor& b, Tape* tape = nullptr);
Tensor sub(const Tensor& a, const Tensor& b, Tape* tape = nullptr);
Tensor mul(const Tensor& a, const Tensor& b, Tape* tape = nullptr);
Tensor add_scalar(const Tensor& a, float s, Tape* tape = nullptr);
Tensor mul_scalar(const Tensor& a, float s, Tape* tape = nullptr);
Tensor leaky_relu(const Tensor& a, float negative_slope, Tape* tape = nullptr);
Tensor abs_val(const Tensor& a, Tape* tape = nullptr);
Tensor square(const Tensor& a, Tape* tape = nullptr);
Tensor sqrt_val(const Tensor& a, Tape* tape = nullptr);
Tensor rsqrt_val(const Tensor& a, Tape* tape = nullptr);

// Drops tape association; forward value is shared.
Tensor detach(const Tensor& a);

// ---- structure ----
Tensor reshape(const Tensor& a, Shape shape, Tape* tape = nullptr);
Tensor concat_channels(const Tensor& a, const Tensor& b, Tape* tape = nullptr);
Tensor slice_channels(const Tensor& a, int c_begin, int c_end, Tape* tape = nullptr);
// [N,C,H,W] -> [N,H*W,C] and back.
Tensor nchw_to_nlc(const Tensor& a, Tape* tape = nullptr);
Tensor nlc_to_nchw(const Tensor& a, int height, int width, Tape* tape = nullptr);

// ---- reductions ----
Tensor sum_all(const Tensor& a, Tape* tape = nullptr);    // -> [1]
Tensor mean_all(const Tensor& a, Tape* tape = nullptr);   // -> [1]
Tensor spatial_mean(const Tensor& a, Tape* tape = nullptr);  // [N,C,H,W] -> [N,C]
Tensor sum_channels(const Tensor& a, Tape* tape = nullptr);  // [N,C,H,W] -> [N,1,H,W]

// ---- broadcasts of [N,C] statistics over [N,C,H,W] ----
Tensor add_nc(const Tensor& x, const Tensor& s, Tape* tape = nullptr);
Tensor sub_nc(const Tensor& x, const Tensor& s, Tape* tape = nullptr);
Tensor mul_nc(const Tensor& x, const Tensor& s, Tape* tape = nullptr);
Tensor div_nc(const Tensor& x, const Tensor& s, Tape* tape = nullptr);
// [N,C,H,W] * [N,1,H,W]
Tensor mul_n1hw(const Tensor& x, const Tensor& m, Tape* tape = nullptr);
// x: [N, rest...] + b: [rest...] broadcast over the leading axis.
Tensor add_bcast_batch(const Tensor& x, const Tensor& b, Tape* tape = nullptr);

// ---- linear algebra ----
Tensor matmul(const Tensor& a, const Tensor& b, Tape* tape = nullptr);  // [M,K]x[K,N]
// x: [..., D], w: [D, E], b: [E] or undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b, Tape* tape = nullptr);
// a: [B,M,K] (or [B,K,M] if trans_a), b: [B,K,N] (or [B,N,K] if trans_b).
Tensor bmm(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b, Tape* tape = nullptr);
Tensor softmax_last(const Tensor& a, Tape* tape = nullptr);
// logits: [P,K]; mean cross-entropy against integer targets.
Tensor cross_entropy_indices(const Tensor& logits, const std::vector<int>& targets,
                             Tape* tape = nullptr);

// ---- convolution & sampling ----
// input [N,C,H,W], weight [O,C,kh,kw] (kh,kw odd), bias [O] or undefined.
// Output size must divide exactly: (H + 2*padding - kh) % stride == 0.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
              int padding, Tape* tape = nullptr);
Tensor upsample_nearest2(const Tensor& a, Tape* tape = nullptr);
// 2x2 mean pooling with stride 2; H and W must be even.
Tensor avgpool2(const Tensor& a, Tape* tape = nullptr);
// coords: [N,2,Ho,Wo], channel 0 = row, channel 1 = column, absolute pixel
// coordinates; clamped to the border before weighting.
Tensor bilinear_sample(const Tensor& input, const Tensor& coords, Tape* tape = nullptr);

// ---- composites ----
inline Tensor relu(const Tensor& a, Tape* tape = nullptr) { return leaky_relu(a, 0.0f, tape); }
Tensor l1_loss(const Tensor& a, const Tensor& b, Tape* tape = nullptr);
Tensor mse_loss(const Tensor& a, const Tensor& b, Tape* tape = nullptr);
// Per-sample per-channel spatial mean and std (epsilon inside the sqrt).
std::pair<Tensor, Tensor> instance_stats(const Tensor& x, float eps = 1e-5f,
                                         Tape* tape = nullptr);

}  // namespace hdrvq::ops

#endif  // HDRVQ_OPS_H
