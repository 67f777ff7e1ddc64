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

#ifndef HDRVQ_NN_H
#define HDRVQ_NN_H

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "ops.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace hdrvq {

// Ordered named parameter table. Checkpoints serialize it in insertion
// order; freezing is a per-name flag consulted by ParamCtx and the optimizer.
class ParamStore {
 public:
  Tensor& create(const std::string& name, Shape shape);
  bool has(const std::string& name) const { return index_.count(name) != 0; }
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  const std::vector<std::string>& names() const { return names_; }

  void set_trainable(const std::string& name, bool trainable);
  // Marks exactly the parameters whose name starts with one of the prefixes.
  void set_trainable_prefixes(const std::vector<std::string>& prefixes);
  bool trainable(const std::string& name) const;

  // FNV-1a over the raw float bytes of all parameters matching `prefix`
  // (all parameters when empty), in name-sorted order.
  uint64_t content_hash(const std::string& prefix = "") const;

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, size_t> index_;
  std::vector<Tensor> values_;
  std::vector<bool> trainable_;
};

// Resolves parameters during one forward/backward step, watching trainable
// ones on the tape so their gradients accumulate.
class ParamCtx {
 public:
  ParamCtx(ParamStore& store, Tape* tape) : store_(&store), tape_(tape) {}
  // Restricts watching to names under the given prefixes (on top of the
  // per-parameter trainable flag).
  ParamCtx(ParamStore& store, Tape* tape, std::vector<std::string> watch_prefixes)
      : store_(&store), tape_(tape), prefixes_(std::move(watch_prefixes)) {}

  Tensor operator()(const std::string& name);
  // Bias lookup that tolerates absence (returns an undefined tensor).
  Tensor maybe(const std::string& name);

  Tensor grad(const std::string& name, const Tape& tape) const;
  bool watched(const std::string& name) const { return watched_.count(name) != 0; }

 private:
  bool allowed(const std::string& name) const;
  ParamStore* store_;
  Tape* tape_;
  std::vector<std::string> prefixes_;
  std::unordered_map<std::string, Tensor> watched_;
};

// Parameter registration with the default initializers: Kaiming-uniform for
// conv/linear weights (LeakyReLU 0.2 gain), zeros for biases, 0.02-std
// normal for projections and codebook entries.
class Builder {
 public:
  Builder(ParamStore& store, Pcg32& rng) : store_(&store), rng_(&rng) {}

  void conv(const std::string& name, int out_ch, int in_ch, int k, bool bias = true);
  void conv_zero(const std::string& name, int out_ch, int in_ch, int k, bool bias = true);
  // 0.02-std normal weights: active but near-identity modulation heads.
  void conv_small(const std::string& name, int out_ch, int in_ch, int k, bool bias = true);
  void linear(const std::string& name, int in_dim, int out_dim, bool bias = true);
  void normal(const std::string& name, Shape shape, float stddev);
  void zeros(const std::string& name, Shape shape);

 private:
  ParamStore* store_;
  Pcg32* rng_;
};

// ---- layer forwards (parameters resolved by name prefix) ----

constexpr float kLeakySlope = 0.2f;

Tensor conv_layer(ParamCtx& p, const std::string& name, const Tensor& x, int stride, int padding,
                  Tape* tape);
// x + conv2(lrelu(conv1(x))), 3x3 kernels.
Tensor res_block(ParamCtx& p, const std::string& name, const Tensor& x, Tape* tape);
// 2x2 mean pool, 3x3 conv, LeakyReLU (an exact-arithmetic stride-2 stage).
Tensor down_layer(ParamCtx& p, const std::string& name, const Tensor& x, Tape* tape);
// nearest x2 upsample, 3x3 conv, LeakyReLU.
Tensor up_layer(ParamCtx& p, const std::string& name, const Tensor& x, Tape* tape);
// Single-head scaled dot-product self-attention with learned Q/K/V/out
// projections; x is [N,L,D].
Tensor attention_block(ParamCtx& p, const std::string& name, const Tensor& x, Tape* tape);
void build_attention(Builder& b, const std::string& name, int dim);
// alpha/beta self-modulation: [alpha-1, beta] = conv(x); out = alpha*x + beta.
Tensor sfm_modulate(ParamCtx& p, const std::string& name, const Tensor& x, Tape* tape);
void build_sfm(Builder& b, const std::string& name, int ch);
void build_res_block(Builder& b, const std::string& name, int ch);

}  // namespace hdrvq

#endif  // HDRVQ_NN_H
