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

#include "nn.hpp"

#include <algorithm>
#include <cmath>

namespace hdrvq {

Tensor& ParamStore::create(const std::string& name, Shape shape) {
  if (has(name)) throw Error("ParamStore: duplicate parameter " + name);
  names_.push_back(name);
  index_[name] = values_.size();
  values_.push_back(Tensor::zeros(std::move(shape)));
  trainable_.push_back(true);
  return values_.back();
}

Tensor& ParamStore::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error("ParamStore: unknown parameter " + name);
  return values_[it->second];
}

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error("ParamStore: unknown parameter " + name);
  return values_[it->second];
}

void ParamStore::set_trainable(const std::string& name, bool trainable) {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error("ParamStore: unknown parameter " + name);
  trainable_[it->second] = trainable;
}

void ParamStore::set_trainable_prefixes(const std::vector<std::string>& prefixes) {
  for (size_t i = 0; i < names_.size(); ++i) {
    bool on = false;
    for (const auto& pre : prefixes)
      if (names_[i].rfind(pre, 0) == 0) {
        on = true;
        break;
      }
    trainable_[i] = on;
  }
}

bool ParamStore::trainable(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error("ParamStore: unknown parameter " + name);
  return trainable_[it->second];
}

uint64_t ParamStore::content_hash(const std::string& prefix) const {
  std::vector<std::string> sorted(names_);
  std::sort(sorted.begin(), sorted.end());
  uint64_t h = 0xcbf29ce484222325ull;
  auto mix_byte = [&h](unsigned char b) {
    h ^= b;
    h *= 0x100000001b3ull;
  };
  for (const auto& n : sorted) {
    if (!prefix.empty() && n.rfind(prefix, 0) != 0) continue;
    for (char c : n) mix_byte(static_cast<unsigned char>(c));
    const Tensor& t = values_[index_.at(n)];
    const unsigned char* bytes = reinterpret_cast<const unsigned char*>(t.data());
    for (int64_t i = 0; i < t.numel() * 4; ++i) mix_byte(bytes[i]);
  }
  return h;
}

bool ParamCtx::allowed(const std::string& name) const {
  if (prefixes_.empty()) return true;
  for (const auto& pre : prefixes_)
    if (name.rfind(pre, 0) == 0) return true;
  return false;
}

Tensor ParamCtx::operator()(const std::string& name) {
  if (tape_ && store_->trainable(name) && allowed(name)) {
    auto it = watched_.find(name);
    if (it != watched_.end()) return it->second;
    Tensor w = tape_->watch(store_->at(name));
    watched_.emplace(name, w);
    return w;
  }
  return store_->at(name);
}

Tensor ParamCtx::maybe(const std::string& name) {
  if (!store_->has(name)) return Tensor();
  return (*this)(name);
}

Tensor ParamCtx::grad(const std::string& name, const Tape& tape) const {
  auto it = watched_.find(name);
  if (it == watched_.end()) throw Error("ParamCtx: parameter was not watched: " + name);
  return tape.grad(it->second);
}

namespace {

// Kaiming-uniform bound with LeakyReLU(0.2) gain.
float kaiming_bound(int fan_in) {
  const float gain = std::sqrt(2.0f / (1.0f + kLeakySlope * kLeakySlope));
  return gain * std::sqrt(3.0f / static_cast<float>(fan_in));
}

void fill_uniform(Tensor& t, float bound, Pcg32& rng) {
  for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.uniform(-bound, bound);
}

void fill_normal(Tensor& t, float stddev, Pcg32& rng) {
  for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.normal() * stddev;
}

}  // namespace

void Builder::conv(const std::string& name, int out_ch, int in_ch, int k, bool bias) {
  Tensor& w = store_->create(name + ".w", {out_ch, in_ch, k, k});
  fill_uniform(w, kaiming_bound(in_ch * k * k), *rng_);
  if (bias) store_->create(name + ".b", {out_ch});
}

void Builder::conv_zero(const std::string& name, int out_ch, int in_ch, int k, bool bias) {
  store_->create(name + ".w", {out_ch, in_ch, k, k});
  if (bias) store_->create(name + ".b", {out_ch});
}

void Builder::conv_small(const std::string& name, int out_ch, int in_ch, int k, bool bias) {
  Tensor& w = store_->create(name + ".w", {out_ch, in_ch, k, k});
  fill_normal(w, 0.02f, *rng_);
  if (bias) store_->create(name + ".b", {out_ch});
}

void Builder::linear(const std::string& name, int in_dim, int out_dim, bool bias) {
  Tensor& w = store_->create(name + ".w", {in_dim, out_dim});
  fill_normal(w, 0.02f, *rng_);
  if (bias) store_->create(name + ".b", {out_dim});
}

void Builder::normal(const std::string& name, Shape shape, float stddev) {
  Tensor& t = store_->create(name, std::move(shape));
  fill_normal(t, stddev, *rng_);
}

void Builder::zeros(const std::string& name, Shape shape) {
  store_->create(name, std::move(shape));
}

Tensor conv_layer(ParamCtx& p, const std::string& name, const Tensor& x, int stride, int padding,
                  Tape* tape) {
  return ops::conv2d(x, p(name + ".w"), p.maybe(name + ".b"), stride, padding, tape);
}

Tensor res_block(ParamCtx& p, const std::string& name, const Tensor& x, Tape* tape) {
  Tensor h = conv_layer(p, name + ".c1", x, 1, 1, tape);
  h = ops::leaky_relu(h, kLeakySlope, tape);
  h = conv_layer(p, name + ".c2", h, 1, 1, tape);
  return ops::add(x, h, tape);
}

void build_res_block(Builder& b, const std::string& name, int ch) {
  b.conv(name + ".c1", ch, ch, 3);
  b.conv(name + ".c2", ch, ch, 3);
}

Tensor down_layer(ParamCtx& p, const std::string& name, const Tensor& x, Tape* tape) {
  Tensor pooled = ops::avgpool2(x, tape);
  return ops::leaky_relu(conv_layer(p, name, pooled, 1, 1, tape), kLeakySlope, tape);
}

Tensor up_layer(ParamCtx& p, const std::string& name, const Tensor& x, Tape* tape) {
  Tensor u = ops::upsample_nearest2(x, tape);
  return ops::leaky_relu(conv_layer(p, name, u, 1, 1, tape), kLeakySlope, tape);
}

Tensor attention_block(ParamCtx& p, const std::string& name, const Tensor& x, Tape* tape) {
  if (x.ndim() != 3) throw ShapeError("attention_block: input must be [N,L,D]");
  const int d = x.dim(2);
  Tensor q = ops::linear(x, p(name + ".q.w"), p.maybe(name + ".q.b"), tape);
  Tensor k = ops::linear(x, p(name + ".k.w"), p.maybe(name + ".k.b"), tape);
  Tensor v = ops::linear(x, p(name + ".v.w"), p.maybe(name + ".v.b"), tape);
  Tensor scores = ops::bmm(q, k, false, true, tape);
  scores = ops::mul_scalar(scores, 1.0f / std::sqrt(static_cast<float>(d)), tape);
  Tensor attn = ops::softmax_last(scores, tape);
  Tensor mixed = ops::bmm(attn, v, false, false, tape);
  return ops::linear(mixed, p(name + ".o.w"), p.maybe(name + ".o.b"), tape);
}

void build_attention(Builder& b, const std::string& name, int dim) {
  b.linear(name + ".q", dim, dim);
  b.linear(name + ".k", dim, dim);
  b.linear(name + ".v", dim, dim);
  b.linear(name + ".o", dim, dim);
}

Tensor sfm_modulate(ParamCtx& p, const std::string& name, const Tensor& x, Tape* tape) {
  const int c = x.dim(1);
  Tensor ab = conv_layer(p, name + ".mod", x, 1, 1, tape);
  Tensor alpha = ops::add_scalar(ops::slice_channels(ab, 0, c, tape), 1.0f, tape);
  Tensor beta = ops::slice_channels(ab, c, 2 * c, tape);
  return ops::add(ops::mul(alpha, x, tape), beta, tape);
}

void build_sfm(Builder& b, const std::string& name, int ch) {
  // Near-identity start: small-scale modulation weights keep alpha close to
  // one but leave the path active from the first step.
  b.conv_small(name + ".mod", 2 * ch, ch, 3);
}

}  // namespace hdrvq
