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

#include "optim.hpp"

#include <cmath>

namespace hdrvq {

float Adam::current_lr() const {
  if (total_steps_ <= 1) return base_lr_;
  const double frac = static_cast<double>(t_) / static_cast<double>(total_steps_);
  return static_cast<float>(base_lr_ * 0.5 * (1.0 + std::cos(3.14159265358979323846 * frac)));
}

void Adam::step(ParamStore& store, ParamCtx& ctx, const Tape& tape) {
  const float lr = current_lr();
  const float bc1 = 1.0f - std::pow(beta1_, static_cast<float>(t_ + 1));
  const float bc2 = 1.0f - std::pow(beta2_, static_cast<float>(t_ + 1));
  for (const auto& name : store.names()) {
    if (!store.trainable(name) || !ctx.watched(name)) continue;
    Tensor g = ctx.grad(name, tape);
    Tensor& p = store.at(name);
    Moments& mo = moments_[name];
    if (mo.m.empty()) {
      mo.m.assign(static_cast<size_t>(p.numel()), 0.0f);
      mo.v.assign(static_cast<size_t>(p.numel()), 0.0f);
    }
    float* pv = p.data();
    const float* gv = g.data();
    for (int64_t i = 0; i < p.numel(); ++i) {
      mo.m[i] = beta1_ * mo.m[i] + (1.0f - beta1_) * gv[i];
      mo.v[i] = beta2_ * mo.v[i] + (1.0f - beta2_) * gv[i] * gv[i];
      const float mhat = mo.m[i] / bc1;
      const float vhat = mo.v[i] / bc2;
      pv[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
      if (!std::isfinite(pv[i]))
        throw NonFiniteError("Adam: parameter " + name + " became non-finite");
    }
  }
  ++t_;
}

}  // namespace hdrvq
