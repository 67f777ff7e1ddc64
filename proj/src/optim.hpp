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

#ifndef HDRVQ_OPTIM_H
#define HDRVQ_OPTIM_H

#include <string>
#include <unordered_map>

#include "nn.hpp"

namespace hdrvq {

// Adam with a cosine-annealed learning rate over `total_steps`.
class Adam {
 public:
  Adam(float lr, int64_t total_steps, float beta1 = 0.9f, float beta2 = 0.999f,
       float eps = 1e-8f)
      : base_lr_(lr), total_steps_(total_steps), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  // Applies one update to every parameter that was watched during the step.
  void step(ParamStore& store, ParamCtx& ctx, const Tape& tape);

  float current_lr() const;
  int64_t steps_taken() const { return t_; }

 private:
  struct Moments {
    std::vector<float> m, v;
  };
  float base_lr_;
  int64_t total_steps_;
  float beta1_, beta2_, eps_;
  int64_t t_ = 0;
  std::unordered_map<std::string, Moments> moments_;
};

}  // namespace hdrvq

#endif  // HDRVQ_OPTIM_H
