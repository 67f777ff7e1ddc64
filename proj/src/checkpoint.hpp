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

#ifndef HDRVQ_CHECKPOINT_H
#define HDRVQ_CHECKPOINT_H

#include <string>

#include "nn.hpp"

namespace hdrvq {

// HFCK container, shared by all training phases:
//   "HFCK" | u32-LE tensor count | records of
//   (u16-LE name length, name bytes, u8 ndim, u32-LE dims..., f32-LE data).
// The producing RunConfig rides along as a byte tensor "__runconfig" and the
// completed phase as "__phase"; both are stripped on load.

struct LoadedCheckpoint {
  ParamStore store;
  std::string config_text;
  int phase = 0;
};

void save_checkpoint(const std::string& path, const ParamStore& store,
                     const std::string& config_text, int phase);
LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace hdrvq

#endif  // HDRVQ_CHECKPOINT_H
