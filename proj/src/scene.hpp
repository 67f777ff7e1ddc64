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

#ifndef HDRVQ_SCENE_H
#define HDRVQ_SCENE_H

#include <cstdint>
#include <string>
#include <vector>

#include "color.hpp"

namespace hdrvq {

// Fully determines one synthetic HDR scene: same spec, bit-identical image.
struct SceneSpec {
  uint64_t seed = 0;
  int width = 64;
  int height = 64;
  float peak_nits = 1000.0f;
  // Content mix weights.
  float w_gradient = 1.0f;
  float w_blobs = 1.0f;
  float w_noise = 1.0f;
  float w_patches = 1.0f;
};

// Linear BT.2020 scene in [0, peak_nits] with guaranteed highlight content
// (>= 1% of pixels above 200 nits). Width/height must be multiples of 16.
ColorImage gen_hdr_scene(const SceneSpec& spec);

enum class ToneStyle : uint8_t { Reinhard = 0, Hable = 1, ClipGamma = 2 };

const char* tone_style_name(ToneStyle s);
ToneStyle tone_style_from_name(const std::string& name);

struct StyleTag {
  ToneStyle style = ToneStyle::Reinhard;
  float exposure = 1.0f;
  float saturation = 1.0f;
};

// Reference Hable filmic curve value (unnormalized shoulder polynomial).
double hable_curve(double x);

// Linear BT.2020 HDR -> 8-bit-quantized BT.709 gamma SDR:
// gamut 2020->709 (negatives clipped), per-channel tone curve on
// diffuse-white-relative linear light, saturation scale about luma, gamma
// OETF, then quantization to 8 bits and back.
ColorImage degrade_to_sdr(const ColorImage& hdr, const StyleTag& style);

// ---- corpus manifest ----
// Line format: index<TAB>seed<TAB>style<TAB>exposure<TAB>saturation<TAB>split.
// '#'-prefixed header lines carry the config digest of the producing run and
// the structural digest (corpus + model geometry only) consumers verify.

struct CorpusEntry {
  int index = 0;
  uint64_t seed = 0;
  StyleTag style;
  std::string split;  // train / val / test
};

struct ManifestHeader {
  uint64_t config_digest = 0;
  uint64_t structural_digest = 0;
};

void write_manifest(const std::string& path, const std::vector<CorpusEntry>& entries,
                    const ManifestHeader& header);
std::vector<CorpusEntry> read_manifest(const std::string& path, ManifestHeader* header);

// Canonical corpus file names relative to the corpus root.
std::string hdr_file_name(int index);
std::string sdr_file_name(int index, ToneStyle style);

}  // namespace hdrvq

#endif  // HDRVQ_SCENE_H
