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

#ifndef HDRVQ_COLOR_H
#define HDRVQ_COLOR_H

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "tensor.hpp"

namespace hdrvq {

enum class Gamut : uint8_t { BT709 = 0, BT2020 = 1 };
enum class Transfer : uint8_t { LinearNits = 0, PQ = 1, Gamma24 = 2, HLG = 3 };

const char* gamut_name(Gamut g);
const char* transfer_name(Transfer t);

// H x W x 3 interleaved RGB image with explicit signal tags. Code-value
// transfers (PQ/Gamma24/HLG) live in [0,1]; LinearNits carries absolute
// luminance in [0, 10000].
struct ColorImage {
  int width = 0;
  int height = 0;
  Gamut gamut = Gamut::BT709;
  Transfer transfer = Transfer::Gamma24;
  float peak_nits = 100.0f;
  bool out_of_gamut = false;  // set when a gamut conversion produced negatives
  std::vector<float> pixels;

  static ColorImage make(int width, int height, Gamut g, Transfer t, float peak);
  size_t pixel_count() const { return static_cast<size_t>(width) * height; }
  float* px(int y, int x) { return pixels.data() + (static_cast<size_t>(y) * width + x) * 3; }
  const float* px(int y, int x) const {
    return pixels.data() + (static_cast<size_t>(y) * width + x) * 3;
  }
};

// Counts inputs that had to be clamped into the legal domain.
struct ClampCounter {
  int64_t clamped = 0;
};

// ---- transfer functions (scalar, double precision) ----

// SMPTE ST 2084 perceptual quantizer, code in [0,1] -> display nits.
double pq_eotf(double code, ClampCounter* cc = nullptr);
double pq_inv_eotf(double nits, ClampCounter* cc = nullptr);
// BT.1886-style power 2.4 display with a 100-nit peak.
double gamma_eotf(double code, ClampCounter* cc = nullptr);
double gamma_oetf(double nits, ClampCounter* cc = nullptr);
// Hybrid log-gamma per BT.2100 (display-referred with a 1000-nit peak).
double hlg_eotf(double code, ClampCounter* cc = nullptr);
double hlg_oetf(double nits, ClampCounter* cc = nullptr);

// Image-level transfer change; updates the transfer tag.
ColorImage convert_transfer(const ColorImage& img, Transfer to, ClampCounter* cc = nullptr);

// ---- gamut ----

using Mat3 = std::array<std::array<double, 3>, 3>;

// 3x3 linear-light RGB conversion derived through CIE XYZ with shared D65.
const Mat3& gamut_matrix(Gamut from, Gamut to);
// Requires a LinearNits image. Negative (out-of-gamut) results are kept and
// flagged, never clipped here.
ColorImage gamut_convert(const ColorImage& img, Gamut to);

// ---- ICtCp / color difference ----

// Requires BT2020 + LinearNits tags. Output layout: H*W*3 of (I, Ct, Cp).
std::vector<float> to_ictcp(const ColorImage& img);
// BT.2124 color difference; inputs must share shape and be convertible to
// ICtCp (PQ or LinearNits in BT2020, or linear BT709 which is converted).
std::pair<std::vector<float>, double> delta_e_itp(const ColorImage& a, const ColorImage& b);

// ---- highlight mask ----

// Smoothstep ramp of BT.709-weighted code-value luminance between 0.7 and
// 0.95; pointwise monotone in luminance. Input must be an SDR gamma image.
std::vector<float> highlight_mask(const ColorImage& sdr);

constexpr float kHighlightLo = 0.7f;
constexpr float kHighlightHi = 0.95f;

// ---- tensor bridging ----

// [1,3,H,W] tensor of the image's raw channel values.
Tensor image_to_tensor(const ColorImage& img);
ColorImage tensor_to_image(const Tensor& t, Gamut g, Transfer tr, float peak, bool clamp01);

}  // namespace hdrvq

#endif  // HDRVQ_COLOR_H
