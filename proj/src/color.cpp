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

#include "color.hpp"

#include <cmath>

namespace hdrvq {

const char* gamut_name(Gamut g) { return g == Gamut::BT709 ? "bt709" : "bt2020"; }

const char* transfer_name(Transfer t) {
  switch (t) {
    case Transfer::LinearNits:
      return "linear";
    case Transfer::PQ:
      return "pq";
    case Transfer::Gamma24:
      return "gamma24";
    case Transfer::HLG:
      return "hlg";
  }
  return "?";
}

ColorImage ColorImage::make(int width, int height, Gamut g, Transfer t, float peak) {
  ColorImage img;
  img.width = width;
  img.height = height;
  img.gamut = g;
  img.transfer = t;
  img.peak_nits = peak;
  img.pixels.assign(static_cast<size_t>(width) * height * 3, 0.0f);
  return img;
}

// ---------------------------------------------------------------------------
// transfer functions
// ---------------------------------------------------------------------------

namespace {

// ST 2084 constants.
constexpr double kPqM1 = 2610.0 / 16384.0;
constexpr double kPqM2 = 2523.0 / 4096.0 * 128.0;
constexpr double kPqC1 = 3424.0 / 4096.0;
constexpr double kPqC2 = 2413.0 / 4096.0 * 32.0;
constexpr double kPqC3 = 2392.0 / 4096.0 * 32.0;
constexpr double kPqPeak = 10000.0;

// BT.2100 HLG constants.
constexpr double kHlgA = 0.17883277;
constexpr double kHlgB = 1.0 - 4.0 * kHlgA;
const double kHlgC = 0.5 - kHlgA * std::log(4.0 * kHlgA);
constexpr double kHlgPeak = 1000.0;

constexpr double kGammaPeak = 100.0;
constexpr double kGamma = 2.4;

double clamp01(double v, ClampCounter* cc) {
  if (v < 0.0 || v > 1.0) {
    if (cc) ++cc->clamped;
    return v < 0.0 ? 0.0 : 1.0;
  }
  return v;
}

double clamp_range(double v, double lo, double hi, ClampCounter* cc) {
  if (v < lo || v > hi) {
    if (cc) ++cc->clamped;
    return v < lo ? lo : hi;
  }
  return v;
}

}  // namespace

double pq_eotf(double code, ClampCounter* cc) {
  code = clamp01(code, cc);
  const double ep = std::pow(code, 1.0 / kPqM2);
  const double num = std::fmax(ep - kPqC1, 0.0);
  const double den = kPqC2 - kPqC3 * ep;
  return kPqPeak * std::pow(num / den, 1.0 / kPqM1);
}

double pq_inv_eotf(double nits, ClampCounter* cc) {
  nits = clamp_range(nits, 0.0, kPqPeak, cc);
  const double y = std::pow(nits / kPqPeak, kPqM1);
  return std::pow((kPqC1 + kPqC2 * y) / (1.0 + kPqC3 * y), kPqM2);
}

double gamma_eotf(double code, ClampCounter* cc) {
  code = clamp01(code, cc);
  return kGammaPeak * std::pow(code, kGamma);
}

double gamma_oetf(double nits, ClampCounter* cc) {
  nits = clamp_range(nits, 0.0, kGammaPeak, cc);
  return std::pow(nits / kGammaPeak, 1.0 / kGamma);
}

double hlg_oetf(double nits, ClampCounter* cc) {
  nits = clamp_range(nits, 0.0, kHlgPeak, cc);
  const double e = nits / kHlgPeak;  // scene-referred in [0,1]
  if (e <= 1.0 / 12.0) return std::sqrt(3.0 * e);
  return kHlgA * std::log(12.0 * e - kHlgB) + kHlgC;
}

double hlg_eotf(double code, ClampCounter* cc) {
  code = clamp01(code, cc);
  double e;
  if (code <= 0.5)
    e = code * code / 3.0;
  else
    e = (std::exp((code - kHlgC) / kHlgA) + kHlgB) / 12.0;
  return e * kHlgPeak;
}

namespace {

double apply_eotf(Transfer t, double code, ClampCounter* cc) {
  switch (t) {
    case Transfer::PQ:
      return pq_eotf(code, cc);
    case Transfer::Gamma24:
      return gamma_eotf(code, cc);
    case Transfer::HLG:
      return hlg_eotf(code, cc);
    case Transfer::LinearNits:
      return code;
  }
  return code;
}

double apply_oetf(Transfer t, double nits, ClampCounter* cc) {
  switch (t) {
    case Transfer::PQ:
      return pq_inv_eotf(nits, cc);
    case Transfer::Gamma24:
      return gamma_oetf(nits, cc);
    case Transfer::HLG:
      return hlg_oetf(nits, cc);
    case Transfer::LinearNits:
      return nits;
  }
  return nits;
}

}  // namespace

ColorImage convert_transfer(const ColorImage& img, Transfer to, ClampCounter* cc) {
  ColorImage out = img;
  out.transfer = to;
  if (img.transfer == to) return out;
  for (size_t i = 0; i < img.pixels.size(); ++i) {
    const double nits = apply_eotf(img.transfer, img.pixels[i], cc);
    out.pixels[i] = static_cast<float>(apply_oetf(to, nits, cc));
  }
  return out;
}

// ---------------------------------------------------------------------------
// gamut
// ---------------------------------------------------------------------------

namespace {

struct Chroma {
  double rx, ry, gx, gy, bx, by;
};

constexpr Chroma kBt709{0.640, 0.330, 0.300, 0.600, 0.150, 0.060};
constexpr Chroma kBt2020{0.708, 0.292, 0.170, 0.797, 0.131, 0.046};
constexpr double kD65x = 0.3127, kD65y = 0.3290;

Mat3 mat_mul(const Mat3& a, const Mat3& b) {
  Mat3 r{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double acc = 0.0;
      for (int k = 0; k < 3; ++k) acc += a[i][k] * b[k][j];
      r[i][j] = acc;
    }
  return r;
}

Mat3 mat_inv(const Mat3& m) {
  const double a = m[0][0], b = m[0][1], c = m[0][2];
  const double d = m[1][0], e = m[1][1], f = m[1][2];
  const double g = m[2][0], h = m[2][1], i = m[2][2];
  const double det = a * (e * i - f * h) - b * (d * i - f * g) + c * (d * h - e * g);
  Mat3 r{};
  r[0][0] = (e * i - f * h) / det;
  r[0][1] = (c * h - b * i) / det;
  r[0][2] = (b * f - c * e) / det;
  r[1][0] = (f * g - d * i) / det;
  r[1][1] = (a * i - c * g) / det;
  r[1][2] = (c * d - a * f) / det;
  r[2][0] = (d * h - e * g) / det;
  r[2][1] = (b * g - a * h) / det;
  r[2][2] = (a * e - b * d) / det;
  return r;
}

// RGB -> XYZ for primaries with a D65 white normalized to Y = 1.
Mat3 rgb_to_xyz(const Chroma& ch) {
  auto col = [](double x, double y) {
    return std::array<double, 3>{x / y, 1.0, (1.0 - x - y) / y};
  };
  const auto r = col(ch.rx, ch.ry), g = col(ch.gx, ch.gy), b = col(ch.bx, ch.by);
  const auto w = col(kD65x, kD65y);
  Mat3 prim{};
  for (int i = 0; i < 3; ++i) {
    prim[i][0] = r[i];
    prim[i][1] = g[i];
    prim[i][2] = b[i];
  }
  const Mat3 inv = mat_inv(prim);
  std::array<double, 3> scale{};
  for (int i = 0; i < 3; ++i)
    scale[i] = inv[i][0] * w[0] + inv[i][1] * w[1] + inv[i][2] * w[2];
  Mat3 out{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) out[i][j] = prim[i][j] * scale[j];
  return out;
}

struct GamutTables {
  Mat3 identity;
  Mat3 m709_to_2020;
  Mat3 m2020_to_709;
  GamutTables() {
    const Mat3 x709 = rgb_to_xyz(kBt709);
    const Mat3 x2020 = rgb_to_xyz(kBt2020);
    m709_to_2020 = mat_mul(mat_inv(x2020), x709);
    m2020_to_709 = mat_mul(mat_inv(x709), x2020);
    identity = {{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
  }
};

const GamutTables& tables() {
  static const GamutTables t;
  return t;
}

}  // namespace

const Mat3& gamut_matrix(Gamut from, Gamut to) {
  if (from == to) return tables().identity;
  return from == Gamut::BT709 ? tables().m709_to_2020 : tables().m2020_to_709;
}

ColorImage gamut_convert(const ColorImage& img, Gamut to) {
  if (img.transfer != Transfer::LinearNits)
    throw Error("gamut_convert: image must be LinearNits, got " +
                std::string(transfer_name(img.transfer)));
  ColorImage out = img;
  out.gamut = to;
  if (img.gamut == to) return out;
  const Mat3& m = gamut_matrix(img.gamut, to);
  bool oog = false;
  const size_t n = img.pixel_count();
  for (size_t p = 0; p < n; ++p) {
    const float* src = img.pixels.data() + p * 3;
    float* dst = out.pixels.data() + p * 3;
    for (int i = 0; i < 3; ++i) {
      const double v = m[i][0] * src[0] + m[i][1] * src[1] + m[i][2] * src[2];
      if (v < 0.0) oog = true;
      dst[i] = static_cast<float>(v);
    }
  }
  out.out_of_gamut = oog;
  return out;
}

// ---------------------------------------------------------------------------
// ICtCp / delta E ITP
// ---------------------------------------------------------------------------

namespace {

// BT.2100-2: linear BT.2020 RGB -> LMS (rows sum to 4096/4096).
constexpr Mat3 kRgbToLms = {{{1688.0 / 4096.0, 2146.0 / 4096.0, 262.0 / 4096.0},
                             {683.0 / 4096.0, 2951.0 / 4096.0, 462.0 / 4096.0},
                             {99.0 / 4096.0, 309.0 / 4096.0, 3688.0 / 4096.0}}};

void pixel_to_ictcp(const float* rgb, float* out) {
  double lms[3];
  for (int i = 0; i < 3; ++i) {
    lms[i] = kRgbToLms[i][0] * rgb[0] + kRgbToLms[i][1] * rgb[1] + kRgbToLms[i][2] * rgb[2];
    lms[i] = pq_inv_eotf(std::fmax(lms[i], 0.0));
  }
  out[0] = static_cast<float>(0.5 * lms[0] + 0.5 * lms[1]);
  out[1] = static_cast<float>((6610.0 * lms[0] - 13613.0 * lms[1] + 7003.0 * lms[2]) / 4096.0);
  out[2] = static_cast<float>((17933.0 * lms[0] - 17390.0 * lms[1] - 543.0 * lms[2]) / 4096.0);
}

// Accepts PQ or LinearNits in BT.2020 (other tags are converted first).
ColorImage as_linear_2020(const ColorImage& img) {
  ColorImage lin = img.transfer == Transfer::LinearNits ? img
                                                        : convert_transfer(img, Transfer::LinearNits);
  if (lin.gamut != Gamut::BT2020) lin = gamut_convert(lin, Gamut::BT2020);
  return lin;
}

}  // namespace

std::vector<float> to_ictcp(const ColorImage& img) {
  if (img.gamut != Gamut::BT2020 || img.transfer != Transfer::LinearNits)
    throw Error("to_ictcp: image must be BT2020 LinearNits");
  std::vector<float> out(img.pixels.size());
  const size_t n = img.pixel_count();
  for (size_t p = 0; p < n; ++p) pixel_to_ictcp(img.pixels.data() + p * 3, out.data() + p * 3);
  return out;
}

std::pair<std::vector<float>, double> delta_e_itp(const ColorImage& a, const ColorImage& b) {
  if (a.width != b.width || a.height != b.height)
    throw ShapeError("delta_e_itp: image size mismatch");
  const std::vector<float> ia = to_ictcp(as_linear_2020(a));
  const std::vector<float> ib = to_ictcp(as_linear_2020(b));
  std::vector<float> per_pixel(a.pixel_count());
  double acc = 0.0;
  for (size_t p = 0; p < per_pixel.size(); ++p) {
    const double di = static_cast<double>(ia[p * 3]) - ib[p * 3];
    // T = Ct / 2 per BT.2124.
    const double dt = 0.5 * (static_cast<double>(ia[p * 3 + 1]) - ib[p * 3 + 1]);
    const double dp = static_cast<double>(ia[p * 3 + 2]) - ib[p * 3 + 2];
    const double de = 720.0 * std::sqrt(di * di + dt * dt + dp * dp);
    per_pixel[p] = static_cast<float>(de);
    acc += de;
  }
  return {std::move(per_pixel), acc / static_cast<double>(per_pixel.size())};
}

// ---------------------------------------------------------------------------
// highlight mask
// ---------------------------------------------------------------------------

std::vector<float> highlight_mask(const ColorImage& sdr) {
  if (sdr.transfer != Transfer::Gamma24)
    throw Error("highlight_mask: expects an SDR gamma image");
  std::vector<float> mask(sdr.pixel_count());
  for (size_t p = 0; p < mask.size(); ++p) {
    const float* rgb = sdr.pixels.data() + p * 3;
    const float y = 0.2126f * rgb[0] + 0.7152f * rgb[1] + 0.0722f * rgb[2];
    float t = (y - kHighlightLo) / (kHighlightHi - kHighlightLo);
    t = std::min(std::max(t, 0.0f), 1.0f);
    mask[p] = t * t * (3.0f - 2.0f * t);
  }
  return mask;
}

// ---------------------------------------------------------------------------
// tensor bridging
// ---------------------------------------------------------------------------

Tensor image_to_tensor(const ColorImage& img) {
  Tensor t = Tensor::zeros({1, 3, img.height, img.width});
  const int hw = img.height * img.width;
  for (int p = 0; p < hw; ++p)
    for (int c = 0; c < 3; ++c) t.data()[c * hw + p] = img.pixels[static_cast<size_t>(p) * 3 + c];
  return t;
}

ColorImage tensor_to_image(const Tensor& t, Gamut g, Transfer tr, float peak, bool clamp01) {
  if (t.ndim() != 4 || t.dim(0) != 1 || t.dim(1) != 3)
    throw ShapeError("tensor_to_image: expects [1,3,H,W]");
  const int H = t.dim(2), W = t.dim(3), hw = H * W;
  ColorImage img = ColorImage::make(W, H, g, tr, peak);
  for (int p = 0; p < hw; ++p)
    for (int c = 0; c < 3; ++c) {
      float v = t.data()[c * hw + p];
      if (clamp01) v = std::min(std::max(v, 0.0f), 1.0f);
      img.pixels[static_cast<size_t>(p) * 3 + c] = v;
    }
  return img;
}

}  // namespace hdrvq
