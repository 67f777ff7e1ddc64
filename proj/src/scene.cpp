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

#include "scene.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "image_io.hpp"
#include "rng.hpp"

namespace hdrvq {

namespace {

struct Rgb {
  float r, g, b;
};

// BT.2020 luma weights.
float luma2020(const Rgb& c) { return 0.2627f * c.r + 0.6780f * c.g + 0.0593f * c.b; }

// Hue from 8 coarse bins plus jitter, moderate saturation; value-1 HSV to
// RGB, so the palette stays compact enough for a small prior table.
Rgb random_chroma(Pcg32& rng) {
  const float hue = (static_cast<float>(rng.below(8)) * 45.0f + rng.uniform(-10.0f, 10.0f));
  const float sat = rng.uniform(0.15f, 0.65f);
  const float h = (hue < 0 ? hue + 360.0f : hue) / 60.0f;
  const int sector = static_cast<int>(h) % 6;
  const float f = h - std::floor(h);
  const float p = 1.0f - sat;
  const float q = 1.0f - sat * f;
  const float t = 1.0f - sat * (1.0f - f);
  switch (sector) {
    case 0: return {1.0f, t, p};
    case 1: return {q, 1.0f, p};
    case 2: return {p, 1.0f, t};
    case 3: return {p, q, 1.0f};
    case 4: return {t, p, 1.0f};
    default: return {1.0f, p, q};
  }
}

Rgb scaled_to_luminance(const Rgb& c, float nits) {
  const float y = luma2020(c);
  const float s = nits / std::max(y, 1e-4f);
  return {c.r * s, c.g * s, c.b * s};
}

float smoothstep01(float t) {
  t = std::min(std::max(t, 0.0f), 1.0f);
  return t * t * (3.0f - 2.0f * t);
}

// Bilinearly interpolated lattice of uniform values in [0,1].
class ValueNoise {
 public:
  ValueNoise(int cells_x, int cells_y, Pcg32& rng) : cx_(cells_x), cy_(cells_y) {
    lattice_.resize(static_cast<size_t>(cx_ + 1) * (cy_ + 1));
    for (auto& v : lattice_) v = rng.uniform();
  }
  float at(float u, float v) const {  // u,v in [0,1]
    const float x = u * cx_, y = v * cy_;
    const int x0 = std::min(static_cast<int>(x), cx_ - 1);
    const int y0 = std::min(static_cast<int>(y), cy_ - 1);
    const float fx = x - x0, fy = y - y0;
    auto L = [this](int yy, int xx) { return lattice_[static_cast<size_t>(yy) * (cx_ + 1) + xx]; };
    const float a = L(y0, x0) * (1 - fx) + L(y0, x0 + 1) * fx;
    const float b = L(y0 + 1, x0) * (1 - fx) + L(y0 + 1, x0 + 1) * fx;
    return a * (1 - fy) + b * fy;
  }

 private:
  int cx_, cy_;
  std::vector<float> lattice_;
};

}  // namespace

ColorImage gen_hdr_scene(const SceneSpec& spec) {
  if (spec.width % 16 != 0 || spec.height % 16 != 0)
    throw ShapeError("gen_hdr_scene: size must be a multiple of 16");
  const int W = spec.width, H = spec.height;
  Pcg32 rng(spec.seed, 0x5ce7eull);
  ColorImage img = ColorImage::make(W, H, Gamut::BT2020, Transfer::LinearNits, spec.peak_nits);

  // Background: smooth two-color gradient.
  const Rgb gA = scaled_to_luminance(random_chroma(rng), rng.uniform(4.0f, 60.0f));
  const Rgb gB = scaled_to_luminance(random_chroma(rng), rng.uniform(20.0f, 120.0f));
  const float ang = rng.uniform(0.0f, 6.2831853f);
  const float dx = std::cos(ang), dy = std::sin(ang);
  const float span = std::fabs(dx) * W + std::fabs(dy) * H;
  const float g_mix = spec.w_gradient;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      float t = ((x - W * 0.5f) * dx + (y - H * 0.5f) * dy) / span + 0.5f;
      t = smoothstep01(t) * g_mix + 0.5f * (1.0f - g_mix);
      float* px = img.px(y, x);
      px[0] = gA.r + (gB.r - gA.r) * t;
      px[1] = gA.g + (gB.g - gA.g) * t;
      px[2] = gA.b + (gB.b - gA.b) * t;
    }

  // Soft-edged color patches.
  const int n_patches = static_cast<int>(rng.below(4) * spec.w_patches);
  for (int k = 0; k < n_patches; ++k) {
    const Rgb col = scaled_to_luminance(random_chroma(rng), rng.uniform(10.0f, 180.0f));
    const float cx = rng.uniform(0.1f, 0.9f) * W, cy = rng.uniform(0.1f, 0.9f) * H;
    const float hw = rng.uniform(0.08f, 0.25f) * W, hh = rng.uniform(0.08f, 0.25f) * H;
    const float edge = rng.uniform(1.0f, 4.0f);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const float ax = smoothstep01((hw - std::fabs(x - cx)) / edge);
        const float ay = smoothstep01((hh - std::fabs(y - cy)) / edge);
        const float a = 0.75f * ax * ay;
        if (a <= 0.0f) continue;
        float* px = img.px(y, x);
        px[0] += (col.r - px[0]) * a;
        px[1] += (col.g - px[1]) * a;
        px[2] += (col.b - px[2]) * a;
      }
  }

  // Light blobs; the first is large and bright so every scene carries
  // highlight content above 200 nits.
  const int n_blobs = 1 + static_cast<int>(rng.below(4) * spec.w_blobs);
  for (int k = 0; k < n_blobs; ++k) {
    const bool anchor = (k == 0);
    const float sx = anchor ? rng.uniform(W / 8.0f, W / 5.0f) : rng.uniform(W / 20.0f, W / 8.0f);
    const float sy = anchor ? rng.uniform(H / 8.0f, H / 5.0f) : rng.uniform(H / 20.0f, H / 8.0f);
    const float amp = anchor ? rng.uniform(400.0f, 0.9f * spec.peak_nits)
                             : rng.uniform(50.0f, 600.0f);
    const float cx = anchor ? rng.uniform(0.2f, 0.8f) * W : rng.uniform(0.05f, 0.95f) * W;
    const float cy = anchor ? rng.uniform(0.2f, 0.8f) * H : rng.uniform(0.05f, 0.95f) * H;
    // Warm-to-neutral light color.
    const float warmth = rng.uniform(0.0f, 0.25f);
    const Rgb tint{1.0f, 1.0f - 0.3f * warmth, 1.0f - 0.6f * warmth};
    const Rgb col = scaled_to_luminance(tint, amp);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const float rx = (x - cx) / sx, ry = (y - cy) / sy;
        const float g = std::exp(-0.5f * (rx * rx + ry * ry));
        if (g < 1e-4f) continue;
        float* px = img.px(y, x);
        px[0] += col.r * g;
        px[1] += col.g * g;
        px[2] += col.b * g;
      }
  }

  // Multiplicative texture: two lattice octaves plus bounded per-pixel
  // grain, so local contrast statistics look natural at pixel scale.
  const ValueNoise coarse(4, 4, rng);
  const ValueNoise mid(16, 16, rng);
  const float amp = 0.12f * spec.w_noise;
  const float grain = 0.18f * spec.w_noise;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const float u = (x + 0.5f) / W, v = (y + 0.5f) / H;
      const float n = 0.6f * coarse.at(u, v) + 0.4f * mid.at(u, v);
      const float m = (1.0f + amp * (2.0f * n - 1.0f)) *
                      (1.0f + grain * rng.uniform(-1.0f, 1.0f));
      float* px = img.px(y, x);
      px[0] *= m;
      px[1] *= m;
      px[2] *= m;
    }

  for (auto& v : img.pixels) v = std::min(std::max(v, 0.0f), spec.peak_nits);
  return img;
}

const char* tone_style_name(ToneStyle s) {
  switch (s) {
    case ToneStyle::Reinhard:
      return "reinhard";
    case ToneStyle::Hable:
      return "hable";
    case ToneStyle::ClipGamma:
      return "clip_gamma";
  }
  return "?";
}

ToneStyle tone_style_from_name(const std::string& name) {
  if (name == "reinhard") return ToneStyle::Reinhard;
  if (name == "hable") return ToneStyle::Hable;
  if (name == "clip_gamma") return ToneStyle::ClipGamma;
  throw Error("unknown tone style: " + name);
}

double hable_curve(double x) {
  constexpr double A = 0.15, B = 0.50, C = 0.10, D = 0.20, E = 0.02, F = 0.30;
  return ((x * (A * x + C * B) + D * E) / (x * (A * x + B) + D * F)) - E / F;
}

ColorImage degrade_to_sdr(const ColorImage& hdr, const StyleTag& style) {
  if (hdr.gamut != Gamut::BT2020 || hdr.transfer != Transfer::LinearNits)
    throw Error("degrade_to_sdr: expects linear BT.2020 input");
  ColorImage narrow = gamut_convert(hdr, Gamut::BT709);
  for (auto& v : narrow.pixels) v = std::max(v, 0.0f);  // clip out-of-gamut negatives
  narrow.out_of_gamut = false;

  ColorImage out = ColorImage::make(hdr.width, hdr.height, Gamut::BT709, Transfer::Gamma24,
                                    100.0f);
  const double hable_white = hable_curve(11.2);
  const size_t n = narrow.pixel_count();
  for (size_t p = 0; p < n; ++p) {
    const float* src = narrow.pixels.data() + p * 3;
    float tm[3];
    for (int i = 0; i < 3; ++i) {
      // Diffuse-white-relative linear light: 100 nits maps to 1.0.
      const double l = static_cast<double>(src[i]) * style.exposure / 100.0;
      double t = 0.0;
      switch (style.style) {
        case ToneStyle::Reinhard:
          t = l / (1.0 + l);
          break;
        case ToneStyle::Hable:
          t = hable_curve(l) / hable_white;
          break;
        case ToneStyle::ClipGamma:
          t = std::min(l, 1.0);
          break;
      }
      tm[i] = static_cast<float>(std::min(std::max(t, 0.0), 1.0));
    }
    const float y = 0.2126f * tm[0] + 0.7152f * tm[1] + 0.0722f * tm[2];
    float* dst = out.pixels.data() + p * 3;
    for (int i = 0; i < 3; ++i) {
      const float sat = y + style.saturation * (tm[i] - y);
      const double code = gamma_oetf(100.0 * std::min(std::max(sat, 0.0f), 1.0f));
      // Materialize the 8-bit SDR signal depth.
      dst[i] = static_cast<float>(std::floor(code * 255.0 + 0.5) / 255.0);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// manifest
// ---------------------------------------------------------------------------

void write_manifest(const std::string& path, const std::vector<CorpusEntry>& entries,
                    const ManifestHeader& header) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write manifest: " + path);
  char hex[32];
  f << "# hdrvq corpus manifest\n";
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(header.config_digest));
  f << "# config_digest = " << hex << "\n";
  std::snprintf(hex, sizeof hex, "%016llx",
                static_cast<unsigned long long>(header.structural_digest));
  f << "# structural_digest = " << hex << "\n";
  for (const auto& e : entries) {
    f << e.index << '\t' << e.seed << '\t' << tone_style_name(e.style.style) << '\t'
      << e.style.exposure << '\t' << e.style.saturation << '\t' << e.split << '\n';
  }
  if (!f) throw IoError("short manifest write: " + path);
}

std::vector<CorpusEntry> read_manifest(const std::string& path, ManifestHeader* header) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open manifest: " + path);
  std::vector<CorpusEntry> entries;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (header) {
        auto pos = line.find("structural_digest =");
        if (pos != std::string::npos) {
          header->structural_digest = std::stoull(line.substr(pos + 19), nullptr, 16);
          continue;
        }
        pos = line.find("config_digest =");
        if (pos != std::string::npos)
          header->config_digest = std::stoull(line.substr(pos + 15), nullptr, 16);
      }
      continue;
    }
    std::istringstream is(line);
    CorpusEntry e;
    std::string style;
    if (!(is >> e.index >> e.seed >> style >> e.style.exposure >> e.style.saturation >> e.split))
      throw IoError("malformed manifest line: " + line);
    e.style.style = tone_style_from_name(style);
    entries.push_back(e);
  }
  return entries;
}

std::string hdr_file_name(int index) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "hdr/%05d.hfi", index);
  return buf;
}

std::string sdr_file_name(int index, ToneStyle style) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "sdr/%05d_%s.hfi", index, tone_style_name(style));
  return buf;
}

}  // namespace hdrvq
