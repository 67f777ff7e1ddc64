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

#ifndef HDRVQ_METRICS_H
#define HDRVQ_METRICS_H

#include <string>
#include <vector>

#include "vq.hpp"

namespace hdrvq {

// All full-reference metrics consume PQ-domain code values; the structural
// and natural-statistics metrics operate on the ICtCp intensity channel.

// -10*log10(MSE) over all channels; +inf on identical images.
double psnr(const ColorImage& a, const ColorImage& b);

// Mean SSIM of the ICtCp I channel: 11x11 Gaussian window (sigma 1.5),
// standard C1/C2 stabilizers on unit range, valid-region pooling.
double ssim(const ColorImage& a, const ColorImage& b);

// Perceptual distance through the frozen phase-I encoder: per stage,
// channel-unit-normalize, squared difference, spatial mean, sum of stages.
// Differentiable (used as a training loss).
Tensor lphps_t(ParamCtx& p, const NetDims& dims, const Tensor& a, const Tensor& b, Tape* tape);
double lphps(ParamStore& store, const NetDims& dims, const ColorImage& a, const ColorImage& b);

// ICtCp intensity plane of a PQ BT.2020 image.
std::vector<float> intensity_plane(const ColorImage& pq);

// Mean-subtracted contrast-normalized coefficients: 7x7 Gaussian local
// mean/std (symmetric padding), stabilizer 1/255.
std::vector<float> mscn(const std::vector<float>& luma, int height, int width);

struct AggdFit {
  double alpha = 2.0;
  double sigma_l = 1.0;
  double sigma_r = 1.0;
};

// Moment-matching AGGD fit over a tabulated alpha grid [0.2, 10].
AggdFit fit_aggd(const std::vector<double>& samples);

struct PristineModel {
  int m = 0;
  std::vector<double> mean;  // m
  std::vector<double> cov;   // m*m row-major, SPD after regularization
};

// 36-dim natural-statistics feature per 32x32 patch (two scales).
std::vector<std::vector<double>> nhqe_patch_features(const ColorImage& pq);
PristineModel fit_pristine_model(const std::vector<const ColorImage*>& corpus);
double nhqe(const ColorImage& pq, const PristineModel& model);

void save_pristine_model(const std::string& path, const PristineModel& model,
                         const std::string& config_text);
PristineModel load_pristine_model(const std::string& path, std::string* config_text = nullptr);

struct FeatureStats {
  int m = 0;
  int64_t count = 0;
  std::vector<double> mean;  // m
  std::vector<double> cov;   // m*m row-major (unbiased)
};

// Spatially pooled deepest-stage encoder activations of each image.
std::vector<double> deep_features(ParamStore& store, const NetDims& dims, const ColorImage& pq);
FeatureStats feature_stats(const std::vector<std::vector<double>>& features);

// Symmetric PSD square root via eigendecomposition; eigenvalues below
// -1e-10 (relative) are rejected, small negatives clamp to zero.
std::vector<double> matrix_sqrt_psd(const std::vector<double>& a, int m);

// Frechet distance between feature Gaussians, symmetric form
// (S1^(1/2) S2 S1^(1/2))^(1/2).
double fhad(const FeatureStats& s1, const FeatureStats& s2);

}  // namespace hdrvq

#endif  // HDRVQ_METRICS_H
