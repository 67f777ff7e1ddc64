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

#define EIGEN_DONT_PARALLELIZE
#include "metrics.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

#include "checkpoint.hpp"
#include "image_io.hpp"

namespace hdrvq {

namespace {

void require_same_size(const ColorImage& a, const ColorImage& b, const char* op) {
  if (a.width != b.width || a.height != b.height)
    throw ShapeError(std::string(op) + ": image size mismatch");
}

void require_pq(const ColorImage& img, const char* op) {
  if (img.transfer != Transfer::PQ)
    throw Error(std::string(op) + ": expects PQ code values");
}

}  // namespace

double psnr(const ColorImage& a, const ColorImage& b) {
  require_same_size(a, b, "psnr");
  require_pq(a, "psnr");
  require_pq(b, "psnr");
  double acc = 0.0;
  for (size_t i = 0; i < a.pixels.size(); ++i) {
    const double d = static_cast<double>(a.pixels[i]) - b.pixels[i];
    acc += d * d;
  }
  const double mse = acc / static_cast<double>(a.pixels.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return -10.0 * std::log10(mse);
}

std::vector<float> intensity_plane(const ColorImage& pq) {
  require_pq(pq, "intensity_plane");
  ColorImage lin = convert_transfer(pq, Transfer::LinearNits);
  if (lin.gamut != Gamut::BT2020) lin = gamut_convert(lin, Gamut::BT2020);
  const std::vector<float> ictcp = to_ictcp(lin);
  std::vector<float> plane(pq.pixel_count());
  for (size_t i = 0; i < plane.size(); ++i) plane[i] = ictcp[i * 3];
  return plane;
}

namespace {

std::vector<double> gaussian_kernel(int radius, double sigma) {
  std::vector<double> k(static_cast<size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[static_cast<size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += k[static_cast<size_t>(i + radius)];
  }
  for (auto& v : k) v /= sum;
  return k;
}

}  // namespace

double ssim(const ColorImage& a, const ColorImage& b) {
  require_same_size(a, b, "ssim");
  const int H = a.height, W = a.width;
  constexpr int kRadius = 5;  // 11x11 window
  if (H < 11 || W < 11) throw ShapeError("ssim: image smaller than the 11x11 window");
  const std::vector<float> ia = intensity_plane(a);
  const std::vector<float> ib = intensity_plane(b);
  const std::vector<double> k = gaussian_kernel(kRadius, 1.5);

  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;
  double total = 0.0;
  int64_t count = 0;
  for (int y = kRadius; y < H - kRadius; ++y)
    for (int x = kRadius; x < W - kRadius; ++x) {
      double mu_a = 0, mu_b = 0, aa = 0, bb = 0, ab = 0;
      for (int dy = -kRadius; dy <= kRadius; ++dy)
        for (int dx = -kRadius; dx <= kRadius; ++dx) {
          const double wgt = k[static_cast<size_t>(dy + kRadius)] *
                             k[static_cast<size_t>(dx + kRadius)];
          const double va = ia[static_cast<size_t>(y + dy) * W + (x + dx)];
          const double vb = ib[static_cast<size_t>(y + dy) * W + (x + dx)];
          mu_a += wgt * va;
          mu_b += wgt * vb;
          aa += wgt * va * va;
          bb += wgt * vb * vb;
          ab += wgt * va * vb;
        }
      const double var_a = aa - mu_a * mu_a;
      const double var_b = bb - mu_b * mu_b;
      const double cov = ab - mu_a * mu_b;
      const double s = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) /
                       ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
      total += s;
      ++count;
    }
  return total / static_cast<double>(count);
}

// ---------------------------------------------------------------------------
// LPHPS
// ---------------------------------------------------------------------------

namespace {

Tensor unit_normalize_channels(const Tensor& f, Tape* tape) {
  Tensor norm = ops::rsqrt_val(
      ops::add_scalar(ops::sum_channels(ops::square(f, tape), tape), 1e-10f, tape), tape);
  return ops::mul_n1hw(f, norm, tape);
}

}  // namespace

Tensor lphps_t(ParamCtx& p, const NetDims& dims, const Tensor& a, const Tensor& b, Tape* tape) {
  EncFeatures fa = encode_h_t(p, dims, a, tape);
  EncFeatures fb = encode_h_t(p, dims, b, tape);
  Tensor total;
  for (size_t s = 0; s < fa.stages.size(); ++s) {
    Tensor na = unit_normalize_channels(fa.stages[s], tape);
    Tensor nb = unit_normalize_channels(fb.stages[s], tape);
    Tensor term = ops::mean_all(
        ops::sum_channels(ops::square(ops::sub(na, nb, tape), tape), tape), tape);
    total = s == 0 ? term : ops::add(total, term, tape);
  }
  return total;
}

double lphps(ParamStore& store, const NetDims& dims, const ColorImage& a, const ColorImage& b) {
  require_pq(a, "lphps");
  require_pq(b, "lphps");
  require_same_size(a, b, "lphps");
  if (!store.has("eh.stem.w")) throw Error("lphps: frozen encoder not available");
  ParamCtx p(store, nullptr);
  return lphps_t(p, dims, image_to_tensor(a), image_to_tensor(b), nullptr).item();
}

// ---------------------------------------------------------------------------
// MSCN / AGGD / NHQE
// ---------------------------------------------------------------------------

namespace {

// Symmetric (mirror) padding index.
int reflect(int i, int n) {
  if (i < 0) return -i - 1;
  if (i >= n) return 2 * n - i - 1;
  return i;
}

}  // namespace

std::vector<float> mscn(const std::vector<float>& luma, int height, int width) {
  if (height < 7 || width < 7) throw ShapeError("mscn: image smaller than the 7x7 window");
  if (static_cast<int>(luma.size()) != height * width)
    throw ShapeError("mscn: buffer size mismatch");
  constexpr int kRadius = 3;
  constexpr double kStabilizer = 1.0 / 255.0;
  const std::vector<double> k = gaussian_kernel(kRadius, 7.0 / 6.0);

  // Separable filtering of I and I^2.
  std::vector<double> tmp1(luma.size()), tmp2(luma.size());
  std::vector<double> mu(luma.size()), m2(luma.size());
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      double s1 = 0, s2 = 0;
      for (int d = -kRadius; d <= kRadius; ++d) {
        const double v = luma[static_cast<size_t>(y) * width + reflect(x + d, width)];
        s1 += k[static_cast<size_t>(d + kRadius)] * v;
        s2 += k[static_cast<size_t>(d + kRadius)] * v * v;
      }
      tmp1[static_cast<size_t>(y) * width + x] = s1;
      tmp2[static_cast<size_t>(y) * width + x] = s2;
    }
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      double s1 = 0, s2 = 0;
      for (int d = -kRadius; d <= kRadius; ++d) {
        const int yy = reflect(y + d, height);
        s1 += k[static_cast<size_t>(d + kRadius)] * tmp1[static_cast<size_t>(yy) * width + x];
        s2 += k[static_cast<size_t>(d + kRadius)] * tmp2[static_cast<size_t>(yy) * width + x];
      }
      mu[static_cast<size_t>(y) * width + x] = s1;
      m2[static_cast<size_t>(y) * width + x] = s2;
    }

  std::vector<float> out(luma.size());
  for (size_t i = 0; i < luma.size(); ++i) {
    const double var = std::max(m2[i] - mu[i] * mu[i], 0.0);
    out[i] = static_cast<float>((luma[i] - mu[i]) / (std::sqrt(var) + kStabilizer));
  }
  return out;
}

namespace {

// rho(alpha) = Gamma(2/a)^2 / (Gamma(1/a) Gamma(3/a)) tabulated over the
// fit grid.
struct AggdTable {
  std::vector<double> alpha, rho;
  AggdTable() {
    for (double a = 0.2; a <= 10.0 + 1e-12; a += 0.001) {
      const double g1 = std::tgamma(1.0 / a);
      const double g2 = std::tgamma(2.0 / a);
      const double g3 = std::tgamma(3.0 / a);
      alpha.push_back(a);
      rho.push_back(g2 * g2 / (g1 * g3));
    }
  }
};

const AggdTable& aggd_table() {
  static const AggdTable t;
  return t;
}

}  // namespace

AggdFit fit_aggd(const std::vector<double>& samples) {
  if (samples.size() < 100) throw Error("fit_aggd: needs at least 100 samples");
  double sum_sq_l = 0, sum_sq_r = 0, sum_abs = 0, sum_sq = 0;
  int64_t n_l = 0, n_r = 0;
  for (double v : samples) {
    sum_abs += std::fabs(v);
    sum_sq += v * v;
    if (v < 0) {
      sum_sq_l += v * v;
      ++n_l;
    } else if (v > 0) {
      sum_sq_r += v * v;
      ++n_r;
    }
  }
  if (n_l == 0 || n_r == 0 || sum_sq == 0.0)
    throw Error("fit_aggd: degenerate sample distribution");
  const double sigma_l = std::sqrt(sum_sq_l / static_cast<double>(n_l));
  const double sigma_r = std::sqrt(sum_sq_r / static_cast<double>(n_r));
  const double gamma_hat = sigma_l / sigma_r;
  const double n = static_cast<double>(samples.size());
  const double r_hat = (sum_abs / n) * (sum_abs / n) / (sum_sq / n);
  const double g2 = gamma_hat * gamma_hat;
  const double r_norm = r_hat * (gamma_hat * g2 + 1.0) * (gamma_hat + 1.0) /
                        ((g2 + 1.0) * (g2 + 1.0));

  const AggdTable& tab = aggd_table();
  size_t best = 0;
  double best_err = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < tab.alpha.size(); ++i) {
    const double e = (tab.rho[i] - r_norm) * (tab.rho[i] - r_norm);
    if (e < best_err) {
      best_err = e;
      best = i;
    }
  }
  return {tab.alpha[best], sigma_l, sigma_r};
}

namespace {

std::vector<double> aggd_features(const std::vector<double>& samples) {
  const AggdFit f = fit_aggd(samples);
  const double eta = (f.sigma_r - f.sigma_l) * std::tgamma(2.0 / f.alpha) /
                     std::tgamma(1.0 / f.alpha);
  return {f.alpha, eta, f.sigma_l, f.sigma_r};
}

// 18 features of one patch of an MSCN plane: symmetric fit of the
// coefficients plus AGGD fits of the four shifted products.
std::vector<double> patch_scale_features(const std::vector<float>& coeffs, int stride, int x0,
                                         int y0, int size) {
  std::vector<double> feats;
  std::vector<double> s;
  s.reserve(static_cast<size_t>(size) * size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      s.push_back(coeffs[static_cast<size_t>(y0 + y) * stride + (x0 + x)]);
  const AggdFit base = fit_aggd(s);
  feats.push_back(base.alpha);
  feats.push_back(0.5 * (base.sigma_l + base.sigma_r));

  const int shifts[4][2] = {{0, 1}, {1, 0}, {1, 1}, {1, -1}};
  for (const auto& sh : shifts) {
    std::vector<double> prod;
    prod.reserve(static_cast<size_t>(size) * size);
    for (int y = 0; y < size; ++y) {
      const int yy = y + sh[0];
      if (y0 + yy >= y0 + size) continue;
      for (int x = 0; x < size; ++x) {
        const int xx = x + sh[1];
        if (xx < 0 || xx >= size) continue;
        prod.push_back(static_cast<double>(
                           coeffs[static_cast<size_t>(y0 + y) * stride + (x0 + x)]) *
                       coeffs[static_cast<size_t>(y0 + yy) * stride + (x0 + xx)]);
      }
    }
    const std::vector<double> pf = aggd_features(prod);
    feats.insert(feats.end(), pf.begin(), pf.end());
  }
  return feats;
}

std::vector<float> downsample2(const std::vector<float>& img, int h, int w) {
  std::vector<float> out(static_cast<size_t>(h / 2) * (w / 2));
  for (int y = 0; y < h / 2; ++y)
    for (int x = 0; x < w / 2; ++x)
      out[static_cast<size_t>(y) * (w / 2) + x] =
          0.25f * (img[static_cast<size_t>(2 * y) * w + 2 * x] +
                   img[static_cast<size_t>(2 * y) * w + 2 * x + 1] +
                   img[static_cast<size_t>(2 * y + 1) * w + 2 * x] +
                   img[static_cast<size_t>(2 * y + 1) * w + 2 * x + 1]);
  return out;
}

}  // namespace

std::vector<std::vector<double>> nhqe_patch_features(const ColorImage& pq) {
  constexpr int kPatch = 32;
  const int H = pq.height, W = pq.width;
  if (H < kPatch || W < kPatch) throw ShapeError("nhqe: image smaller than a 32x32 patch");
  const std::vector<float> luma = intensity_plane(pq);
  const std::vector<float> m1 = mscn(luma, H, W);
  const std::vector<float> half = downsample2(luma, H, W);
  const std::vector<float> m2 = mscn(half, H / 2, W / 2);

  std::vector<std::vector<double>> feats;
  for (int py = 0; py + kPatch <= H; py += kPatch)
    for (int px = 0; px + kPatch <= W; px += kPatch) {
      std::vector<double> f = patch_scale_features(m1, W, px, py, kPatch);
      const std::vector<double> f2 =
          patch_scale_features(m2, W / 2, px / 2, py / 2, kPatch / 2);
      f.insert(f.end(), f2.begin(), f2.end());
      feats.push_back(std::move(f));
    }
  return feats;
}

PristineModel fit_pristine_model(const std::vector<const ColorImage*>& corpus) {
  if (corpus.size() < 50) throw Error("fit_pristine_model: needs at least 50 images");
  std::vector<std::vector<double>> all;
  for (const ColorImage* img : corpus) {
    auto f = nhqe_patch_features(*img);
    all.insert(all.end(), f.begin(), f.end());
  }
  const FeatureStats st = feature_stats(all);
  PristineModel model;
  model.m = st.m;
  model.mean = st.mean;
  model.cov = st.cov;
  double trace = 0.0;
  for (int i = 0; i < st.m; ++i) trace += model.cov[static_cast<size_t>(i) * st.m + i];
  const double eps = 1e-6 * trace / st.m;
  for (int i = 0; i < st.m; ++i) model.cov[static_cast<size_t>(i) * st.m + i] += eps;
  return model;
}

double nhqe(const ColorImage& pq, const PristineModel& model) {
  if (model.m == 0) throw Error("nhqe: pristine model not fitted");
  const std::vector<std::vector<double>> feats = nhqe_patch_features(pq);
  FeatureStats st;
  if (feats.size() == 1) {
    // Single-patch image: the image covariance contributes nothing.
    st.m = static_cast<int>(feats[0].size());
    st.count = 1;
    st.mean = feats[0];
    st.cov.assign(static_cast<size_t>(st.m) * st.m, 0.0);
  } else {
    st = feature_stats(feats);
  }
  if (st.m != model.m) throw ShapeError("nhqe: feature length mismatch");
  const int m = model.m;
  Eigen::MatrixXd cov(m, m);
  Eigen::VectorXd diff(m);
  for (int i = 0; i < m; ++i) {
    diff(i) = model.mean[static_cast<size_t>(i)] - st.mean[static_cast<size_t>(i)];
    for (int j = 0; j < m; ++j)
      cov(i, j) = 0.5 * (model.cov[static_cast<size_t>(i) * m + j] +
                         st.cov[static_cast<size_t>(i) * m + j]);
  }
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) {
    // Regularize a near-singular pooled covariance.
    for (int i = 0; i < m; ++i) cov(i, i) += 1e-8 * (1.0 + cov.trace() / m);
    llt.compute(cov);
  }
  const Eigen::VectorXd sol = llt.solve(diff);
  return std::sqrt(std::max(diff.dot(sol), 0.0));
}

void save_pristine_model(const std::string& path, const PristineModel& model,
                         const std::string& config_text) {
  ParamStore store;
  Tensor& mu = store.create("pristine.mu", {model.m});
  for (int i = 0; i < model.m; ++i) mu.data()[i] = static_cast<float>(model.mean[i]);
  Tensor& cov = store.create("pristine.cov", {model.m, model.m});
  for (size_t i = 0; i < model.cov.size(); ++i) cov.data()[i] = static_cast<float>(model.cov[i]);
  save_checkpoint(path, store, config_text, 0);
}

PristineModel load_pristine_model(const std::string& path, std::string* config_text) {
  LoadedCheckpoint ck = load_checkpoint(path);
  if (!ck.store.has("pristine.mu") || !ck.store.has("pristine.cov"))
    throw IoError("not a pristine model file: " + path);
  const Tensor& mu = ck.store.at("pristine.mu");
  const Tensor& cov = ck.store.at("pristine.cov");
  PristineModel model;
  model.m = mu.dim(0);
  model.mean.assign(mu.data(), mu.data() + mu.numel());
  model.cov.assign(cov.data(), cov.data() + cov.numel());
  if (config_text) *config_text = ck.config_text;
  return model;
}

// ---------------------------------------------------------------------------
// FHAD
// ---------------------------------------------------------------------------

std::vector<double> deep_features(ParamStore& store, const NetDims& dims, const ColorImage& pq) {
  EncFeatures enc = encode_h(store, dims, pq);
  const int d = enc.latent.dim(1), hw = enc.latent.dim(2) * enc.latent.dim(3);
  std::vector<double> out(static_cast<size_t>(d), 0.0);
  for (int c = 0; c < d; ++c) {
    double acc = 0.0;
    for (int i = 0; i < hw; ++i) acc += enc.latent.data()[static_cast<int64_t>(c) * hw + i];
    out[static_cast<size_t>(c)] = acc / hw;
  }
  return out;
}

FeatureStats feature_stats(const std::vector<std::vector<double>>& features) {
  if (features.size() < 2) throw Error("feature_stats: needs at least 2 samples");
  const int m = static_cast<int>(features[0].size());
  FeatureStats st;
  st.m = m;
  st.count = static_cast<int64_t>(features.size());
  st.mean.assign(static_cast<size_t>(m), 0.0);
  st.cov.assign(static_cast<size_t>(m) * m, 0.0);
  for (const auto& f : features) {
    if (static_cast<int>(f.size()) != m) throw ShapeError("feature_stats: ragged features");
    for (int i = 0; i < m; ++i) st.mean[static_cast<size_t>(i)] += f[static_cast<size_t>(i)];
  }
  for (auto& v : st.mean) v /= static_cast<double>(st.count);
  for (const auto& f : features)
    for (int i = 0; i < m; ++i) {
      const double di = f[static_cast<size_t>(i)] - st.mean[static_cast<size_t>(i)];
      for (int j = 0; j < m; ++j)
        st.cov[static_cast<size_t>(i) * m + j] +=
            di * (f[static_cast<size_t>(j)] - st.mean[static_cast<size_t>(j)]);
    }
  for (auto& v : st.cov) v /= static_cast<double>(st.count - 1);
  return st;
}

std::vector<double> matrix_sqrt_psd(const std::vector<double>& a, int m) {
  if (static_cast<int>(a.size()) != m * m) throw ShapeError("matrix_sqrt_psd: size mismatch");
  Eigen::MatrixXd A(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) A(i, j) = a[static_cast<size_t>(i) * m + j];
  const double scale = std::max(1.0, A.cwiseAbs().maxCoeff());
  if ((A - A.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale)
    throw Error("matrix_sqrt_psd: input is not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
  Eigen::VectorXd vals = es.eigenvalues();
  for (int i = 0; i < m; ++i) {
    if (vals(i) < -1e-10 * scale)
      throw Error("matrix_sqrt_psd: matrix has a significantly negative eigenvalue");
    vals(i) = std::sqrt(std::max(vals(i), 0.0));
  }
  const Eigen::MatrixXd S = es.eigenvectors() * vals.asDiagonal() *
                            es.eigenvectors().transpose();
  std::vector<double> out(static_cast<size_t>(m) * m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) out[static_cast<size_t>(i) * m + j] = S(i, j);
  return out;
}

double fhad(const FeatureStats& s1, const FeatureStats& s2) {
  if (s1.m != s2.m) throw ShapeError("fhad: feature dimension mismatch");
  const int m = s1.m;
  double mean_term = 0.0;
  for (int i = 0; i < m; ++i) {
    const double d = s1.mean[static_cast<size_t>(i)] - s2.mean[static_cast<size_t>(i)];
    mean_term += d * d;
  }
  const std::vector<double> sqrt1 = matrix_sqrt_psd(s1.cov, m);
  Eigen::MatrixXd S1(m, m), C2(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      S1(i, j) = sqrt1[static_cast<size_t>(i) * m + j];
      C2(i, j) = s2.cov[static_cast<size_t>(i) * m + j];
    }
  Eigen::MatrixXd M = S1 * C2 * S1;
  // Symmetrize against roundoff before the second root.
  M = 0.5 * (M + M.transpose());
  std::vector<double> mv(static_cast<size_t>(m) * m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) mv[static_cast<size_t>(i) * m + j] = M(i, j);
  const std::vector<double> cross = matrix_sqrt_psd(mv, m);
  double trace_term = 0.0;
  for (int i = 0; i < m; ++i)
    trace_term += s1.cov[static_cast<size_t>(i) * m + i] + s2.cov[static_cast<size_t>(i) * m + i] -
                  2.0 * cross[static_cast<size_t>(i) * m + i];
  return std::max(mean_term + trace_term, 0.0);
}

}  // namespace hdrvq
