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
#include "ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstring>

namespace hdrvq::ops {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<RowMat>;
using CMapRM = Eigen::Map<const RowMat>;

void require(bool cond, const std::string& msg) {
  if (!cond) throw ShapeError(msg);
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}

bool wants_grad(Tape* tape, std::initializer_list<const Tensor*> inputs) {
  if (!tape) return false;
  for (const Tensor* t : inputs)
    if (t->tracked()) return true;
  return false;
}

void axpy(std::vector<float>& dst, const std::vector<float>& src) {
  for (size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b, Tape* tape) {
  require_same_shape(a, b, "add");
  Tensor out = Tensor::zeros(a.shape());
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] + b.data()[i];
  check_finite(out, "add");
  if (wants_grad(tape, {&a, &b})) {
    int sa = a.grad_slot(), sb = b.grad_slot();
    int so = tape->track(out);
    tape->push_node([sa, sb, so](Tape& tp) {
      const auto& g = tp.slot_grad(so);
      if (sa >= 0) axpy(tp.slot_grad(sa), g);
      if (sb >= 0) axpy(tp.slot_grad(sb), g);
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b, Tape* tape) {
  require_same_shape(a, b, "sub");
  Tensor out = Tensor::zeros(a.shape());
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] - b.data()[i];
  check_finite(out, "sub");
  if (wants_grad(tape, {&a, &b})) {
    int sa = a.grad_slot(), sb = b.grad_slot();
    int so = tape->track(out);
    tape->push_node([sa, sb, so](Tape& tp) {
      const auto& g = tp.slot_grad(so);
      if (sa >= 0) axpy(tp.slot_grad(sa), g);
      if (sb >= 0) {
        auto& gb = tp.slot_grad(sb);
        for (size_t i = 0; i < gb.size(); ++i) gb[i] -= g[i];
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b, Tape* tape) {
  require_same_shape(a, b, "mul");
  Tensor out = Tensor::zeros(a.shape());
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * b.data()[i];
  check_finite(out, "mul");
  if (wants_grad(tape, {&a, &b})) {
    int sa = a.grad_slot(), sb = b.grad_slot();
    int so = tape->track(out);
    tape->push_node([sa, sb, so, a, b](Tape& tp) {
      const auto& g = tp.slot_grad(so);
      if (sa >= 0) {
        auto& ga = tp.slot_grad(sa);
        for (size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * b.data()[i];
      }
      if (sb >= 0) {
        auto& gb = tp.slot_grad(sb);
        for (size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * a.data()[i];
      }
    });
  }
  return out;
}

Tensor add_scalar(const Tensor& a, float s, Tape* tape) {
  Tensor out = Tensor::zeros(a.shape());
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] + s;
  check_finite(out, "add_scalar");
  if (wants_grad(tape, {&a})) {
    int sa = a.grad_slot();
    int so = tape->track(out);
    tape->push_node([sa, so](Tape& tp) { axpy(tp.slot_grad(sa), tp.slot_grad(so)); });
  }
  return out;
}

Tensor mul_scalar(const Tensor& a, float s, Tape* tape) {
  Tensor out = Tensor::zeros(a.shape());
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * s;
  check_finite(out, "mul_scalar");
  if (wants_grad(tape, {&a})) {
    int sa = a.grad_slot();
    int so = tape->track(out);
    tape->push_node([sa, so, s](Tape& tp) {
      const auto& g = tp.slot_grad(so);
      auto& ga = tp.slot_grad(sa);
      for (size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * s;
    });
  }
  return out;
}

Tensor leaky_relu(const Tensor& a, float negative_slope, Tape* tape) {
  Tensor out = Tensor::zeros(a.shape());
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) {
    float v = a.data()[i];
    out.data()[i] = v > 0.0f ? v : v * negative_slope;
  }
  check_finite(out, "leaky_relu");
  if (wants_grad(tape, {&a})) {
    int sa = a.grad_slot();
    int so = tape->track(out);
    tape->push_node([sa, so, a, negative_slope](Tape& tp) {
      const auto& g = tp.slot_grad(so);
      auto& ga = tp.slot_grad(sa);
      for (size_t i = 0; i < ga.size(); ++i)
        ga[i] += g[i] * (a.data()[i] > 0.0f ? 1.0f : negative_slope);
    });
  }
  return out;
}

Tensor abs_val(const Tensor& a, Tape* tape) {
  Tensor out = Tensor::zeros(a.shape());
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) out.data()[i] = std::fabs(a.data()[i]);
  check_finite(out, "abs");
  if (wants_grad(tape, {&a})) {
    int sa = a.grad_slot();
    int so = tape->track(out);
    tape->push_node([sa, so, a](Tape& tp) {
      const auto& g = tp.slot_grad(so);
      auto& ga = tp.slot_grad(sa);
      for (size_t i = 0; i < ga.size(); ++i) {
        float v = a.data()[i];
        ga[i] += g[i] * (v > 0.0f ? 1.0f : (v < 0.0f ? -1.0f : 0.0f));
      }
    });
  }
  return out;
}

Tensor square(const Tensor& a, Tape* tape) {
  Tensor out = Tensor::zeros(a.shape());
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * a.data()[i];
  check_finite(out, "square");
  if (wants_grad(tape, {&a})) {
    int sa = a.grad_slot();
    int so = tape->track(out);
    tape->push_node([sa, so, a](Tape& tp) {
      const auto& g = tp.slot_grad(so);
      auto& ga = tp.slot_grad(sa);
      for (size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * 2.0f * a.data()[i];
    });
  }
  return out;
}

Tensor sqrt_val(const Tensor& a, Tape* tape) {
  Tensor out = Tensor::zeros(a.shape());
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) out.data()[i] = std::sqrt(a.data()[i]);
  check_finite(out, "sqrt");
  if (wants_grad(tape, {&a})) {
    int sa = a.grad_slot();
    int so = tape->track(out);
    tape->push_node([sa, so, out](Tape& tp) {
      const auto& g = tp.slot_grad(so);
      auto& ga = tp.slot_grad(sa);
      for (size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * 0.5f / out.data()[i];
    });
  }
  return out;
}

Tensor rsqrt_val(const Tensor& a, Tape* tape) {
  Tensor out = Tensor::zeros(a.shape());
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) out.data()[i] = 1.0f / std::sqrt(a.data()[i]);
  check_finite(out, "rsqrt");
  if (wants_grad(tape, {&a})) {
    int sa = a.grad_slot();
    int so = tape->track(out);
    tape->push_node([sa, so, out](Tape& tp) {
      const auto& g = tp.slot_grad(so);
      auto& ga = tp.slot_grad(sa);
      for (size_t i = 0; i < ga.size(); ++i) {
        float r = out.data()[i];
        ga[i] += g[i] * -0.5f * r * r * r;
      }
    });
  }
  return out;
}

Tensor detach(const Tensor& a) {
  Tensor out = a;
  return Tensor::from_data(out.shape(), std::vector<float>(a.data(), a.data() + a.numel()));
}

// ---------------------------------------------------------------------------
// structure
// ---------------------------------------------------------------------------

Tensor reshape(const Tensor& a, Shape shape, Tape* tape) {
  require(shape_numel(shape) == a.numel(), "reshape: element count mismatch");
  Tensor out = Tensor::from_data(std::move(shape),
                                 std::vector<float>(a.data(), a.data() + a.numel()));
  if (wants_grad(tape, {&a})) {
    int sa = a.grad_slot();
    int so = tape->track(out);
    tape->push_node([sa, so](Tape& tp) { axpy(tp.slot_grad(sa), tp.slot_grad(so)); });
  }
  return out;
}

Tensor concat_channels(const Tensor& a, const Tensor& b, Tape* tape) {
  require(a.ndim() == 4 && b.ndim() == 4, "concat_channels: rank-4 inputs required");
  require(a.dim(0) == b.dim(0) && a.dim(2) == b.dim(2) && a.dim(3) == b.dim(3),
          "concat_channels: N/H/W mismatch");
  const int N = a.dim(0), Ca = a.dim(1), Cb = b.dim(1), H = a.dim(2), W = a.dim(3);
  const int hw = H * W;
  Tensor out = Tensor::zeros({N, Ca + Cb, H, W});
  for (int n = 0; n < N; ++n) {
    std::memcpy(out.data() + static_cast<int64_t>(n) * (Ca + Cb) * hw,
                a.data() + static_cast<int64_t>(n) * Ca * hw, sizeof(float) * Ca * hw);
    std::memcpy(out.data() + (static_cast<int64_t>(n) * (Ca + Cb) + Ca) * hw,
                b.data() + static_cast<int64_t>(n) * Cb * hw, sizeof(float) * Cb * hw);
  }
  if (wants_grad(tape, {&a, &b})) {
    int sa = a.grad_slot(), sb = b.grad_slot();
    int so = tape->track(out);
    tape->push_node([sa, sb, so, N, Ca, Cb, hw](Tape& tp) {
      const auto& g = tp.slot_grad(so);
      if (sa >= 0) {
        auto& ga = tp.slot_grad(sa);
        for (int n = 0; n < N; ++n)
          for (int i = 0; i < Ca * hw; ++i)
            ga[static_cast<size_t>(n) * Ca * hw + i] +=
                g[static_cast<size_t>(n) * (Ca + Cb) * hw + i];
      }
      if (sb >= 0) {
        auto& gb = tp.slot_grad(sb);
        for (int n = 0; n < N; ++n)
          for (int i = 0; i < Cb * hw; ++i)
            gb[static_cast<size_t>(n) * Cb * hw + i] +=
                g[(static_cast<size_t>(n) * (Ca + Cb) + Ca) * hw + i];
      }
    });
  }
  return out;
}

Tensor slice_channels(const Tensor& a, int c_begin, int c_end, Tape* tape) {
  require(a.ndim() == 4, "slice_channels: rank-4 input required");
  const int N = a.dim(0), C = a.dim(1), H = a.dim(2), W = a.dim(3);
  require(0 <= c_begin && c_begin < c_end && c_end <= C, "slice_channels: bad channel range");
  const int Cs = c_end - c_begin, hw = H * W;
  Tensor out = Tensor::zeros({N, Cs, H, W});
  for (int n = 0; n < N; ++n)
    std::memcpy(out.data() + static_cast<int64_t>(n) * Cs * hw,
                a.data() + (static_cast<int64_t>(n) * C + c_begin) * hw,
                sizeof(float) * Cs * hw);
  if (wants_grad(tape, {&a})) {
    int sa = a.grad_slot();
    int so = tape->track(out);
    tape->push_node([sa, so, N, C, c_begin, Cs, hw](Tape& tp) {
      const auto& g = tp.slot_grad(so);
      auto& ga = tp.slot_grad(sa);
      for (int n = 0; n < N; ++n)
        for (int i = 0; i < Cs * hw; ++i)
          ga[(static_cast<size_t>(n) * C + c_begin) * hw + i] +=
              g[static_cast<size_t>(n) * Cs * hw + i];
    });
  }
  return out;
}

Tensor nchw_to_nlc(const Tensor& a, Tape* tape) {
  require(a.ndim() == 4, "nchw_to_nlc: rank-4 input required");
  const int N = a.dim(0), C = a.dim(1), H = a.dim(2), W = a.dim(3), L = H * W;
  Tensor out = Tensor::zeros({N, L, C});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      for (int l = 0; l < L; ++l)
        out.data()[(static_cast<int64_t>(n) * L + l) * C + c] =
            a.data()[(static_cast<int64_t>(n) * C + c) * L + l];
  if (wants_grad(tape, {&a})) {
    int sa = a.grad_slot();
    int so = tape->track(out);
    tape->push_node([sa, so, N, C, L](Tape& tp) {
      const auto& g = tp.slot_grad(so);
      auto& ga = tp.slot_grad(sa);
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
          for (int l = 0; l < L; ++l)
            ga[(static_cast<size_t>(n) * C + c) * L + l] +=
                g[(static_cast<size_t>(n) * L + l) * C + c];
    });
  }
  return out;
}

Tensor nlc_to_nchw(const Tensor& a, int height, int width, Tape* tape) {
  require(a.ndim() == 3, "nlc_to_nchw: rank-3 input required");
  const int N = a.dim(0), L = a.dim(1), C = a.dim(2);
  require(L == height * width, "nlc_to_nchw: L != H*W");
  Tensor out = Tensor::zeros({N, C, height, width});
  for (int n = 0; n < N; ++n)
    for (int l = 0; l < L; ++l)
      for (int c = 0; c < C; ++c)
        out.data()[(static_cast<int64_t>(n) * C + c) * L + l] =
            a.data()[(static_cast<int64_t>(n) * L + l) * C + c];
  if (wants_grad(tape, {&a})) {
    int sa = a.grad_slot();
    int so = tape->track(out);
    tape->push_node([sa, so, N, C, L](Tape& tp) {
      const auto& g = tp.slot_grad(so);
      auto& ga = tp.slot_grad(sa);
      for (int n = 0; n < N; ++n)
        for (int l = 0; l < L; ++l)
          for (int c = 0; c < C; ++c)
            ga[(static_cast<size_t>(n) * L + l) * C + c] +=
                g[(static_cast<size_t>(n) * C + c) * L + l];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

Tensor sum_all(const Tensor& a, Tape* tape) {
  double acc = 0.0;
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) acc += static_cast<double>(a.data()[i]);
  Tensor out = Tensor::scalar(static_cast<float>(acc));
  check_finite(out, "sum_all");
  if (wants_grad(tape, {&a})) {
    int sa = a.grad_slot();
    int so = tape->track(out);
    tape->push_node([sa, so](Tape& tp) {
      float g = tp.slot_grad(so)[0];
      auto& ga = tp.slot_grad(sa);
      for (auto& v : ga) v += g;
    });
  }
  return out;
}

Tensor mean_all(const Tensor& a, Tape* tape) {
  double acc = 0.0;
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) acc += static_cast<double>(a.data()[i]);
  Tensor out = Tensor::scalar(static_cast<float>(acc / static_cast<double>(n)));
  check_finite(out, "mean_all");
  if (wants_grad(tape, {&a})) {
    int sa = a.grad_slot();
    int so = tape->track(out);
    float inv = 1.0f / static_cast<float>(n);
    tape->push_node([sa, so, inv](Tape& tp) {
      float g = tp.slot_grad(so)[0] * inv;
      auto& ga = tp.slot_grad(sa);
      for (auto& v : ga) v += g;
    });
  }
  return out;
}

Tensor spatial_mean(const Tensor& a, Tape* tape) {
  require(a.ndim() == 4, "spatial_mean: rank-4 input required");
  const int N = a.dim(0), C = a.dim(1), hw = a.dim(2) * a.dim(3);
  Tensor out = Tensor::zeros({N, C});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const float* p = a.data() + (static_cast<int64_t>(n) * C + c) * hw;
      double acc = 0.0;
      for (int i = 0; i < hw; ++i) acc += static_cast<double>(p[i]);
      out.data()[n * C + c] = static_cast<float>(acc / hw);
    }
  check_finite(out, "spatial_mean");
  if (wants_grad(tape, {&a})) {
    int sa = a.grad_slot();
    int so = tape->track(out);
    float inv = 1.0f / static_cast<float>(hw);
    tape->push_node([sa, so, N, C, hw, inv](Tape& tp) {
      const auto& g = tp.slot_grad(so);
      auto& ga = tp.slot_grad(sa);
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
          float gv = g[static_cast<size_t>(n) * C + c] * inv;
          float* dst = ga.data() + (static_cast<int64_t>(n) * C + c) * hw;
          for (int i = 0; i < hw; ++i) dst[i] += gv;
        }
    });
  }
  return out;
}

Tensor sum_channels(const Tensor& a, Tape* tape) {
  require(a.ndim() == 4, "sum_channels: rank-4 input required");
  const int N = a.dim(0), C = a.dim(1), H = a.dim(2), W = a.dim(3), hw = H * W;
  Tensor out = Tensor::zeros({N, 1, H, W});
  for (int n = 0; n < N; ++n)
    for (int i = 0; i < hw; ++i) {
      double acc = 0.0;
      for (int c = 0; c < C; ++c)
        acc += static_cast<double>(a.data()[(static_cast<int64_t>(n) * C + c) * hw + i]);
      out.data()[static_cast<int64_t>(n) * hw + i] = static_cast<float>(acc);
    }
  check_finite(out, "sum_channels");
  if (wants_grad(tape, {&a})) {
    int sa = a.grad_slot();
    int so = tape->track(out);
    tape->push_node([sa, so, N, C, hw](Tape& tp) {
      const auto& g = tp.slot_grad(so);
      auto& ga = tp.slot_grad(sa);
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
          for (int i = 0; i < hw; ++i)
            ga[(static_cast<size_t>(n) * C + c) * hw + i] +=
                g[static_cast<size_t>(n) * hw + i];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// [N,C] broadcasts
// ---------------------------------------------------------------------------

namespace {

enum class NcOp { Add, Sub, Mul, Div };

Tensor nc_broadcast(const Tensor& x, const Tensor& s, NcOp kind, const char* name, Tape* tape) {
  require(x.ndim() == 4 && s.ndim() == 2, std::string(name) + ": expects [N,C,H,W] and [N,C]");
  require(x.dim(0) == s.dim(0) && x.dim(1) == s.dim(1), std::string(name) + ": N/C mismatch");
  const int N = x.dim(0), C = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor out = Tensor::zeros(x.shape());
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const float sv = s.data()[n * C + c];
      const float* src = x.data() + (static_cast<int64_t>(n) * C + c) * hw;
      float* dst = out.data() + (static_cast<int64_t>(n) * C + c) * hw;
      switch (kind) {
        case NcOp::Add:
          for (int i = 0; i < hw; ++i) dst[i] = src[i] + sv;
          break;
        case NcOp::Sub:
          for (int i = 0; i < hw; ++i) dst[i] = src[i] - sv;
          break;
        case NcOp::Mul:
          for (int i = 0; i < hw; ++i) dst[i] = src[i] * sv;
          break;
        case NcOp::Div:
          for (int i = 0; i < hw; ++i) dst[i] = src[i] / sv;
          break;
      }
    }
  check_finite(out, name);
  if (wants_grad(tape, {&x, &s})) {
    int sx = x.grad_slot(), ss = s.grad_slot();
    int so = tape->track(out);
    tape->push_node([sx, ss, so, N, C, hw, kind, x, s](Tape& tp) {
      const auto& g = tp.slot_grad(so);
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
          const size_t base = (static_cast<size_t>(n) * C + c) * hw;
          const float sv = s.data()[n * C + c];
          if (sx >= 0) {
            auto& gx = tp.slot_grad(sx);
            switch (kind) {
              case NcOp::Add:
              case NcOp::Sub:
                for (int i = 0; i < hw; ++i) gx[base + i] += g[base + i];
                break;
              case NcOp::Mul:
                for (int i = 0; i < hw; ++i) gx[base + i] += g[base + i] * sv;
                break;
              case NcOp::Div:
                for (int i = 0; i < hw; ++i) gx[base + i] += g[base + i] / sv;
                break;
            }
          }
          if (ss >= 0) {
            auto& gs = tp.slot_grad(ss);
            double acc = 0.0;
            switch (kind) {
              case NcOp::Add:
                for (int i = 0; i < hw; ++i) acc += g[base + i];
                break;
              case NcOp::Sub:
                for (int i = 0; i < hw; ++i) acc -= g[base + i];
                break;
              case NcOp::Mul:
                for (int i = 0; i < hw; ++i)
                  acc += static_cast<double>(g[base + i]) * x.data()[base + i];
                break;
              case NcOp::Div:
                for (int i = 0; i < hw; ++i)
                  acc -= static_cast<double>(g[base + i]) * x.data()[base + i] / (sv * sv);
                break;
            }
            gs[static_cast<size_t>(n) * C + c] += static_cast<float>(acc);
          }
        }
    });
  }
  return out;
}

}  // namespace

Tensor add_nc(const Tensor& x, const Tensor& s, Tape* tape) {
  return nc_broadcast(x, s, NcOp::Add, "add_nc", tape);
}
Tensor sub_nc(const Tensor& x, const Tensor& s, Tape* tape) {
  return nc_broadcast(x, s, NcOp::Sub, "sub_nc", tape);
}
Tensor mul_nc(const Tensor& x, const Tensor& s, Tape* tape) {
  return nc_broadcast(x, s, NcOp::Mul, "mul_nc", tape);
}
Tensor div_nc(const Tensor& x, const Tensor& s, Tape* tape) {
  return nc_broadcast(x, s, NcOp::Div, "div_nc", tape);
}

Tensor mul_n1hw(const Tensor& x, const Tensor& m, Tape* tape) {
  require(x.ndim() == 4 && m.ndim() == 4 && m.dim(1) == 1, "mul_n1hw: expects [N,C,H,W], [N,1,H,W]");
  require(x.dim(0) == m.dim(0) && x.dim(2) == m.dim(2) && x.dim(3) == m.dim(3),
          "mul_n1hw: N/H/W mismatch");
  const int N = x.dim(0), C = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor out = Tensor::zeros(x.shape());
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const float* mp = m.data() + static_cast<int64_t>(n) * hw;
      const float* xp = x.data() + (static_cast<int64_t>(n) * C + c) * hw;
      float* op = out.data() + (static_cast<int64_t>(n) * C + c) * hw;
      for (int i = 0; i < hw; ++i) op[i] = xp[i] * mp[i];
    }
  check_finite(out, "mul_n1hw");
  if (wants_grad(tape, {&x, &m})) {
    int sx = x.grad_slot(), sm = m.grad_slot();
    int so = tape->track(out);
    tape->push_node([sx, sm, so, N, C, hw, x, m](Tape& tp) {
      const auto& g = tp.slot_grad(so);
      for (int n = 0; n < N; ++n) {
        const size_t mbase = static_cast<size_t>(n) * hw;
        for (int c = 0; c < C; ++c) {
          const size_t base = (static_cast<size_t>(n) * C + c) * hw;
          if (sx >= 0) {
            auto& gx = tp.slot_grad(sx);
            for (int i = 0; i < hw; ++i) gx[base + i] += g[base + i] * m.data()[mbase + i];
          }
          if (sm >= 0) {
            auto& gm = tp.slot_grad(sm);
            for (int i = 0; i < hw; ++i) gm[mbase + i] += g[base + i] * x.data()[base + i];
          }
        }
      }
    });
  }
  return out;
}

Tensor add_bcast_batch(const Tensor& x, const Tensor& b, Tape* tape) {
  require(x.ndim() == b.ndim() + 1, "add_bcast_batch: rank mismatch");
  for (int i = 0; i < b.ndim(); ++i)
    require(x.dim(i + 1) == b.dim(i), "add_bcast_batch: trailing shape mismatch");
  const int N = x.dim(0);
  const int64_t inner = b.numel();
  Tensor out = Tensor::zeros(x.shape());
  for (int n = 0; n < N; ++n)
    for (int64_t i = 0; i < inner; ++i)
      out.data()[n * inner + i] = x.data()[n * inner + i] + b.data()[i];
  check_finite(out, "add_bcast_batch");
  if (wants_grad(tape, {&x, &b})) {
    int sx = x.grad_slot(), sb = b.grad_slot();
    int so = tape->track(out);
    tape->push_node([sx, sb, so, N, inner](Tape& tp) {
      const auto& g = tp.slot_grad(so);
      if (sx >= 0) axpy(tp.slot_grad(sx), g);
      if (sb >= 0) {
        auto& gb = tp.slot_grad(sb);
        for (int n = 0; n < N; ++n)
          for (int64_t i = 0; i < inner; ++i) gb[i] += g[n * inner + i];
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b, Tape* tape) {
  require(a.ndim() == 2 && b.ndim() == 2, "matmul: rank-2 inputs required");
  const int M = a.dim(0), K = a.dim(1), K2 = b.dim(0), N = b.dim(1);
  require(K == K2, "matmul: inner dimension mismatch");
  Tensor out = Tensor::zeros({M, N});
  CMapRM A(a.data(), M, K), B(b.data(), K, N);
  MapRM O(out.data(), M, N);
  O.noalias() = A * B;
  check_finite(out, "matmul");
  if (wants_grad(tape, {&a, &b})) {
    int sa = a.grad_slot(), sb = b.grad_slot();
    int so = tape->track(out);
    tape->push_node([sa, sb, so, a, b, M, K, N](Tape& tp) {
      CMapRM G(tp.slot_grad(so).data(), M, N);
      if (sa >= 0) {
        MapRM GA(tp.slot_grad(sa).data(), M, K);
        CMapRM B(b.data(), K, N);
        GA.noalias() += G * B.transpose();
      }
      if (sb >= 0) {
        MapRM GB(tp.slot_grad(sb).data(), K, N);
        CMapRM A(a.data(), M, K);
        GB.noalias() += A.transpose() * G;
      }
    });
  }
  return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b, Tape* tape) {
  require(x.ndim() >= 1 && w.ndim() == 2, "linear: bad ranks");
  const int D = x.dim(x.ndim() - 1);
  require(D == w.dim(0), "linear: feature dimension mismatch");
  const int E = w.dim(1);
  const int M = static_cast<int>(x.numel() / D);
  if (b.defined()) require(b.ndim() == 1 && b.dim(0) == E, "linear: bias shape mismatch");

  Shape out_shape = x.shape();
  out_shape.back() = E;
  Tensor out = Tensor::zeros(out_shape);
  CMapRM X(x.data(), M, D), W(w.data(), D, E);
  MapRM O(out.data(), M, E);
  O.noalias() = X * W;
  if (b.defined()) {
    Eigen::Map<const Eigen::RowVectorXf> bias(b.data(), E);
    O.rowwise() += bias;
  }
  check_finite(out, "linear");
  if (wants_grad(tape, {&x, &w, &b})) {
    int sx = x.grad_slot(), sw = w.grad_slot();
    int sb = b.defined() ? b.grad_slot() : -1;
    int so = tape->track(out);
    tape->push_node([sx, sw, sb, so, x, w, M, D, E](Tape& tp) {
      CMapRM G(tp.slot_grad(so).data(), M, E);
      if (sx >= 0) {
        MapRM GX(tp.slot_grad(sx).data(), M, D);
        CMapRM W(w.data(), D, E);
        GX.noalias() += G * W.transpose();
      }
      if (sw >= 0) {
        MapRM GW(tp.slot_grad(sw).data(), D, E);
        CMapRM X(x.data(), M, D);
        GW.noalias() += X.transpose() * G;
      }
      if (sb >= 0) {
        auto& gb = tp.slot_grad(sb);
        Eigen::Map<Eigen::RowVectorXf> GB(gb.data(), E);
        GB += G.colwise().sum();
      }
    });
  }
  return out;
}

Tensor bmm(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b, Tape* tape) {
  require(a.ndim() == 3 && b.ndim() == 3, "bmm: rank-3 inputs required");
  require(a.dim(0) == b.dim(0), "bmm: batch mismatch");
  const int B = a.dim(0);
  const int M = trans_a ? a.dim(2) : a.dim(1);
  const int K = trans_a ? a.dim(1) : a.dim(2);
  const int Kb = trans_b ? b.dim(2) : b.dim(1);
  const int N = trans_b ? b.dim(1) : b.dim(2);
  require(K == Kb, "bmm: inner dimension mismatch");
  Tensor out = Tensor::zeros({B, M, N});
  const int64_t sa_sz = static_cast<int64_t>(a.dim(1)) * a.dim(2);
  const int64_t sb_sz = static_cast<int64_t>(b.dim(1)) * b.dim(2);
  for (int i = 0; i < B; ++i) {
    CMapRM A(a.data() + i * sa_sz, a.dim(1), a.dim(2));
    CMapRM Bm(b.data() + i * sb_sz, b.dim(1), b.dim(2));
    MapRM O(out.data() + static_cast<int64_t>(i) * M * N, M, N);
    RowMat Ae = trans_a ? RowMat(A.transpose()) : RowMat(A);
    RowMat Be = trans_b ? RowMat(Bm.transpose()) : RowMat(Bm);
    O.noalias() = Ae * Be;
  }
  check_finite(out, "bmm");
  if (wants_grad(tape, {&a, &b})) {
    int sa = a.grad_slot(), sb = b.grad_slot();
    int so = tape->track(out);
    tape->push_node([=](Tape& tp) {
      for (int i = 0; i < B; ++i) {
        CMapRM G(tp.slot_grad(so).data() + static_cast<int64_t>(i) * M * N, M, N);
        CMapRM A(a.data() + i * sa_sz, a.dim(1), a.dim(2));
        CMapRM Bm(b.data() + i * sb_sz, b.dim(1), b.dim(2));
        RowMat Ae = trans_a ? RowMat(A.transpose()) : RowMat(A);
        RowMat Be = trans_b ? RowMat(Bm.transpose()) : RowMat(Bm);
        if (sa >= 0) {
          MapRM GA(tp.slot_grad(sa).data() + i * sa_sz, a.dim(1), a.dim(2));
          RowMat dAe = G * Be.transpose();  // [M,K]
          if (trans_a)
            GA.noalias() += dAe.transpose();
          else
            GA.noalias() += dAe;
        }
        if (sb >= 0) {
          MapRM GB(tp.slot_grad(sb).data() + i * sb_sz, b.dim(1), b.dim(2));
          RowMat dBe = Ae.transpose() * G;  // [K,N]
          if (trans_b)
            GB.noalias() += dBe.transpose();
          else
            GB.noalias() += dBe;
        }
      }
    });
  }
  return out;
}

Tensor softmax_last(const Tensor& a, Tape* tape) {
  require(a.ndim() >= 1, "softmax_last: empty shape");
  const int L = a.dim(a.ndim() - 1);
  const int64_t rows = a.numel() / L;
  Tensor out = Tensor::zeros(a.shape());
  for (int64_t r = 0; r < rows; ++r) {
    const float* src = a.data() + r * L;
    float* dst = out.data() + r * L;
    float mx = src[0];
    for (int i = 1; i < L; ++i) mx = std::max(mx, src[i]);
    double denom = 0.0;
    for (int i = 0; i < L; ++i) denom += std::exp(static_cast<double>(src[i] - mx));
    for (int i = 0; i < L; ++i)
      dst[i] = static_cast<float>(std::exp(static_cast<double>(src[i] - mx)) / denom);
  }
  check_finite(out, "softmax");
  if (wants_grad(tape, {&a})) {
    int sa = a.grad_slot();
    int so = tape->track(out);
    tape->push_node([sa, so, out, rows, L](Tape& tp) {
      const auto& g = tp.slot_grad(so);
      auto& ga = tp.slot_grad(sa);
      for (int64_t r = 0; r < rows; ++r) {
        const float* y = out.data() + r * L;
        const float* gy = g.data() + r * L;
        double dot = 0.0;
        for (int i = 0; i < L; ++i) dot += static_cast<double>(gy[i]) * y[i];
        for (int i = 0; i < L; ++i)
          ga[r * L + i] += y[i] * (gy[i] - static_cast<float>(dot));
      }
    });
  }
  return out;
}

Tensor cross_entropy_indices(const Tensor& logits, const std::vector<int>& targets, Tape* tape) {
  require(logits.ndim() == 2, "cross_entropy: rank-2 logits required");
  const int P = logits.dim(0), K = logits.dim(1);
  require(static_cast<int>(targets.size()) == P, "cross_entropy: target count mismatch");
  double total = 0.0;
  for (int p = 0; p < P; ++p) {
    require(targets[p] >= 0 && targets[p] < K, "cross_entropy: target out of range");
    const float* row = logits.data() + static_cast<int64_t>(p) * K;
    float mx = row[0];
    for (int i = 1; i < K; ++i) mx = std::max(mx, row[i]);
    double denom = 0.0;
    for (int i = 0; i < K; ++i) denom += std::exp(static_cast<double>(row[i] - mx));
    total += std::log(denom) - static_cast<double>(row[targets[p]] - mx);
  }
  Tensor out = Tensor::scalar(static_cast<float>(total / P));
  check_finite(out, "cross_entropy");
  if (wants_grad(tape, {&logits})) {
    int sl = logits.grad_slot();
    int so = tape->track(out);
    tape->push_node([sl, so, logits, targets, P, K](Tape& tp) {
      float g = tp.slot_grad(so)[0] / static_cast<float>(P);
      auto& gl = tp.slot_grad(sl);
      for (int p = 0; p < P; ++p) {
        const float* row = logits.data() + static_cast<int64_t>(p) * K;
        float mx = row[0];
        for (int i = 1; i < K; ++i) mx = std::max(mx, row[i]);
        double denom = 0.0;
        for (int i = 0; i < K; ++i) denom += std::exp(static_cast<double>(row[i] - mx));
        for (int i = 0; i < K; ++i) {
          float soft = static_cast<float>(std::exp(static_cast<double>(row[i] - mx)) / denom);
          gl[static_cast<size_t>(p) * K + i] +=
              g * (soft - (i == targets[p] ? 1.0f : 0.0f));
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// convolution & sampling
// ---------------------------------------------------------------------------

namespace {

void im2col(const float* x, int C, int H, int W, int kh, int kw, int stride, int pad, int OH,
            int OW, float* cols) {
  const int ohw = OH * OW;
  for (int c = 0; c < C; ++c)
    for (int i = 0; i < kh; ++i)
      for (int j = 0; j < kw; ++j) {
        float* dst = cols + (static_cast<int64_t>((c * kh + i) * kw + j)) * ohw;
        for (int oy = 0; oy < OH; ++oy) {
          const int iy = oy * stride + i - pad;
          float* drow = dst + oy * OW;
          if (iy < 0 || iy >= H) {
            std::fill(drow, drow + OW, 0.0f);
            continue;
          }
          const float* src = x + (static_cast<int64_t>(c) * H + iy) * W;
          for (int ox = 0; ox < OW; ++ox) {
            const int ix = ox * stride + j - pad;
            drow[ox] = (ix >= 0 && ix < W) ? src[ix] : 0.0f;
          }
        }
      }
}

void col2im_add(const float* cols, int C, int H, int W, int kh, int kw, int stride, int pad,
                int OH, int OW, float* x) {
  const int ohw = OH * OW;
  for (int c = 0; c < C; ++c)
    for (int i = 0; i < kh; ++i)
      for (int j = 0; j < kw; ++j) {
        const float* src = cols + (static_cast<int64_t>((c * kh + i) * kw + j)) * ohw;
        for (int oy = 0; oy < OH; ++oy) {
          const int iy = oy * stride + i - pad;
          if (iy < 0 || iy >= H) continue;
          float* drow = x + (static_cast<int64_t>(c) * H + iy) * W;
          const float* srow = src + oy * OW;
          for (int ox = 0; ox < OW; ++ox) {
            const int ix = ox * stride + j - pad;
            if (ix >= 0 && ix < W) drow[ix] += srow[ox];
          }
        }
      }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
              int padding, Tape* tape) {
  require(input.ndim() == 4, "conv2d: rank-4 input required");
  require(weight.ndim() == 4, "conv2d: rank-4 weight required");
  const int N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const int O = weight.dim(0), Cw = weight.dim(1), kh = weight.dim(2), kw = weight.dim(3);
  require(C == Cw, "conv2d: channel mismatch");
  require(kh % 2 == 1 && kw % 2 == 1, "conv2d: kernel extents must be odd");
  require(padding >= 0 && stride >= 1, "conv2d: bad stride/padding");
  const int hs = H + 2 * padding - kh;
  const int ws = W + 2 * padding - kw;
  require(hs >= 0 && ws >= 0 && hs % stride == 0 && ws % stride == 0,
          "conv2d: non-exact output size");
  const int OH = hs / stride + 1, OW = ws / stride + 1, ohw = OH * OW;
  if (bias.defined()) require(bias.ndim() == 1 && bias.dim(0) == O, "conv2d: bias shape mismatch");

  const int ckk = C * kh * kw;
  Tensor out = Tensor::zeros({N, O, OH, OW});
  std::vector<float> cols(static_cast<size_t>(ckk) * ohw);
  CMapRM Wm(weight.data(), O, ckk);
  for (int n = 0; n < N; ++n) {
    im2col(input.data() + static_cast<int64_t>(n) * C * H * W, C, H, W, kh, kw, stride, padding,
           OH, OW, cols.data());
    CMapRM Cm(cols.data(), ckk, ohw);
    MapRM Om(out.data() + static_cast<int64_t>(n) * O * ohw, O, ohw);
    Om.noalias() = Wm * Cm;
    if (bias.defined()) Om.colwise() += Eigen::Map<const Eigen::VectorXf>(bias.data(), O);
  }
  check_finite(out, "conv2d");

  if (wants_grad(tape, {&input, &weight, &bias})) {
    int si = input.grad_slot(), sw = weight.grad_slot();
    int sb = bias.defined() ? bias.grad_slot() : -1;
    int so = tape->track(out);
    tape->push_node([=](Tape& tp) {
      std::vector<float> cols(static_cast<size_t>(ckk) * ohw);
      std::vector<float> gcols;
      CMapRM Wm(weight.data(), O, ckk);
      for (int n = 0; n < N; ++n) {
        CMapRM G(tp.slot_grad(so).data() + static_cast<int64_t>(n) * O * ohw, O, ohw);
        if (si >= 0) {
          gcols.assign(static_cast<size_t>(ckk) * ohw, 0.0f);
          MapRM GC(gcols.data(), ckk, ohw);
          GC.noalias() = Wm.transpose() * G;
          col2im_add(gcols.data(), C, H, W, kh, kw, stride, padding, OH, OW,
                     tp.slot_grad(si).data() + static_cast<int64_t>(n) * C * H * W);
        }
        if (sw >= 0) {
          im2col(input.data() + static_cast<int64_t>(n) * C * H * W, C, H, W, kh, kw, stride,
                 padding, OH, OW, cols.data());
          CMapRM Cm(cols.data(), ckk, ohw);
          MapRM GW(tp.slot_grad(sw).data(), O, ckk);
          GW.noalias() += G * Cm.transpose();
        }
        if (sb >= 0) {
          Eigen::Map<Eigen::VectorXf> GB(tp.slot_grad(sb).data(), O);
          GB += G.rowwise().sum();
        }
      }
    });
  }
  return out;
}

Tensor upsample_nearest2(const Tensor& a, Tape* tape) {
  require(a.ndim() == 4, "upsample_nearest2: rank-4 input required");
  const int N = a.dim(0), C = a.dim(1), H = a.dim(2), W = a.dim(3);
  Tensor out = Tensor::zeros({N, C, 2 * H, 2 * W});
  for (int nc = 0; nc < N * C; ++nc) {
    const float* src = a.data() + static_cast<int64_t>(nc) * H * W;
    float* dst = out.data() + static_cast<int64_t>(nc) * 4 * H * W;
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const float v = src[y * W + x];
        float* d = dst + (2 * y) * (2 * W) + 2 * x;
        d[0] = v;
        d[1] = v;
        d[2 * W] = v;
        d[2 * W + 1] = v;
      }
  }
  if (wants_grad(tape, {&a})) {
    int sa = a.grad_slot();
    int so = tape->track(out);
    tape->push_node([sa, so, N, C, H, W](Tape& tp) {
      const auto& g = tp.slot_grad(so);
      auto& ga = tp.slot_grad(sa);
      for (int nc = 0; nc < N * C; ++nc) {
        const float* gs = g.data() + static_cast<int64_t>(nc) * 4 * H * W;
        float* gd = ga.data() + static_cast<int64_t>(nc) * H * W;
        for (int y = 0; y < H; ++y)
          for (int x = 0; x < W; ++x) {
            const float* s = gs + (2 * y) * (2 * W) + 2 * x;
            gd[y * W + x] += s[0] + s[1] + s[2 * W] + s[2 * W + 1];
          }
      }
    });
  }
  return out;
}

Tensor avgpool2(const Tensor& a, Tape* tape) {
  require(a.ndim() == 4, "avgpool2: rank-4 input required");
  const int N = a.dim(0), C = a.dim(1), H = a.dim(2), W = a.dim(3);
  require(H % 2 == 0 && W % 2 == 0, "avgpool2: H and W must be even");
  const int OH = H / 2, OW = W / 2;
  Tensor out = Tensor::zeros({N, C, OH, OW});
  for (int nc = 0; nc < N * C; ++nc) {
    const float* src = a.data() + static_cast<int64_t>(nc) * H * W;
    float* dst = out.data() + static_cast<int64_t>(nc) * OH * OW;
    for (int y = 0; y < OH; ++y)
      for (int x = 0; x < OW; ++x)
        dst[y * OW + x] = 0.25f * (src[(2 * y) * W + 2 * x] + src[(2 * y) * W + 2 * x + 1] +
                                   src[(2 * y + 1) * W + 2 * x] +
                                   src[(2 * y + 1) * W + 2 * x + 1]);
  }
  if (wants_grad(tape, {&a})) {
    int sa = a.grad_slot();
    int so = tape->track(out);
    tape->push_node([sa, so, N, C, H, W, OH, OW](Tape& tp) {
      const auto& g = tp.slot_grad(so);
      auto& ga = tp.slot_grad(sa);
      for (int nc = 0; nc < N * C; ++nc) {
        const float* gs = g.data() + static_cast<int64_t>(nc) * OH * OW;
        float* gd = ga.data() + static_cast<int64_t>(nc) * H * W;
        for (int y = 0; y < OH; ++y)
          for (int x = 0; x < OW; ++x) {
            const float v = 0.25f * gs[y * OW + x];
            gd[(2 * y) * W + 2 * x] += v;
            gd[(2 * y) * W + 2 * x + 1] += v;
            gd[(2 * y + 1) * W + 2 * x] += v;
            gd[(2 * y + 1) * W + 2 * x + 1] += v;
          }
      }
    });
  }
  return out;
}

Tensor bilinear_sample(const Tensor& input, const Tensor& coords, Tape* tape) {
  require(input.ndim() == 4, "bilinear_sample: rank-4 input required");
  require(coords.ndim() == 4 && coords.dim(1) == 2, "bilinear_sample: coords must be [N,2,H,W]");
  require(input.dim(0) == coords.dim(0), "bilinear_sample: batch mismatch");
  const int N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const int OH = coords.dim(2), OW = coords.dim(3), ohw = OH * OW;
  Tensor out = Tensor::zeros({N, C, OH, OW});

  for (int n = 0; n < N; ++n) {
    const float* cy = coords.data() + static_cast<int64_t>(n) * 2 * ohw;
    const float* cx = cy + ohw;
    for (int p = 0; p < ohw; ++p) {
      float y = std::min(std::max(cy[p], 0.0f), static_cast<float>(H - 1));
      float x = std::min(std::max(cx[p], 0.0f), static_cast<float>(W - 1));
      const int y0 = static_cast<int>(y);
      const int x0 = static_cast<int>(x);
      const int y1 = std::min(y0 + 1, H - 1);
      const int x1 = std::min(x0 + 1, W - 1);
      const float fy = y - static_cast<float>(y0);
      const float fx = x - static_cast<float>(x0);
      for (int c = 0; c < C; ++c) {
        const float* plane = input.data() + (static_cast<int64_t>(n) * C + c) * H * W;
        const float v00 = plane[y0 * W + x0], v01 = plane[y0 * W + x1];
        const float v10 = plane[y1 * W + x0], v11 = plane[y1 * W + x1];
        out.data()[(static_cast<int64_t>(n) * C + c) * ohw + p] =
            v00 * (1.0f - fy) * (1.0f - fx) + v01 * (1.0f - fy) * fx + v10 * fy * (1.0f - fx) +
            v11 * fy * fx;
      }
    }
  }
  check_finite(out, "bilinear_sample");

  if (wants_grad(tape, {&input, &coords})) {
    int si = input.grad_slot(), sc = coords.grad_slot();
    int so = tape->track(out);
    tape->push_node([=](Tape& tp) {
      const auto& g = tp.slot_grad(so);
      for (int n = 0; n < N; ++n) {
        const float* cy = coords.data() + static_cast<int64_t>(n) * 2 * ohw;
        const float* cx = cy + ohw;
        for (int p = 0; p < ohw; ++p) {
          const float yr = cy[p], xr = cx[p];
          float y = std::min(std::max(yr, 0.0f), static_cast<float>(H - 1));
          float x = std::min(std::max(xr, 0.0f), static_cast<float>(W - 1));
          const int y0 = static_cast<int>(y);
          const int x0 = static_cast<int>(x);
          const int y1 = std::min(y0 + 1, H - 1);
          const int x1 = std::min(x0 + 1, W - 1);
          const float fy = y - static_cast<float>(y0);
          const float fx = x - static_cast<float>(x0);
          const bool y_inside = yr > 0.0f && yr < static_cast<float>(H - 1);
          const bool x_inside = xr > 0.0f && xr < static_cast<float>(W - 1);
          double dy_acc = 0.0, dx_acc = 0.0;
          for (int c = 0; c < C; ++c) {
            const float gv = g[(static_cast<size_t>(n) * C + c) * ohw + p];
            const int64_t pbase = (static_cast<int64_t>(n) * C + c) * H * W;
            if (si >= 0) {
              auto& gi = tp.slot_grad(si);
              gi[pbase + y0 * W + x0] += gv * (1.0f - fy) * (1.0f - fx);
              gi[pbase + y0 * W + x1] += gv * (1.0f - fy) * fx;
              gi[pbase + y1 * W + x0] += gv * fy * (1.0f - fx);
              gi[pbase + y1 * W + x1] += gv * fy * fx;
            }
            if (sc >= 0) {
              const float* plane = input.data() + pbase;
              const float v00 = plane[y0 * W + x0], v01 = plane[y0 * W + x1];
              const float v10 = plane[y1 * W + x0], v11 = plane[y1 * W + x1];
              dy_acc += static_cast<double>(gv) *
                        ((v10 - v00) * (1.0f - fx) + (v11 - v01) * fx);
              dx_acc += static_cast<double>(gv) *
                        ((v01 - v00) * (1.0f - fy) + (v11 - v10) * fy);
            }
          }
          if (sc >= 0) {
            auto& gc = tp.slot_grad(sc);
            if (y_inside) gc[static_cast<size_t>(n) * 2 * ohw + p] += static_cast<float>(dy_acc);
            if (x_inside)
              gc[static_cast<size_t>(n) * 2 * ohw + ohw + p] += static_cast<float>(dx_acc);
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// composites
// ---------------------------------------------------------------------------

Tensor l1_loss(const Tensor& a, const Tensor& b, Tape* tape) {
  return mean_all(abs_val(sub(a, b, tape), tape), tape);
}

Tensor mse_loss(const Tensor& a, const Tensor& b, Tape* tape) {
  return mean_all(square(sub(a, b, tape), tape), tape);
}

std::pair<Tensor, Tensor> instance_stats(const Tensor& x, float eps, Tape* tape) {
  require(x.ndim() == 4, "instance_stats: rank-4 input required");
  Tensor mean = spatial_mean(x, tape);
  Tensor centered = sub_nc(x, mean, tape);
  Tensor var = spatial_mean(square(centered, tape), tape);
  Tensor stddev = sqrt_val(add_scalar(var, eps, tape), tape);
  return {mean, stddev};
}

}  // namespace hdrvq::ops
