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

#include "tensor.hpp"

#include <cmath>
#include <sstream>

namespace hdrvq {

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << ",";
    os << s[i];
  }
  os << "]";
  return os.str();
}

Tensor Tensor::zeros(Shape shape) {
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::make_shared<std::vector<float>>(shape_numel(t.shape_), 0.0f);
  return t;
}

Tensor Tensor::full(Shape shape, float value) {
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::make_shared<std::vector<float>>(shape_numel(t.shape_), value);
  return t;
}

Tensor Tensor::from_data(Shape shape, std::vector<float> data) {
  if (shape_numel(shape) != static_cast<int64_t>(data.size()))
    throw ShapeError("from_data: shape " + shape_str(shape) + " does not match " +
                     std::to_string(data.size()) + " elements");
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::make_shared<std::vector<float>>(std::move(data));
  return t;
}

Tensor Tensor::scalar(float value) { return full({1}, value); }

float Tensor::item() const {
  if (numel() != 1) throw ShapeError("item(): tensor has " + std::to_string(numel()) + " elements");
  return (*data_)[0];
}

Tensor Tensor::clone() const {
  Tensor t;
  t.shape_ = shape_;
  if (data_) t.data_ = std::make_shared<std::vector<float>>(*data_);
  return t;
}

Tensor Tape::watch(const Tensor& t) {
  Tensor alias = t;
  alias.grad_slot_ = -1;
  track(alias);
  return alias;
}

int Tape::track(Tensor& t) {
  Slot slot;
  slot.shape = t.shape();
  slots_.push_back(std::move(slot));
  t.grad_slot_ = static_cast<int>(slots_.size()) - 1;
  return t.grad_slot_;
}

std::vector<float>& Tape::slot_grad(int slot) {
  Slot& s = slots_[static_cast<size_t>(slot)];
  if (s.grad.empty()) s.grad.assign(static_cast<size_t>(shape_numel(s.shape)), 0.0f);
  return s.grad;
}

void Tape::push_node(std::function<void(Tape&)> backward_fn) {
  nodes_.push_back(std::move(backward_fn));
}

void Tape::backward(const Tensor& loss) {
  if (ran_) throw TapeError("backward() called twice on the same tape");
  if (loss.numel() != 1) throw TapeError("backward() requires a scalar loss");
  if (!loss.tracked()) throw TapeError("backward() on a detached tensor");
  ran_ = true;
  slot_grad(loss.grad_slot())[0] = 1.0f;
  for (size_t i = nodes_.size(); i-- > 0;) nodes_[i](*this);
}

Tensor Tape::grad(const Tensor& t) const {
  if (!t.tracked()) throw TapeError("grad() of an untracked tensor");
  const Slot& s = slots_[static_cast<size_t>(t.grad_slot())];
  if (s.grad.empty()) return Tensor::zeros(s.shape);
  return Tensor::from_data(s.shape, s.grad);
}

bool Tape::has_grad(const Tensor& t) const {
  if (!t.tracked()) return false;
  return !slots_[static_cast<size_t>(t.grad_slot())].grad.empty();
}

void check_finite(const Tensor& t, const char* op_name) {
  const float* p = t.data();
  const int64_t n = t.numel();
  for (int64_t i = 0; i < n; ++i) {
    if (!std::isfinite(p[i]))
      throw NonFiniteError(std::string(op_name) + ": non-finite value at flat index " +
                           std::to_string(i));
  }
}

}  // namespace hdrvq
