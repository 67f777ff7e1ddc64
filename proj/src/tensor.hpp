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

#ifndef HDRVQ_TENSOR_H
#define HDRVQ_TENSOR_H

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace hdrvq {

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error(what) {}
};

// Raised when a forward op produces NaN/Inf. Non-finite values are never
// propagated silently.
class NonFiniteError : public Error {
 public:
  explicit NonFiniteError(const std::string& what) : Error(what) {}
};

class TapeError : public Error {
 public:
  explicit TapeError(const std::string& what) : Error(what) {}
};

using Shape = std::vector<int>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

// Dense row-major float32 tensor. Copies share the underlying buffer; ops
// always allocate fresh outputs, so shared buffers are never mutated except
// by the optimizer between steps.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, float value);
  static Tensor from_data(Shape shape, std::vector<float> data);
  static Tensor scalar(float value);

  bool defined() const { return static_cast<bool>(data_); }
  const Shape& shape() const { return shape_; }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int64_t numel() const { return data_ ? static_cast<int64_t>(data_->size()) : 0; }

  float* data() { return data_->data(); }
  const float* data() const { return data_->data(); }
  float item() const;

  // Deep copy with no tape association.
  Tensor clone() const;

  int grad_slot() const { return grad_slot_; }
  bool tracked() const { return grad_slot_ >= 0; }

 private:
  friend class Tape;
  Shape shape_;
  std::shared_ptr<std::vector<float>> data_;
  int grad_slot_ = -1;
};

// Records differentiable ops for one forward pass. Single-threaded by
// contract; independent tapes may live on independent threads.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Marks a leaf whose gradient should be accumulated. Returns a tracked
  // alias of `t` sharing the same buffer.
  Tensor watch(const Tensor& t);

  // Runs reverse-mode accumulation from a scalar loss. Visits ops in exact
  // reverse execution order. Calling twice without a fresh tape is an error.
  void backward(const Tensor& loss);

  // Gradient of a tracked tensor after backward().
  Tensor grad(const Tensor& t) const;
  bool has_grad(const Tensor& t) const;

  // --- plumbing used by ops ---
  int track(Tensor& t);
  std::vector<float>& slot_grad(int slot);
  void push_node(std::function<void(Tape&)> backward_fn);
  size_t num_nodes() const { return nodes_.size(); }

 private:
  struct Slot {
    Shape shape;
    std::vector<float> grad;  // lazily zero-initialized
  };
  std::vector<Slot> slots_;
  std::vector<std::function<void(Tape&)>> nodes_;
  bool ran_ = false;
};

// Throws NonFiniteError if any element of `t` is NaN or Inf.
void check_finite(const Tensor& t, const char* op_name);

}  // namespace hdrvq

#endif  // HDRVQ_TENSOR_H
