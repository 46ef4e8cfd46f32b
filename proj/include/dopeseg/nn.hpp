// Copyright 2026 The DopeSeg Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Minimal reverse-mode autodiff over NCHW float tensors.
//
// Every op returns a Var (shared node). When gradient recording is enabled
// and any input requires a gradient, the node keeps its inputs and a
// backward closure; otherwise intermediates are released as soon as the
// caller drops them. Recording is a per-thread switch, so independent
// training runs may share a process.

#pragma once

#include <cstddef>
#include <functional>
#include <new>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace dopeseg::nn {

/// Cache-line aligned allocation. Vectorised reductions peel a different
/// number of leading elements depending on the address, which changes the
/// rounding; a fixed alignment keeps repeated runs bit-identical.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlign); }
  template <class U>
  friend bool operator==(const AlignedAllocator&, const AlignedAllocator<U>&) {
    return true;
  }
};

using Buffer = std::vector<float, AlignedAllocator<float>>;

struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  friend bool operator==(const Shape&, const Shape&) = default;
};

std::string to_string(const Shape& s);

struct Tensor {
  Shape shape;
  Buffer data;

  Tensor() = default;
  explicit Tensor(Shape s, float fill = 0.0f) : shape(s), data(s.numel(), fill) {}

  float* sample(int n) { return data.data() + n * shape.c * shape.plane(); }
  const float* sample(int n) const {
    return data.data() + n * shape.c * shape.plane();
  }
  float* channel(int n, int c) {
    return data.data() + (static_cast<std::size_t>(n) * shape.c + c) * shape.plane();
  }
  const float* channel(int n, int c) const {
    return data.data() + (static_cast<std::size_t>(n) * shape.c + c) * shape.plane();
  }
};

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
  Tensor value;
  Buffer grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<Var> inputs;
  std::function<void(Node&)> backward;

  /// Gradient buffer, zero-initialised on first use.
  float* grad_buffer();
  void zero_grad() { grad.clear(); }
};

bool grad_enabled();

/// Disables recording for the current thread within its scope.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

Var constant(Tensor t);
Var parameter(Tensor t);

/// Running statistics owned by a model and updated by training-mode
/// batch normalisation.
struct BatchNormStats {
  std::vector<float> mean;
  std::vector<float> var;
  float momentum = 0.1f;
  float eps = 1e-5f;
};

/// Same-padded, stride-1 convolution. Weight shape is (Cout, Cin, k, k) with
/// k odd; `bias` may be null.
Var conv2d(const Var& x, const Var& weight, const Var& bias);
Var batch_norm(const Var& x, const Var& gamma, const Var& beta,
               BatchNormStats& stats, bool training);
Var relu(const Var& x);
Var leaky_relu(const Var& x, float slope);
/// Logistic function clamped to [1e-7, 1 - 1e-7] so outputs stay in (0,1).
Var sigmoid(const Var& x);
Var max_pool2(const Var& x);
Var upsample_nearest(const Var& x, int factor);
Var concat(std::span<const Var> parts);
Var add(const Var& a, const Var& b);
Var scale(const Var& x, float s);
/// Multiplies every channel of `x` (N,C,H,W) by `gate` (N,1,H,W).
Var gate(const Var& x, const Var& gate);

/// Soft dice loss: per sample 1 - (2*sum(p*t) + smooth) /
/// (sum(p) + sum(t) + smooth), averaged over the batch. Returns a scalar.
Var dice_loss(const Var& probs, const Tensor& target, float smooth);

/// Backpropagates from a scalar output.
void backward(const Var& root);

float scalar(const Var& v);

}  // namespace dopeseg::nn
