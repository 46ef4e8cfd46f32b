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

#include "dopeseg/nn.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <unordered_set>

#include "dopeseg/common.hpp"

namespace dopeseg::nn {

namespace {

thread_local bool g_grad_enabled = true;

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

Var make_node(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return node;
}

// Attaches inputs and a backward closure when recording is active.
void record(const Var& out, std::vector<Var> inputs,
            std::function<void(Node&)> fn) {
  bool needs = false;
  if (g_grad_enabled) {
    for (const auto& in : inputs) needs = needs || (in && in->requires_grad);
  }
  if (!needs) return;
  out->requires_grad = true;
  out->inputs = std::move(inputs);
  out->backward = std::move(fn);
}

void expect(bool cond, const std::string& what) {
  if (!cond) fail(ErrorCode::kShape, what);
}

// Column buffer layout: row (ci * k + ky) * k + kx, column y * W + x.
void im2col(const float* in, int channels, int h, int w, int k, float* col) {
  const int pad = k / 2;
  for (int ci = 0; ci < channels; ++ci) {
    const float* src = in + static_cast<std::size_t>(ci) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const int dx = kx - pad;
        const int x0 = std::max(0, -dx);
        const int x1 = std::min(w, w - dx);
        for (int y = 0; y < h; ++y) {
          float* dst = col + static_cast<std::size_t>(y) * w;
          const int iy = y + ky - pad;
          if (iy < 0 || iy >= h || x1 <= x0) {
            std::fill(dst, dst + w, 0.0f);
            continue;
          }
          std::fill(dst, dst + x0, 0.0f);
          std::memcpy(dst + x0, src + static_cast<std::size_t>(iy) * w + x0 + dx,
                      sizeof(float) * (x1 - x0));
          std::fill(dst + x1, dst + w, 0.0f);
        }
        col += static_cast<std::size_t>(h) * w;
      }
    }
  }
}

void col2im_add(const float* col, int channels, int h, int w, int k, float* out) {
  const int pad = k / 2;
  for (int ci = 0; ci < channels; ++ci) {
    float* dst = out + static_cast<std::size_t>(ci) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const int dx = kx - pad;
        const int x0 = std::max(0, -dx);
        const int x1 = std::min(w, w - dx);
        for (int y = 0; y < h; ++y) {
          const int iy = y + ky - pad;
          if (iy < 0 || iy >= h) continue;
          const float* src = col + static_cast<std::size_t>(y) * w;
          float* row = dst + static_cast<std::size_t>(iy) * w + dx;
          for (int x = x0; x < x1; ++x) row[x] += src[x];
        }
        col += static_cast<std::size_t>(h) * w;
      }
    }
  }
}

Buffer& scratch() {
  thread_local Buffer buf;
  return buf;
}

}  // namespace

std::string to_string(const Shape& s) {
  return std::to_string(s.n) + "x" + std::to_string(s.c) + "x" +
         std::to_string(s.h) + "x" + std::to_string(s.w);
}

float* Node::grad_buffer() {
  if (grad.empty()) grad.assign(value.data.size(), 0.0f);
  return grad.data();
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Var constant(Tensor t) { return make_node(std::move(t)); }

Var parameter(Tensor t) {
  auto v = make_node(std::move(t));
  v->requires_grad = true;
  return v;
}

Var conv2d(const Var& x, const Var& weight, const Var& bias) {
  const Shape xs = x->value.shape;
  const Shape ws = weight->value.shape;
  expect(ws.h == ws.w && ws.h % 2 == 1, "conv2d: kernel must be odd and square");
  expect(ws.c == xs.c, "conv2d: input has " + std::to_string(xs.c) +
                           " channels, weight expects " + std::to_string(ws.c));
  const int k = ws.h;
  const int cout = ws.n;
  const int kdim = xs.c * k * k;
  const int hw = xs.h * xs.w;

  auto out = make_node(Tensor({xs.n, cout, xs.h, xs.w}));
  const ConstMatMap w(weight->value.data.data(), cout, kdim);
  Buffer& col = scratch();
  if (k > 1) col.resize(static_cast<std::size_t>(kdim) * hw);

  for (int n = 0; n < xs.n; ++n) {
    const float* src = x->value.sample(n);
    if (k > 1) {
      im2col(src, xs.c, xs.h, xs.w, k, col.data());
      src = col.data();
    }
    MatMap y(out->value.sample(n), cout, hw);
    y.noalias() = w * ConstMatMap(src, kdim, hw);
    if (bias) {
      for (int c = 0; c < cout; ++c) y.row(c).array() += bias->value.data[c];
    }
  }

  record(out, {x, weight, bias}, [k, kdim, hw, cout](Node& self) {
    const Var& x = self.inputs[0];
    const Var& weight = self.inputs[1];
    const Var& bias = self.inputs[2];
    const Shape xs = x->value.shape;
    const ConstMatMap w(weight->value.data.data(), cout, kdim);
    Buffer& col = scratch();
    Buffer dcol;
    if (k > 1) col.resize(static_cast<std::size_t>(kdim) * hw);
    if (k > 1 && x->requires_grad) dcol.resize(static_cast<std::size_t>(kdim) * hw);
    for (int n = 0; n < xs.n; ++n) {
      const ConstMatMap dy(self.grad.data() + static_cast<std::size_t>(n) * cout * hw,
                           cout, hw);
      if (weight->requires_grad) {
        const float* src = x->value.sample(n);
        if (k > 1) {
          im2col(src, xs.c, xs.h, xs.w, k, col.data());
          src = col.data();
        }
        MatMap dw(weight->grad_buffer(), cout, kdim);
        dw.noalias() += dy * ConstMatMap(src, kdim, hw).transpose();
      }
      if (bias && bias->requires_grad) {
        float* db = bias->grad_buffer();
        for (int c = 0; c < cout; ++c) db[c] += dy.row(c).sum();
      }
      if (x->requires_grad) {
        float* dx = x->grad_buffer() + static_cast<std::size_t>(n) * xs.c * hw;
        if (k > 1) {
          MatMap dc(dcol.data(), kdim, hw);
          dc.noalias() = w.transpose() * dy;
          col2im_add(dcol.data(), xs.c, xs.h, xs.w, k, dx);
        } else {
          MatMap(dx, kdim, hw).noalias() += w.transpose() * dy;
        }
      }
    }
  });
  return out;
}

Var batch_norm(const Var& x, const Var& gamma, const Var& beta,
               BatchNormStats& stats, bool training) {
  const Shape s = x->value.shape;
  const int channels = s.c;
  expect(static_cast<int>(gamma->value.data.size()) == channels,
         "batch_norm: channel mismatch");
  const std::size_t plane = s.plane();
  const double count = static_cast<double>(s.n) * plane;

  auto out = make_node(Tensor(s));
  // Normalised activations and per-channel inverse std, kept for backward.
  auto xhat = std::make_shared<std::vector<float>>(s.numel());
  auto invstd = std::make_shared<std::vector<float>>(channels);

  for (int c = 0; c < channels; ++c) {
    double mean;
    double var;
    if (training) {
      double sum = 0.0;
      double sq = 0.0;
      for (int n = 0; n < s.n; ++n) {
        const float* p = x->value.channel(n, c);
        for (std::size_t i = 0; i < plane; ++i) {
          sum += p[i];
          sq += static_cast<double>(p[i]) * p[i];
        }
      }
      mean = sum / count;
      var = std::max(0.0, sq / count - mean * mean);
      const double unbiased = count > 1 ? var * count / (count - 1) : var;
      stats.mean[c] = (1 - stats.momentum) * stats.mean[c] +
                      stats.momentum * static_cast<float>(mean);
      stats.var[c] = (1 - stats.momentum) * stats.var[c] +
                     stats.momentum * static_cast<float>(unbiased);
    } else {
      mean = stats.mean[c];
      var = stats.var[c];
    }
    const float inv = static_cast<float>(1.0 / std::sqrt(var + stats.eps));
    (*invstd)[c] = inv;
    const float g = gamma->value.data[c];
    const float b = beta->value.data[c];
    const float m = static_cast<float>(mean);
    for (int n = 0; n < s.n; ++n) {
      const float* p = x->value.channel(n, c);
      float* q = out->value.channel(n, c);
      float* xh = xhat->data() + (p - x->value.data.data());
      for (std::size_t i = 0; i < plane; ++i) {
        xh[i] = (p[i] - m) * inv;
        q[i] = g * xh[i] + b;
      }
    }
  }

  record(out, {x, gamma, beta}, [xhat, invstd, training, count](Node& self) {
    const Var& x = self.inputs[0];
    const Var& gamma = self.inputs[1];
    const Var& beta = self.inputs[2];
    const Shape s = x->value.shape;
    const std::size_t plane = s.plane();
    for (int c = 0; c < s.c; ++c) {
      double sum_dy = 0.0;
      double sum_dy_xhat = 0.0;
      for (int n = 0; n < s.n; ++n) {
        const std::size_t off = (static_cast<std::size_t>(n) * s.c + c) * plane;
        const float* dy = self.grad.data() + off;
        const float* xh = xhat->data() + off;
        for (std::size_t i = 0; i < plane; ++i) {
          sum_dy += dy[i];
          sum_dy_xhat += static_cast<double>(dy[i]) * xh[i];
        }
      }
      if (gamma->requires_grad) gamma->grad_buffer()[c] += static_cast<float>(sum_dy_xhat);
      if (beta->requires_grad) beta->grad_buffer()[c] += static_cast<float>(sum_dy);
      if (!x->requires_grad) continue;
      const float g = gamma->value.data[c];
      const float inv = (*invstd)[c];
      float* dx = x->grad_buffer();
      const float mean_dy = static_cast<float>(sum_dy / count);
      const float mean_dy_xhat = static_cast<float>(sum_dy_xhat / count);
      for (int n = 0; n < s.n; ++n) {
        const std::size_t off = (static_cast<std::size_t>(n) * s.c + c) * plane;
        const float* dy = self.grad.data() + off;
        const float* xh = xhat->data() + off;
        float* d = dx + off;
        if (training) {
          for (std::size_t i = 0; i < plane; ++i) {
            d[i] += g * inv * (dy[i] - mean_dy - xh[i] * mean_dy_xhat);
          }
        } else {
          for (std::size_t i = 0; i < plane; ++i) d[i] += g * inv * dy[i];
        }
      }
    }
  });
  return out;
}

Var leaky_relu(const Var& x, float slope) {
  auto out = make_node(x->value);
  for (float& v : out->value.data) {
    if (v < 0.0f) v *= slope;
  }
  record(out, {x}, [slope](Node& self) {
    const Var& x = self.inputs[0];
    float* dx = x->grad_buffer();
    const auto& xv = x->value.data;
    for (std::size_t i = 0; i < xv.size(); ++i) {
      dx[i] += xv[i] > 0.0f ? self.grad[i] : slope * self.grad[i];
    }
  });
  return out;
}

Var relu(const Var& x) { return leaky_relu(x, 0.0f); }

Var sigmoid(const Var& x) {
  constexpr float kLo = 1e-7f;
  constexpr float kHi = 1.0f - 1e-7f;
  auto out = make_node(x->value);
  for (float& v : out->value.data) {
    v = std::clamp(1.0f / (1.0f + std::exp(-v)), kLo, kHi);
  }
  record(out, {x}, [](Node& self) {
    float* dx = self.inputs[0]->grad_buffer();
    const auto& y = self.value.data;
    for (std::size_t i = 0; i < y.size(); ++i) {
      dx[i] += self.grad[i] * y[i] * (1.0f - y[i]);
    }
  });
  return out;
}

Var max_pool2(const Var& x) {
  const Shape s = x->value.shape;
  expect(s.h % 2 == 0 && s.w % 2 == 0,
         "max_pool2: spatial size " + to_string(s) + " is not even");
  const Shape os{s.n, s.c, s.h / 2, s.w / 2};
  auto out = make_node(Tensor(os));
  auto argmax = std::make_shared<std::vector<std::uint32_t>>(os.numel());
  std::size_t o = 0;
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const float* p = x->value.channel(n, c);
      const std::size_t base = p - x->value.data.data();
      for (int y = 0; y < os.h; ++y) {
        for (int xx = 0; xx < os.w; ++xx, ++o) {
          std::size_t best = static_cast<std::size_t>(2 * y) * s.w + 2 * xx;
          for (std::size_t cand : {best + 1, best + s.w, best + s.w + 1}) {
            if (p[cand] > p[best]) best = cand;
          }
          out->value.data[o] = p[best];
          (*argmax)[o] = static_cast<std::uint32_t>(base + best);
        }
      }
    }
  }
  record(out, {x}, [argmax](Node& self) {
    float* dx = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < argmax->size(); ++i) dx[(*argmax)[i]] += self.grad[i];
  });
  return out;
}

Var upsample_nearest(const Var& x, int factor) {
  if (factor == 1) return x;
  const Shape s = x->value.shape;
  const Shape os{s.n, s.c, s.h * factor, s.w * factor};
  auto out = make_node(Tensor(os));
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const float* p = x->value.channel(n, c);
      float* q = out->value.channel(n, c);
      for (int y = 0; y < os.h; ++y) {
        const float* row = p + static_cast<std::size_t>(y / factor) * s.w;
        float* dst = q + static_cast<std::size_t>(y) * os.w;
        for (int xx = 0; xx < os.w; ++xx) dst[xx] = row[xx / factor];
      }
    }
  }
  record(out, {x}, [factor](Node& self) {
    const Var& x = self.inputs[0];
    const Shape s = x->value.shape;
    const Shape os = self.value.shape;
    float* dx = x->grad_buffer();
    for (int nc = 0; nc < s.n * s.c; ++nc) {
      const float* g = self.grad.data() + static_cast<std::size_t>(nc) * os.plane();
      float* d = dx + static_cast<std::size_t>(nc) * s.plane();
      for (int y = 0; y < os.h; ++y) {
        float* row = d + static_cast<std::size_t>(y / factor) * s.w;
        const float* src = g + static_cast<std::size_t>(y) * os.w;
        for (int xx = 0; xx < os.w; ++xx) row[xx / factor] += src[xx];
      }
    }
  });
  return out;
}

Var concat(std::span<const Var> parts) {
  expect(!parts.empty(), "concat: no inputs");
  if (parts.size() == 1) return parts[0];
  Shape s = parts[0]->value.shape;
  int channels = 0;
  for (const auto& p : parts) {
    const Shape ps = p->value.shape;
    expect(ps.n == s.n && ps.h == s.h && ps.w == s.w,
           "concat: shape mismatch " + to_string(ps) + " vs " + to_string(s));
    channels += ps.c;
  }
  s.c = channels;
  auto out = make_node(Tensor(s));
  const std::size_t plane = s.plane();
  for (int n = 0; n < s.n; ++n) {
    float* dst = out->value.sample(n);
    for (const auto& p : parts) {
      const std::size_t len = p->value.shape.c * plane;
      std::memcpy(dst, p->value.sample(n), sizeof(float) * len);
      dst += len;
    }
  }
  record(out, std::vector<Var>(parts.begin(), parts.end()), [](Node& self) {
    const Shape s = self.value.shape;
    const std::size_t plane = s.plane();
    for (int n = 0; n < s.n; ++n) {
      const float* g = self.grad.data() + static_cast<std::size_t>(n) * s.c * plane;
      for (const auto& p : self.inputs) {
        const std::size_t len = p->value.shape.c * plane;
        if (p->requires_grad) {
          float* d = p->grad_buffer() + static_cast<std::size_t>(n) * len;
          for (std::size_t i = 0; i < len; ++i) d[i] += g[i];
        }
        g += len;
      }
    }
  });
  return out;
}

Var add(const Var& a, const Var& b) {
  expect(a->value.shape == b->value.shape, "add: shape mismatch " +
                                               to_string(a->value.shape) + " vs " +
                                               to_string(b->value.shape));
  auto out = make_node(a->value);
  for (std::size_t i = 0; i < out->value.data.size(); ++i) {
    out->value.data[i] += b->value.data[i];
  }
  record(out, {a, b}, [](Node& self) {
    for (const auto& in : self.inputs) {
      if (!in->requires_grad) continue;
      float* d = in->grad_buffer();
      for (std::size_t i = 0; i < self.grad.size(); ++i) d[i] += self.grad[i];
    }
  });
  return out;
}

Var scale(const Var& x, float s) {
  auto out = make_node(x->value);
  for (float& v : out->value.data) v *= s;
  record(out, {x}, [s](Node& self) {
    float* d = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < self.grad.size(); ++i) d[i] += s * self.grad[i];
  });
  return out;
}

Var gate(const Var& x, const Var& g) {
  const Shape s = x->value.shape;
  const Shape gs = g->value.shape;
  expect(gs.c == 1 && gs.n == s.n && gs.h == s.h && gs.w == s.w,
         "gate: expected gate of shape Nx1xHxW, got " + to_string(gs));
  auto out = make_node(Tensor(s));
  const std::size_t plane = s.plane();
  for (int n = 0; n < s.n; ++n) {
    const float* gp = g->value.channel(n, 0);
    for (int c = 0; c < s.c; ++c) {
      const float* p = x->value.channel(n, c);
      float* q = out->value.channel(n, c);
      for (std::size_t i = 0; i < plane; ++i) q[i] = p[i] * gp[i];
    }
  }
  record(out, {x, g}, [](Node& self) {
    const Var& x = self.inputs[0];
    const Var& g = self.inputs[1];
    const Shape s = x->value.shape;
    const std::size_t plane = s.plane();
    for (int n = 0; n < s.n; ++n) {
      const float* gp = g->value.channel(n, 0);
      float* dg = g->requires_grad ? g->grad_buffer() + n * plane : nullptr;
      for (int c = 0; c < s.c; ++c) {
        const std::size_t off = (static_cast<std::size_t>(n) * s.c + c) * plane;
        const float* dy = self.grad.data() + off;
        const float* xv = x->value.data.data() + off;
        if (x->requires_grad) {
          float* dx = x->grad_buffer() + off;
          for (std::size_t i = 0; i < plane; ++i) dx[i] += dy[i] * gp[i];
        }
        if (dg) {
          for (std::size_t i = 0; i < plane; ++i) dg[i] += dy[i] * xv[i];
        }
      }
    }
  });
  return out;
}

Var dice_loss(const Var& probs, const Tensor& target, float smooth) {
  const Shape s = probs->value.shape;
  expect(s == target.shape, "dice_loss: prediction " + to_string(s) +
                                " vs target " + to_string(target.shape));
  const std::size_t per = static_cast<std::size_t>(s.c) * s.plane();
  // Per-sample intersection and sum(p) + sum(t).
  auto inter = std::make_shared<std::vector<double>>(s.n);
  auto total = std::make_shared<std::vector<double>>(s.n);
  double loss = 0.0;
  for (int n = 0; n < s.n; ++n) {
    const float* p = probs->value.sample(n);
    const float* t = target.sample(n);
    double i_sum = 0.0;
    double t_sum = 0.0;
    for (std::size_t i = 0; i < per; ++i) {
      i_sum += static_cast<double>(p[i]) * t[i];
      t_sum += static_cast<double>(p[i]) + t[i];
    }
    (*inter)[n] = i_sum;
    (*total)[n] = t_sum;
    loss += 1.0 - (2.0 * i_sum + smooth) / (t_sum + smooth);
  }
  loss /= s.n;
  auto out = make_node(Tensor({1, 1, 1, 1}, static_cast<float>(loss)));
  auto tgt = std::make_shared<Tensor>(target);
  record(out, {probs}, [inter, total, tgt, smooth, per](Node& self) {
    const Var& probs = self.inputs[0];
    const int batch = probs->value.shape.n;
    const double upstream = self.grad[0];
    float* dp = probs->grad_buffer();
    for (int n = 0; n < batch; ++n) {
      const double denom = (*total)[n] + smooth;
      const double numer = 2.0 * (*inter)[n] + smooth;
      const double a = -2.0 / denom;
      const double b = numer / (denom * denom);
      const float* t = tgt->sample(n);
      float* d = dp + static_cast<std::size_t>(n) * per;
      for (std::size_t i = 0; i < per; ++i) {
        d[i] += static_cast<float>(upstream * (a * t[i] + b) / batch);
      }
    }
  });
  return out;
}

void backward(const Var& root) {
  if (root->value.data.size() != 1) {
    fail(ErrorCode::kShape, "backward: root must be a scalar, got " +
                                to_string(root->value.shape));
  }
  if (!root->requires_grad) return;
  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child && child->requires_grad && seen.insert(child).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root->grad.assign(1, 1.0f);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
}

float scalar(const Var& v) { return v->value.data.at(0); }

}  // namespace dopeseg::nn
