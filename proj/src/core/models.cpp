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

#include "dopeseg/models.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "dopeseg/common.hpp"

namespace dopeseg::models {

using nn::Var;

std::string_view to_string(Architecture a) {
  switch (a) {
    case Architecture::kUnet:
      return "unet";
    case Architecture::kUnetPP:
      return "unetpp";
    case Architecture::kHalfUnet:
      return "half_unet";
    case Architecture::kDcUnet:
      return "dc_unet";
    case Architecture::kAttentionUnet:
      return "attention_unet";
    case Architecture::kRrdbUnet:
      return "rrdb_unet";
  }
  return "?";
}

Architecture parse_architecture(std::string_view s) {
  for (Architecture a : all_architectures()) {
    if (to_string(a) == s) return a;
  }
  fail(ErrorCode::kValidation, "unknown architecture '" + std::string(s) + "'");
}

const std::vector<Architecture>& all_architectures() {
  static const std::vector<Architecture> kAll = {
      Architecture::kUnet,     Architecture::kUnetPP,        Architecture::kHalfUnet,
      Architecture::kDcUnet,   Architecture::kAttentionUnet, Architecture::kRrdbUnet};
  return kAll;
}

void ModelSpec::validate() const {
  if (depth < 1 || depth > 6) {
    fail(ErrorCode::kValidation, "depth must be in [1, 6], got " + std::to_string(depth));
  }
  if (base_width < 8) {
    fail(ErrorCode::kValidation, "base_width must be >= 8, got " + std::to_string(base_width));
  }
  if (init != "he_normal") fail(ErrorCode::kValidation, "init must be he_normal");
  if (output_activation != "sigmoid") {
    fail(ErrorCode::kValidation, "output_activation must be sigmoid");
  }
}

void ModelSpec::check_input(int height, int width) const {
  const int stride = 1 << depth;
  if (height <= 0 || width <= 0 || height % stride != 0 || width % stride != 0) {
    fail(ErrorCode::kShape, "input " + std::to_string(height) + "x" + std::to_string(width) +
                                " is not divisible by 2^depth = " + std::to_string(stride));
  }
}

nlohmann::json to_json(const ModelSpec& spec) {
  return {{"architecture", std::string(to_string(spec.architecture))},
          {"depth", spec.depth},
          {"base_width", spec.base_width},
          {"init", spec.init},
          {"output_activation", spec.output_activation}};
}

ModelSpec model_spec_from_json(const nlohmann::json& j) {
  ModelSpec spec;
  spec.architecture = parse_architecture(j.at("architecture").get<std::string>());
  spec.depth = j.value("depth", spec.depth);
  spec.base_width = j.value("base_width", spec.base_width);
  spec.init = j.value("init", spec.init);
  spec.output_activation = j.value("output_activation", spec.output_activation);
  spec.validate();
  return spec;
}

// ---------------------------------------------------------------------------
// Parameter store

Var ParamStore::add(const std::string& name, nn::Tensor t) {
  for (const auto& p : params_) {
    if (p.name == name) fail(ErrorCode::kInternal, "duplicate parameter " + name);
  }
  auto v = nn::parameter(std::move(t));
  params_.push_back({name, v});
  return v;
}

Var ParamStore::conv_weight(const std::string& name, int cout, int cin, int k) {
  nn::Tensor t({cout, cin, k, k});
  const double fan_in = static_cast<double>(cin) * k * k;
  Rng rng(derive_seed(seed_, name));
  std::normal_distribution<float> dist(0.0f, static_cast<float>(std::sqrt(2.0 / fan_in)));
  for (float& v : t.data) v = dist(rng);
  return add(name, std::move(t));
}

Var ParamStore::zeros(const std::string& name, int n) {
  return add(name, nn::Tensor({n, 1, 1, 1}, 0.0f));
}

Var ParamStore::ones(const std::string& name, int n) {
  return add(name, nn::Tensor({n, 1, 1, 1}, 1.0f));
}

nn::BatchNormStats& ParamStore::batch_norm_stats(const std::string& name, int channels) {
  auto stats = std::make_unique<nn::BatchNormStats>();
  stats->mean.assign(channels, 0.0f);
  stats->var.assign(channels, 1.0f);
  auto& ref = *stats;
  stats_.emplace_back(name, std::move(stats));
  return ref;
}

std::vector<NamedBuffer> ParamStore::buffers() const {
  std::vector<NamedBuffer> out;
  for (const auto& [name, s] : stats_) out.push_back({name, s.get()});
  return out;
}

namespace {

// ---------------------------------------------------------------------------
// Building blocks

struct Conv {
  Var weight;
  Var bias;

  Conv() = default;
  Conv(ParamStore& ps, const std::string& name, int cin, int cout, int k, bool with_bias)
      : weight(ps.conv_weight(name + ".weight", cout, cin, k)),
        bias(with_bias ? ps.zeros(name + ".bias", cout) : nullptr) {}

  Var operator()(const Var& x) const { return nn::conv2d(x, weight, bias); }
};

// conv -> batch norm -> ReLU
struct ConvBnRelu {
  Conv conv;
  Var gamma;
  Var beta;
  nn::BatchNormStats* stats = nullptr;

  ConvBnRelu() = default;
  ConvBnRelu(ParamStore& ps, const std::string& name, int cin, int cout, int k = 3)
      : conv(ps, name + ".conv", cin, cout, k, false),
        gamma(ps.ones(name + ".bn.gamma", cout)),
        beta(ps.zeros(name + ".bn.beta", cout)),
        stats(&ps.batch_norm_stats(name + ".bn", cout)) {}

  Var operator()(const Var& x, bool training) const {
    return nn::relu(nn::batch_norm(conv(x), gamma, beta, *stats, training));
  }
};

struct DoubleConv {
  ConvBnRelu first;
  ConvBnRelu second;

  DoubleConv() = default;
  DoubleConv(ParamStore& ps, const std::string& name, int cin, int cout)
      : first(ps, name + ".0", cin, cout), second(ps, name + ".1", cout, cout) {}

  Var operator()(const Var& x, bool training) const {
    return second(first(x, training), training);
  }
};

// Nearest 2x upsampling followed by a 3x3 conv block.
struct UpConv {
  ConvBnRelu block;

  UpConv() = default;
  UpConv(ParamStore& ps, const std::string& name, int cin, int cout)
      : block(ps, name, cin, cout) {}

  Var operator()(const Var& x, bool training) const {
    return block(nn::upsample_nearest(x, 2), training);
  }
};

struct Head {
  Conv conv;

  Head() = default;
  Head(ParamStore& ps, int cin) : conv(ps, "head", cin, 1, 1, true) {}

  Var operator()(const Var& x) const { return nn::sigmoid(conv(x)); }
};

int width_at(const ModelSpec& spec, int level) { return spec.base_width << level; }

void trace_put(Trace* trace, const std::string& name, const Var& v) {
  if (trace) trace->emplace_back(name, v->value);
}

// ---------------------------------------------------------------------------
// U-Net (also the skeleton for the attention variant)

class UNet : public Network {
 public:
  UNet(const ModelSpec& spec, ParamStore& ps, bool attention) : depth_(spec.depth) {
    for (int i = 0; i <= depth_; ++i) {
      const int cin = i == 0 ? 1 : width_at(spec, i - 1);
      enc_.emplace_back(ps, "enc" + std::to_string(i), cin, width_at(spec, i));
    }
    for (int i = 0; i < depth_; ++i) {
      const int w = width_at(spec, i);
      const std::string tag = std::to_string(i);
      up_.emplace_back(ps, "up" + tag, width_at(spec, i + 1), w);
      dec_.emplace_back(ps, "dec" + tag, 2 * w, w);
      if (attention) gates_.emplace_back(ps, "att" + tag, w, width_at(spec, i + 1));
    }
    head_ = Head(ps, spec.base_width);
  }

  Var forward(const Var& x, bool training, Trace* trace) override {
    std::vector<Var> skips;
    Var h = x;
    for (int i = 0; i <= depth_; ++i) {
      if (i > 0) h = nn::max_pool2(h);
      h = enc_[i](h, training);
      skips.push_back(h);
    }
    for (int i = depth_ - 1; i >= 0; --i) {
      Var skip = skips[i];
      if (!gates_.empty()) skip = gates_[i](skip, h, training, trace, i);
      const Var parts[] = {skip, up_[i](h, training)};
      h = dec_[i](nn::concat(parts), training);
    }
    return head_(h);
  }

 private:
  // Additive attention gate: the coarser decoder feature map produces a
  // per-pixel coefficient in (0,1) that rescales the skip features.
  struct AttentionGate {
    Conv theta;  // skip -> inter
    Conv phi;    // gating -> inter
    Conv psi;    // inter -> 1
    Var gamma;
    Var beta;
    nn::BatchNormStats* stats;

    AttentionGate(ParamStore& ps, const std::string& name, int skip_ch, int gate_ch) {
      const int inter = std::max(1, skip_ch / 2);
      theta = Conv(ps, name + ".theta", skip_ch, inter, 1, false);
      phi = Conv(ps, name + ".phi", gate_ch, inter, 1, true);
      psi = Conv(ps, name + ".psi", inter, 1, 1, false);
      gamma = ps.ones(name + ".bn.gamma", 1);
      beta = ps.zeros(name + ".bn.beta", 1);
      stats = &ps.batch_norm_stats(name + ".bn", 1);
    }

    Var operator()(const Var& skip, const Var& gating, bool training, Trace* trace,
                   int level) const {
      Var g = phi(nn::upsample_nearest(gating, 2));
      Var f = nn::relu(nn::add(theta(skip), g));
      Var alpha = nn::sigmoid(nn::batch_norm(psi(f), gamma, beta, *stats, training));
      trace_put(trace, "attention" + std::to_string(level), alpha);
      return nn::gate(skip, alpha);
    }
  };

  int depth_;
  std::vector<DoubleConv> enc_;
  std::vector<UpConv> up_;
  std::vector<DoubleConv> dec_;
  std::vector<AttentionGate> gates_;
  Head head_;
};

// ---------------------------------------------------------------------------
// U-Net++: node (i, j) sees every earlier node on its row plus the
// upsampled node (i + 1, j - 1).

class UNetPP : public Network {
 public:
  UNetPP(const ModelSpec& spec, ParamStore& ps) : depth_(spec.depth) {
    nodes_.resize(depth_ + 1);
    ups_.resize(depth_ + 1);
    for (int i = 0; i <= depth_; ++i) {
      const int cin = i == 0 ? 1 : width_at(spec, i - 1);
      nodes_[i].emplace_back(ps, "x" + std::to_string(i) + "_0", cin, width_at(spec, i));
    }
    for (int j = 1; j <= depth_; ++j) {
      for (int i = 0; i + j <= depth_; ++i) {
        const int w = width_at(spec, i);
        const std::string tag = std::to_string(i) + "_" + std::to_string(j);
        ups_[i].emplace_back(ps, "up" + tag, width_at(spec, i + 1), w);
        nodes_[i].emplace_back(ps, "x" + tag, (j + 1) * w, w);
      }
    }
    head_ = Head(ps, spec.base_width);
  }

  Var forward(const Var& x, bool training, Trace*) override {
    std::vector<std::vector<Var>> out(depth_ + 1);
    Var h = x;
    for (int i = 0; i <= depth_; ++i) {
      if (i > 0) h = nn::max_pool2(h);
      h = nodes_[i][0](h, training);
      out[i].push_back(h);
    }
    for (int j = 1; j <= depth_; ++j) {
      for (int i = 0; i + j <= depth_; ++i) {
        std::vector<Var> parts(out[i].begin(), out[i].begin() + j);
        parts.push_back(ups_[i][j - 1](out[i + 1][j - 1], training));
        out[i].push_back(nodes_[i][j](nn::concat(parts), training));
      }
    }
    return head_(out[0][depth_]);
  }

 private:
  int depth_;
  std::vector<std::vector<DoubleConv>> nodes_;
  std::vector<std::vector<UpConv>> ups_;
  Head head_;
};

// ---------------------------------------------------------------------------
// Half-UNet: every encoder level has base_width channels; the decoder is a
// sum of all levels upsampled to full resolution, then a small conv head.

class HalfUNet : public Network {
 public:
  HalfUNet(const ModelSpec& spec, ParamStore& ps) : depth_(spec.depth) {
    const int w = spec.base_width;
    for (int i = 0; i <= depth_; ++i) {
      enc_.emplace_back(ps, "enc" + std::to_string(i), i == 0 ? 1 : w, w);
    }
    fuse_ = DoubleConv(ps, "fuse", w, w);
    head_ = Head(ps, w);
  }

  Var forward(const Var& x, bool training, Trace*) override {
    Var h = x;
    Var sum;
    for (int i = 0; i <= depth_; ++i) {
      if (i > 0) h = nn::max_pool2(h);
      h = enc_[i](h, training);
      Var up = nn::upsample_nearest(h, 1 << i);
      sum = sum ? nn::add(sum, up) : up;
    }
    return head_(fuse_(sum, training));
  }

 private:
  int depth_;
  std::vector<DoubleConv> enc_;
  DoubleConv fuse_;
  Head head_;
};

// ---------------------------------------------------------------------------
// DC-UNet: dual-path multi-scale blocks and residual paths on the skips.

// Two parallel stacks of 3x3 convs. Path A chains three convs (receptive
// fields 3/5/7) and path B two (3/5); each concatenates its intermediate
// outputs to `cout` channels. The paths are summed, normalised and rectified.
struct DualChannelBlock {
  std::vector<ConvBnRelu> path_a;
  std::vector<ConvBnRelu> path_b;
  Var gamma;
  Var beta;
  nn::BatchNormStats* stats = nullptr;

  DualChannelBlock() = default;
  DualChannelBlock(ParamStore& ps, const std::string& name, int cin, int cout) {
    const int a1 = std::max(1, cout / 4);
    const int a2 = std::max(1, cout / 4);
    const int a3 = cout - a1 - a2;
    const int b1 = cout / 2;
    const int b2 = cout - b1;
    int prev = cin;
    int idx = 0;
    for (int w : {a1, a2, a3}) {
      path_a.emplace_back(ps, name + ".a" + std::to_string(idx++), prev, w);
      prev = w;
    }
    prev = cin;
    idx = 0;
    for (int w : {b1, b2}) {
      path_b.emplace_back(ps, name + ".b" + std::to_string(idx++), prev, w);
      prev = w;
    }
    gamma = ps.ones(name + ".bn.gamma", cout);
    beta = ps.zeros(name + ".bn.beta", cout);
    stats = &ps.batch_norm_stats(name + ".bn", cout);
  }

  static Var run_path(const std::vector<ConvBnRelu>& path, const Var& x, bool training) {
    std::vector<Var> outs;
    Var h = x;
    for (const auto& layer : path) {
      h = layer(h, training);
      outs.push_back(h);
    }
    return nn::concat(outs);
  }

  Var operator()(const Var& x, bool training) const {
    Var merged = nn::add(run_path(path_a, x, training), run_path(path_b, x, training));
    return nn::relu(nn::batch_norm(merged, gamma, beta, *stats, training));
  }
};

// Chain of residual units: relu(bn(conv3x3(x) + conv1x1(x))).
struct ResPath {
  struct Unit {
    Conv conv3;
    Conv conv1;
    Var gamma;
    Var beta;
    nn::BatchNormStats* stats;
  };
  std::vector<Unit> units;

  ResPath() = default;
  ResPath(ParamStore& ps, const std::string& name, int channels, int length) {
    for (int u = 0; u < length; ++u) {
      const std::string n = name + "." + std::to_string(u);
      units.push_back({Conv(ps, n + ".conv3", channels, channels, 3, false),
                       Conv(ps, n + ".conv1", channels, channels, 1, false),
                       ps.ones(n + ".bn.gamma", channels), ps.zeros(n + ".bn.beta", channels),
                       &ps.batch_norm_stats(n + ".bn", channels)});
    }
  }

  Var operator()(const Var& x, bool training) const {
    Var h = x;
    for (const auto& u : units) {
      Var sum = nn::add(u.conv3(h), u.conv1(h));
      h = nn::relu(nn::batch_norm(sum, u.gamma, u.beta, *u.stats, training));
    }
    return h;
  }
};

class DCUNet : public Network {
 public:
  DCUNet(const ModelSpec& spec, ParamStore& ps) : depth_(spec.depth) {
    for (int i = 0; i <= depth_; ++i) {
      const int cin = i == 0 ? 1 : width_at(spec, i - 1);
      enc_.emplace_back(ps, "enc" + std::to_string(i), cin, width_at(spec, i));
    }
    for (int i = 0; i < depth_; ++i) {
      const int w = width_at(spec, i);
      const std::string tag = std::to_string(i);
      respath_.emplace_back(ps, "respath" + tag, w, depth_ - i);
      up_.emplace_back(ps, "up" + tag, width_at(spec, i + 1), w);
      dec_.emplace_back(ps, "dec" + tag, 2 * w, w);
    }
    head_ = Head(ps, spec.base_width);
  }

  Var forward(const Var& x, bool training, Trace*) override {
    std::vector<Var> skips;
    Var h = x;
    for (int i = 0; i <= depth_; ++i) {
      if (i > 0) h = nn::max_pool2(h);
      h = enc_[i](h, training);
      skips.push_back(h);
    }
    for (int i = depth_ - 1; i >= 0; --i) {
      const Var parts[] = {respath_[i](skips[i], training), up_[i](h, training)};
      h = dec_[i](nn::concat(parts), training);
    }
    return head_(h);
  }

 private:
  int depth_;
  std::vector<DualChannelBlock> enc_;
  std::vector<ResPath> respath_;
  std::vector<UpConv> up_;
  std::vector<DualChannelBlock> dec_;
  Head head_;
};

// ---------------------------------------------------------------------------
// RRDB U-Net: each encoder level is an entry conv followed by a
// Residual-in-Residual Dense Block (no normalisation, LeakyReLU 0.2).

constexpr float kResidualScale = 0.2f;
constexpr float kLeakySlope = 0.2f;

struct DenseBlock {
  std::vector<Conv> convs;  // four growth convs and one fusion conv

  DenseBlock() = default;
  DenseBlock(ParamStore& ps, const std::string& name, int channels, int growth) {
    for (int c = 0; c < 4; ++c) {
      convs.emplace_back(ps, name + ".conv" + std::to_string(c), channels + c * growth, growth,
                         3, true);
    }
    convs.emplace_back(ps, name + ".conv4", channels + 4 * growth, channels, 3, true);
  }

  Var operator()(const Var& x) const {
    std::vector<Var> feats{x};
    for (int c = 0; c < 4; ++c) {
      feats.push_back(nn::leaky_relu(convs[c](nn::concat(feats)), kLeakySlope));
    }
    Var fused = convs[4](nn::concat(feats));
    return nn::add(x, nn::scale(fused, kResidualScale));
  }
};

struct Rrdb {
  DenseBlock blocks[3];

  Rrdb() = default;
  Rrdb(ParamStore& ps, const std::string& name, int channels, int growth) {
    for (int b = 0; b < 3; ++b) {
      blocks[b] = DenseBlock(ps, name + ".db" + std::to_string(b), channels, growth);
    }
  }

  Var operator()(const Var& x) const {
    Var h = x;
    for (const auto& b : blocks) h = b(h);
    return nn::add(x, nn::scale(h, kResidualScale));
  }
};

class RrdbUNet : public Network {
 public:
  RrdbUNet(const ModelSpec& spec, ParamStore& ps) : depth_(spec.depth) {
    for (int i = 0; i <= depth_; ++i) {
      const int cin = i == 0 ? 1 : width_at(spec, i - 1);
      const int w = width_at(spec, i);
      const std::string tag = std::to_string(i);
      entry_.emplace_back(ps, "enc" + tag + ".entry", cin, w, 3, true);
      rrdb_.emplace_back(ps, "enc" + tag + ".rrdb", w, std::max(4, w / 2));
    }
    for (int i = 0; i < depth_; ++i) {
      const int w = width_at(spec, i);
      const std::string tag = std::to_string(i);
      up_.emplace_back(ps, "up" + tag, width_at(spec, i + 1), w);
      dec_.emplace_back(ps, "dec" + tag, 2 * w, w);
    }
    head_ = Head(ps, spec.base_width);
  }

  Var forward(const Var& x, bool training, Trace*) override {
    std::vector<Var> skips;
    Var h = x;
    for (int i = 0; i <= depth_; ++i) {
      if (i > 0) h = nn::max_pool2(h);
      h = rrdb_[i](nn::leaky_relu(entry_[i](h), kLeakySlope));
      skips.push_back(h);
    }
    for (int i = depth_ - 1; i >= 0; --i) {
      const Var parts[] = {skips[i], up_[i](h, training)};
      h = dec_[i](nn::concat(parts), training);
    }
    return head_(h);
  }

 private:
  int depth_;
  std::vector<Conv> entry_;
  std::vector<Rrdb> rrdb_;
  std::vector<UpConv> up_;
  std::vector<DoubleConv> dec_;
  Head head_;
};

std::unique_ptr<Network> make_network(const ModelSpec& spec, ParamStore& ps) {
  switch (spec.architecture) {
    case Architecture::kUnet:
      return std::make_unique<UNet>(spec, ps, false);
    case Architecture::kAttentionUnet:
      return std::make_unique<UNet>(spec, ps, true);
    case Architecture::kUnetPP:
      return std::make_unique<UNetPP>(spec, ps);
    case Architecture::kHalfUnet:
      return std::make_unique<HalfUNet>(spec, ps);
    case Architecture::kDcUnet:
      return std::make_unique<DCUNet>(spec, ps);
    case Architecture::kRrdbUnet:
      return std::make_unique<RrdbUNet>(spec, ps);
  }
  fail(ErrorCode::kInternal, "unhandled architecture");
}

}  // namespace

// ---------------------------------------------------------------------------
// Model

Model::Model(ModelSpec spec, std::uint64_t seed)
    : spec_(std::move(spec)), seed_(seed), store_(std::make_unique<ParamStore>(seed)) {}

Model Model::build(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  Model m(spec, seed);
  m.net_ = make_network(spec, *m.store_);
  return m;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : store_->parameters()) n += p.var->value.data.size();
  return n;
}

nn::Tensor Model::forward(const nn::Tensor& batch, Trace* trace) {
  nn::NoGradGuard guard;
  return forward_graph(nn::constant(batch), false, trace)->value;
}

Var Model::forward_graph(const Var& batch, bool training, Trace* trace) {
  const nn::Shape s = batch->value.shape;
  if (s.c != 1) {
    fail(ErrorCode::kShape, "expected single-channel input, got " + nn::to_string(s));
  }
  spec_.check_input(s.h, s.w);
  return net_->forward(batch, training, trace);
}

ModelState Model::state() const {
  ModelState st;
  for (const auto& p : store_->parameters()) {
    st.tensors.emplace_back(p.var->value.data.begin(), p.var->value.data.end());
  }
  for (const auto& b : store_->buffers()) {
    st.tensors.push_back(b.stats->mean);
    st.tensors.push_back(b.stats->var);
  }
  return st;
}

void Model::load_state(const ModelState& st) {
  const auto& params = store_->parameters();
  const auto bufs = store_->buffers();
  if (st.tensors.size() != params.size() + 2 * bufs.size()) {
    fail(ErrorCode::kShape, "model state has " + std::to_string(st.tensors.size()) +
                                " tensors, model expects " +
                                std::to_string(params.size() + 2 * bufs.size()));
  }
  std::size_t i = 0;
  auto assign = [&](auto& dst) {
    if (dst.size() != st.tensors[i].size()) {
      fail(ErrorCode::kShape, "model state tensor " + std::to_string(i) + " has wrong size");
    }
    dst.assign(st.tensors[i].begin(), st.tensors[i].end());
    ++i;
  };
  for (const auto& p : params) assign(p.var->value.data);
  for (const auto& b : bufs) {
    assign(b.stats->mean);
    assign(b.stats->var);
  }
}

Model Model::clone() const {
  Model copy = build(spec_, seed_);
  copy.load_state(state());
  return copy;
}

std::uint64_t Model::parameter_hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : store_->parameters()) {
    const auto& d = p.var->value.data;
    h = fnv1a64(std::string_view(reinterpret_cast<const char*>(d.data()),
                                 d.size() * sizeof(float)),
                h);
  }
  return h;
}

std::vector<std::uint8_t> binarize(std::span<const float> probabilities, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    fail(ErrorCode::kInvalidArgument,
         "threshold must lie in (0,1), got " + std::to_string(threshold));
  }
  std::vector<std::uint8_t> out(probabilities.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = probabilities[i] >= threshold ? 1 : 0;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[4] = {'D', 'S', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& is) {
  unsigned char b[4] = {};
  is.read(reinterpret_cast<char*>(b), 4);
  return b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

static_assert(sizeof(float) == 4);

void write_floats(std::ostream& os, const std::vector<float>& v) {
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(v.data()),
             static_cast<std::streamsize>(v.size() * 4));
  } else {
    for (float f : v) write_u32(os, std::bit_cast<std::uint32_t>(f));
  }
}

void read_floats(std::istream& is, std::vector<float>& v) {
  if constexpr (std::endian::native == std::endian::little) {
    is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * 4));
  } else {
    for (float& f : v) f = std::bit_cast<float>(read_u32(is));
  }
}

}  // namespace

void save_checkpoint(const Model& model, const std::filesystem::path& path,
                     const nlohmann::json& extra_header) {
  nlohmann::json header = extra_header.is_object() ? extra_header : nlohmann::json::object();
  header["spec"] = to_json(model.spec());
  header["seed"] = model.seed();
  header["parameter_count"] = model.parameter_count();
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& p : model.parameters()) {
    const auto& s = p.var->value.shape;
    tensors.push_back({{"name", p.name},
                       {"kind", "parameter"},
                       {"shape", {s.n, s.c, s.h, s.w}}});
  }
  for (const auto& b : model.buffers()) {
    const int c = static_cast<int>(b.stats->mean.size());
    tensors.push_back({{"name", b.name + ".running_mean"}, {"kind", "buffer"}, {"shape", {c}}});
    tensors.push_back({{"name", b.name + ".running_var"}, {"kind", "buffer"}, {"shape", {c}}});
  }
  header["tensors"] = tensors;
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) fail(ErrorCode::kIo, "cannot write checkpoint " + tmp.string());
    os.write(kMagic, 4);
    write_u32(os, kVersion);
    write_u32(os, static_cast<std::uint32_t>(text.size()));
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& t : model.state().tensors) write_floats(os, t);
    if (!os) fail(ErrorCode::kIo, "failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Model load_checkpoint(const std::filesystem::path& path, nlohmann::json* header_out) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorCode::kNotFound, "cannot open checkpoint " + path.string());
  char magic[4] = {};
  is.read(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) {
    fail(ErrorCode::kIo, path.string() + " is not a checkpoint file");
  }
  const std::uint32_t version = read_u32(is);
  if (version != kVersion) {
    fail(ErrorCode::kIo, "unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint32_t len = read_u32(is);
  std::string text(len, '\0');
  is.read(text.data(), len);
  if (!is) fail(ErrorCode::kIo, "truncated checkpoint header in " + path.string());
  const auto header = nlohmann::json::parse(text);

  Model model = Model::build(model_spec_from_json(header.at("spec")),
                             header.at("seed").get<std::uint64_t>());
  ModelState st = model.state();
  const auto& listed = header.at("tensors");
  if (listed.size() != st.tensors.size()) {
    fail(ErrorCode::kIo, "checkpoint tensor list does not match architecture");
  }
  for (std::size_t i = 0; i < st.tensors.size(); ++i) {
    std::size_t n = 1;
    for (int d : listed[i].at("shape")) n *= static_cast<std::size_t>(d);
    if (n != st.tensors[i].size()) {
      fail(ErrorCode::kIo, "checkpoint tensor " + listed[i].at("name").get<std::string>() +
                               " has unexpected size");
    }
    read_floats(is, st.tensors[i]);
  }
  if (!is) fail(ErrorCode::kIo, "truncated checkpoint payload in " + path.string());
  model.load_state(st);
  if (header_out) *header_out = header;
  return model;
}

}  // namespace dopeseg::models
