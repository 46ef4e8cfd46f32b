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

// Encoder-decoder segmentation networks mapping an N x 1 x H x W slice batch
// to per-pixel bladder probabilities of the same shape.
//
// All six architectures share the same primitives: 3x3 convolutions with
// batch normalisation and ReLU (RRDB blocks use LeakyReLU and no
// normalisation), 2x2 max-pooling for downsampling, nearest-neighbour
// upsampling followed by a convolution, and a final 1x1 convolution with a
// sigmoid. Weights are He-normal; every tensor draws from its own stream
// derived from (seed, tensor name).

#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "dopeseg/nn.hpp"

namespace dopeseg::models {

enum class Architecture { kUnet, kUnetPP, kHalfUnet, kDcUnet, kAttentionUnet, kRrdbUnet };

std::string_view to_string(Architecture a);
Architecture parse_architecture(std::string_view s);
const std::vector<Architecture>& all_architectures();

struct ModelSpec {
  Architecture architecture = Architecture::kUnet;
  int depth = 4;
  int base_width = 32;
  std::string init = "he_normal";
  std::string output_activation = "sigmoid";

  void validate() const;
  /// Throws kShape unless both sides are divisible by 2^depth.
  void check_input(int height, int width) const;
  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

nlohmann::json to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const nlohmann::json& j);

struct NamedTensor {
  std::string name;
  nn::Var var;
};

struct NamedBuffer {
  std::string name;
  nn::BatchNormStats* stats;
};

/// Owns parameters and normalisation statistics for one network instance.
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed) : seed_(seed) {}

  nn::Var conv_weight(const std::string& name, int cout, int cin, int k);
  nn::Var zeros(const std::string& name, int n);
  nn::Var ones(const std::string& name, int n);
  nn::BatchNormStats& batch_norm_stats(const std::string& name, int channels);

  const std::vector<NamedTensor>& parameters() const { return params_; }
  std::vector<NamedBuffer> buffers() const;

 private:
  nn::Var add(const std::string& name, nn::Tensor t);

  std::uint64_t seed_;
  std::vector<NamedTensor> params_;
  std::vector<std::pair<std::string, std::unique_ptr<nn::BatchNormStats>>> stats_;
};

/// Intermediate tensors captured during a forward pass, keyed by name.
using Trace = std::vector<std::pair<std::string, nn::Tensor>>;

class Network {
 public:
  virtual ~Network() = default;
  virtual nn::Var forward(const nn::Var& x, bool training, Trace* trace) = 0;
};

/// Flat copy of every parameter and statistic, in registration order.
struct ModelState {
  std::vector<std::vector<float>> tensors;
};

class Model {
 public:
  static Model build(const ModelSpec& spec, std::uint64_t seed);

  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelSpec& spec() const { return spec_; }
  std::uint64_t seed() const { return seed_; }
  std::size_t parameter_count() const;
  const std::vector<NamedTensor>& parameters() const { return store_->parameters(); }
  std::vector<NamedBuffer> buffers() const { return store_->buffers(); }

  /// Inference-mode probabilities; deterministic and side-effect free.
  nn::Tensor forward(const nn::Tensor& batch, Trace* trace = nullptr);
  /// Differentiable pass; training mode updates normalisation statistics.
  nn::Var forward_graph(const nn::Var& batch, bool training, Trace* trace = nullptr);

  ModelState state() const;
  void load_state(const ModelState& state);
  Model clone() const;
  /// FNV-1a over all parameter bytes.
  std::uint64_t parameter_hash() const;

 private:
  Model(ModelSpec spec, std::uint64_t seed);

  ModelSpec spec_;
  std::uint64_t seed_ = 0;
  std::unique_ptr<ParamStore> store_;
  std::unique_ptr<Network> net_;
};

/// Probability >= threshold; threshold must lie in (0,1).
std::vector<std::uint8_t> binarize(std::span<const float> probabilities, double threshold);

/// Single-file checkpoint: magic "DSCK", u32 version, u32 header length, JSON
/// header, then little-endian float32 payload for each tensor listed in the
/// header in order.
void save_checkpoint(const Model& model, const std::filesystem::path& path,
                     const nlohmann::json& extra_header = {});
Model load_checkpoint(const std::filesystem::path& path, nlohmann::json* header = nullptr);

}  // namespace dopeseg::models
