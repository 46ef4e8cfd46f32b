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

// Dice-loss training with Adam and plateau early stopping, plus slice-wise
// evaluation.

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dopeseg/dataset.hpp"
#include "dopeseg/metrics.hpp"
#include "dopeseg/models.hpp"
#include "dopeseg/nn.hpp"

namespace dopeseg::training {

struct TrainConfig {
  int batch_size = 32;
  int max_epochs = 50;
  std::string optimizer = "adam";
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-7;
  int early_stop_patience = 7;
  double early_stop_min_delta = 1e-4;
  std::string loss = "dice";
  double smooth = 1.0;
  double threshold = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_iou = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  int stopped_epoch = 0;
  int best_epoch = 0;

  /// Header epoch,train_loss,val_loss,val_iou.
  std::string to_csv() const;
};

/// Keras-style plateau rule: an epoch improves when its loss is below the
/// best so far by more than min_delta; training stops once `patience`
/// consecutive epochs fail to improve.
class EarlyStopping {
 public:
  EarlyStopping(int patience, double min_delta);

  /// Feeds the loss of 1-based `epoch`; returns true when training should stop.
  bool update(int epoch, double loss);
  int best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_loss_; }
  bool improved() const { return improved_; }

 private:
  int patience_;
  double min_delta_;
  int best_epoch_ = 0;
  double best_loss_;
  int wait_ = 0;
  bool improved_ = false;
};

class Adam {
 public:
  Adam(std::vector<nn::Var> params, const TrainConfig& config);
  void zero_grad();
  void step();

 private:
  std::vector<nn::Var> params_;
  std::vector<std::vector<float>> m_;
  std::vector<std::vector<float>> v_;
  double lr_;
  double beta1_;
  double beta2_;
  double eps_;
  long step_count_ = 0;
};

/// Numeric value of the soft dice loss (same definition as nn::dice_loss).
double dice_loss(const nn::Tensor& pred, const nn::Tensor& target, double smooth);

/// Stacks slices into N x 1 x H x W image and mask tensors.
nn::Tensor stack_images(std::span<const dataset::SliceSample* const> samples);
nn::Tensor stack_masks(std::span<const dataset::SliceSample* const> samples);

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Trains in place and leaves the model holding its best-epoch weights.
/// Train and validation sets must not share a patient.
TrainHistory train(models::Model& model, std::span<const dataset::SliceSample* const> train_set,
                   std::span<const dataset::SliceSample* const> val_set,
                   const TrainConfig& config, const EpochCallback& on_epoch = {});

/// Repeated optimisation steps on one fixed batch; returns the loss before
/// each step.
std::vector<double> fit_batch(models::Model& model, const nn::Tensor& images,
                              const nn::Tensor& masks, const TrainConfig& config, int steps);

/// Maps an N x 1 x H x W batch onto probabilities of the same shape.
using Predictor = std::function<nn::Tensor(const nn::Tensor&)>;

/// One record per slice in input order: forward, binarize, compare.
std::vector<metrics::SliceRecord> evaluate(const Predictor& predict,
                                           std::span<const dataset::SliceSample* const> samples,
                                           double threshold, int batch_size = 16);
std::vector<metrics::SliceRecord> evaluate(models::Model& model,
                                           std::span<const dataset::SliceSample* const> samples,
                                           double threshold, int batch_size = 16);

}  // namespace dopeseg::training
