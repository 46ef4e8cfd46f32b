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

#include "dopeseg/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>
#include <sstream>

namespace dopeseg::training {

namespace {

void require(bool cond, const std::string& what) {
  if (!cond) fail(ErrorCode::kValidation, "training." + what);
}

void check_samples(std::span<const dataset::SliceSample* const> samples, const char* what) {
  if (samples.empty()) fail(ErrorCode::kValidation, std::string(what) + " set is empty");
  const int rows = samples[0]->image.rows;
  const int cols = samples[0]->image.cols;
  for (const auto* s : samples) {
    if (s->image.rows != rows || s->image.cols != cols || !s->image.same_shape(s->mask)) {
      fail(ErrorCode::kShape, std::string(what) + " set mixes slice shapes (" + s->key() + ")");
    }
  }
}

// Mean per-sample dice loss and IoU over a set, in inference mode.
std::pair<double, double> validation_pass(models::Model& model,
                                          std::span<const dataset::SliceSample* const> val,
                                          const TrainConfig& config) {
  double loss_sum = 0.0;
  double iou_sum = 0.0;
  const std::size_t step = static_cast<std::size_t>(config.batch_size);
  for (std::size_t start = 0; start < val.size(); start += step) {
    const auto chunk = val.subspan(start, std::min(step, val.size() - start));
    const nn::Tensor x = stack_images(chunk);
    const nn::Tensor y = stack_masks(chunk);
    const nn::Tensor p = model.forward(x);
    loss_sum += dice_loss(p, y, config.smooth) * static_cast<double>(chunk.size());
    const std::size_t per = p.shape.plane();
    for (std::size_t n = 0; n < chunk.size(); ++n) {
      const auto pred = models::binarize(
          std::span<const float>(p.data.data() + n * per, per), config.threshold);
      iou_sum += metrics::iou(pred, chunk[n]->mask.data);
    }
  }
  return {loss_sum / static_cast<double>(val.size()), iou_sum / static_cast<double>(val.size())};
}

std::vector<nn::Var> trainable(const models::Model& model) {
  std::vector<nn::Var> out;
  for (const auto& p : model.parameters()) out.push_back(p.var);
  return out;
}

// One forward/backward/update; returns the batch loss.
double optimisation_step(models::Model& model, Adam& adam, const nn::Tensor& x,
                         const nn::Tensor& y, const TrainConfig& config) {
  adam.zero_grad();
  const nn::Var probs = model.forward_graph(nn::constant(x), true);
  const nn::Var loss = nn::dice_loss(probs, y, static_cast<float>(config.smooth));
  const double value = nn::scalar(loss);
  if (!std::isfinite(value)) {
    fail(ErrorCode::kNumeric,
         "non-finite training loss; lower the learning rate or check the data");
  }
  nn::backward(loss);
  adam.step();
  return value;
}

}  // namespace

void TrainConfig::validate() const {
  require(batch_size >= 1, "batch_size: must be >= 1");
  require(max_epochs >= 1, "max_epochs: must be >= 1");
  require(optimizer == "adam", "optimizer: only \"adam\" is supported");
  require(loss == "dice", "loss: only \"dice\" is supported");
  require(learning_rate > 0 && std::isfinite(learning_rate), "learning_rate: must be > 0");
  require(beta1 >= 0 && beta1 < 1, "beta1: must lie in [0, 1)");
  require(beta2 >= 0 && beta2 < 1, "beta2: must lie in [0, 1)");
  require(adam_epsilon > 0, "adam_epsilon: must be > 0");
  require(early_stop_patience >= 1, "early_stop_patience: must be >= 1");
  require(early_stop_patience < max_epochs || max_epochs == 1,
          "early_stop_patience: must be < max_epochs");
  require(early_stop_min_delta >= 0, "early_stop_min_delta: must be >= 0");
  require(smooth > 0, "smooth: must be > 0");
  require(threshold > 0 && threshold < 1, "threshold: must lie in (0, 1)");
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"batch_size", c.batch_size},
          {"max_epochs", c.max_epochs},
          {"optimizer", c.optimizer},
          {"learning_rate", c.learning_rate},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"adam_epsilon", c.adam_epsilon},
          {"early_stop_patience", c.early_stop_patience},
          {"early_stop_min_delta", c.early_stop_min_delta},
          {"loss", c.loss},
          {"smooth", c.smooth},
          {"threshold", c.threshold},
          {"seed", c.seed}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.batch_size = j.value("batch_size", c.batch_size);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.optimizer = j.value("optimizer", c.optimizer);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.adam_epsilon = j.value("adam_epsilon", c.adam_epsilon);
  c.early_stop_patience = j.value("early_stop_patience", c.early_stop_patience);
  c.early_stop_min_delta = j.value("early_stop_min_delta", c.early_stop_min_delta);
  c.loss = j.value("loss", c.loss);
  c.smooth = j.value("smooth", c.smooth);
  c.threshold = j.value("threshold", c.threshold);
  c.seed = j.value("seed", c.seed);
  return c;
}

std::string TrainHistory::to_csv() const {
  std::ostringstream os;
  os << "epoch,train_loss,val_loss,val_iou\n";
  char buf[128];
  for (const auto& e : epochs) {
    std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f,%.6f\n", e.epoch, e.train_loss, e.val_loss,
                  e.val_iou);
    os << buf;
  }
  return os.str();
}

EarlyStopping::EarlyStopping(int patience, double min_delta)
    : patience_(patience),
      min_delta_(min_delta),
      best_loss_(std::numeric_limits<double>::infinity()) {
  if (patience < 1) fail(ErrorCode::kInvalidArgument, "patience must be >= 1");
}

bool EarlyStopping::update(int epoch, double loss) {
  improved_ = loss < best_loss_ - min_delta_;
  if (improved_) {
    best_loss_ = loss;
    best_epoch_ = epoch;
    wait_ = 0;
    return false;
  }
  return ++wait_ >= patience_;
}

Adam::Adam(std::vector<nn::Var> params, const TrainConfig& config)
    : params_(std::move(params)),
      lr_(config.learning_rate),
      beta1_(config.beta1),
      beta2_(config.beta2),
      eps_(config.adam_epsilon) {
  for (const auto& p : params_) {
    m_.emplace_back(p->value.data.size(), 0.0f);
    v_.emplace_back(p->value.data.size(), 0.0f);
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

void Adam::step() {
  ++step_count_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(step_count_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(step_count_));
  const auto lr_t = static_cast<float>(lr_ * std::sqrt(c2) / c1);
  const auto b1 = static_cast<float>(beta1_);
  const auto b2 = static_cast<float>(beta2_);
  // Epsilon is applied to the bias-corrected second moment as in Keras.
  const auto eps_hat = static_cast<float>(eps_ * std::sqrt(c2));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& p = *params_[k];
    if (p.grad.empty()) continue;
    float* w = p.value.data.data();
    const float* g = p.grad.data();
    float* m = m_[k].data();
    float* v = v_[k].data();
    const std::size_t n = p.value.data.size();
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = b1 * m[i] + (1.0f - b1) * g[i];
      v[i] = b2 * v[i] + (1.0f - b2) * g[i] * g[i];
      w[i] -= lr_t * m[i] / (std::sqrt(v[i]) + eps_hat);
    }
  }
}

double dice_loss(const nn::Tensor& pred, const nn::Tensor& target, double smooth) {
  nn::NoGradGuard guard;
  return nn::scalar(nn::dice_loss(nn::constant(pred), target, static_cast<float>(smooth)));
}

nn::Tensor stack_images(std::span<const dataset::SliceSample* const> samples) {
  if (samples.empty()) fail(ErrorCode::kInvalidArgument, "cannot stack an empty batch");
  const int h = samples[0]->image.rows;
  const int w = samples[0]->image.cols;
  nn::Tensor t({static_cast<int>(samples.size()), 1, h, w});
  for (std::size_t n = 0; n < samples.size(); ++n) {
    const auto& img = samples[n]->image;
    if (img.rows != h || img.cols != w) fail(ErrorCode::kShape, "batch mixes slice shapes");
    std::copy(img.data.begin(), img.data.end(), t.sample(static_cast<int>(n)));
  }
  return t;
}

nn::Tensor stack_masks(std::span<const dataset::SliceSample* const> samples) {
  if (samples.empty()) fail(ErrorCode::kInvalidArgument, "cannot stack an empty batch");
  const int h = samples[0]->mask.rows;
  const int w = samples[0]->mask.cols;
  nn::Tensor t({static_cast<int>(samples.size()), 1, h, w});
  for (std::size_t n = 0; n < samples.size(); ++n) {
    const auto& m = samples[n]->mask;
    if (m.rows != h || m.cols != w) fail(ErrorCode::kShape, "batch mixes mask shapes");
    float* dst = t.sample(static_cast<int>(n));
    for (std::size_t i = 0; i < m.size(); ++i) dst[i] = m.data[i] ? 1.0f : 0.0f;
  }
  return t;
}

TrainHistory train(models::Model& model, std::span<const dataset::SliceSample* const> train_set,
                   std::span<const dataset::SliceSample* const> val_set,
                   const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  check_samples(train_set, "training");
  check_samples(val_set, "validation");
  std::set<std::string> train_patients;
  for (const auto* s : train_set) train_patients.insert(s->patient_id);
  for (const auto* s : val_set) {
    if (train_patients.count(s->patient_id)) {
      fail(ErrorCode::kValidation,
           "patient " + s->patient_id + " appears in both training and validation sets");
    }
  }

  Adam adam(trainable(model), config);
  EarlyStopping stopper(config.early_stop_patience, config.early_stop_min_delta);
  TrainHistory history;
  models::ModelState best = model.state();
  std::vector<const dataset::SliceSample*> order(train_set.begin(), train_set.end());
  const std::size_t step = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    Rng rng(derive_seed(config.seed, "epoch/" + std::to_string(epoch)));
    dataset::shuffle(order, rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += step) {
      const std::span<const dataset::SliceSample* const> chunk(
          order.data() + start, std::min(step, order.size() - start));
      const double loss =
          optimisation_step(model, adam, stack_images(chunk), stack_masks(chunk), config);
      loss_sum += loss * static_cast<double>(chunk.size());
    }
    const auto [val_loss, val_iou] = validation_pass(model, val_set, config);
    if (!std::isfinite(val_loss)) {
      fail(ErrorCode::kNumeric, "non-finite validation loss at epoch " + std::to_string(epoch));
    }
    EpochRecord rec{epoch, loss_sum / static_cast<double>(order.size()), val_loss, val_iou};
    history.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
    const bool stop = stopper.update(epoch, val_loss);
    if (stopper.improved()) best = model.state();
    history.stopped_epoch = epoch;
    if (stop) break;
  }
  history.best_epoch = stopper.best_epoch();
  model.load_state(best);
  return history;
}

std::vector<double> fit_batch(models::Model& model, const nn::Tensor& images,
                              const nn::Tensor& masks, const TrainConfig& config, int steps) {
  config.validate();
  Adam adam(trainable(model), config);
  std::vector<double> losses;
  for (int i = 0; i < steps; ++i) losses.push_back(optimisation_step(model, adam, images, masks, config));
  return losses;
}

std::vector<metrics::SliceRecord> evaluate(const Predictor& predict,
                                           std::span<const dataset::SliceSample* const> samples,
                                           double threshold, int batch_size) {
  if (samples.empty()) fail(ErrorCode::kValidation, "evaluation set is empty");
  if (batch_size < 1) fail(ErrorCode::kInvalidArgument, "batch_size must be >= 1");
  std::vector<metrics::SliceRecord> out;
  out.reserve(samples.size());
  const std::size_t step = static_cast<std::size_t>(batch_size);
  for (std::size_t start = 0; start < samples.size(); start += step) {
    const auto chunk = samples.subspan(start, std::min(step, samples.size() - start));
    const nn::Tensor x = stack_images(chunk);
    const nn::Tensor p = predict(x);
    if (!(p.shape == x.shape)) {
      fail(ErrorCode::kShape, "predictor returned " + nn::to_string(p.shape) + " for input " +
                                  nn::to_string(x.shape));
    }
    const std::size_t per = p.shape.plane();
    for (std::size_t n = 0; n < chunk.size(); ++n) {
      const auto* s = chunk[n];
      const auto pred =
          models::binarize(std::span<const float>(p.data.data() + n * per, per), threshold);
      metrics::SliceRecord r;
      r.patient_id = s->patient_id;
      r.plane = s->plane;
      r.domain = s->domain;
      r.slice_index = s->slice_index;
      r.iou = metrics::iou(pred, s->mask.data);
      r.dsc = metrics::dsc(pred, s->mask.data);
      out.push_back(std::move(r));
    }
  }
  return out;
}

std::vector<metrics::SliceRecord> evaluate(models::Model& model,
                                           std::span<const dataset::SliceSample* const> samples,
                                           double threshold, int batch_size) {
  return evaluate([&model](const nn::Tensor& x) { return model.forward(x); }, samples, threshold,
                  batch_size);
}

}  // namespace dopeseg::training
