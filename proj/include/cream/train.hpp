/*
 * Copyright 2026 The CREAM Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Joint training: L = L_Y + λ Σ L_C with Adam over every unmasked parameter,
// plus the linear true-concept -> task baseline.

#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "cream/data.hpp"
#include "cream/model.hpp"
#include "cream/numcore.hpp"

namespace cream {

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 256;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  bool shuffle = true;
  std::size_t eval_every = 1;  // validation cadence in epochs; 0 disables
  std::size_t early_stopping_patience = 0;  // 0 disables

  void validate() const {
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be > 0");
  }
};

struct TrainHistory {
  std::vector<double> total_loss, task_loss, concept_loss;
  std::vector<double> train_accuracy, val_accuracy;  // percent; NaN when not evaluated

  std::size_t epochs() const { return total_loss.size(); }

  void write_csv(std::ostream& out) const {
    out << "epoch,total_loss,task_loss,concept_loss,train_accuracy,val_accuracy\n";
    for (std::size_t e = 0; e < epochs(); ++e)
      out << e + 1 << ',' << format_double(total_loss[e]) << ',' << format_double(task_loss[e])
          << ',' << format_double(concept_loss[e]) << ',' << format_double(train_accuracy[e])
          << ',' << format_double(val_accuracy[e]) << '\n';
  }

  friend bool operator==(const TrainHistory&, const TrainHistory&) = default;
};

struct JointLoss {
  double total = 0.0;
  double task = 0.0;
  double concepts = 0.0;  // Σ over concepts, before λ
  Vector d_task_logits;
  Vector d_concept_logits;  // already scaled by λ
};

inline JointLoss joint_loss(const ForwardTrace& t, std::span<const double> concept_targets,
                            std::size_t task_target, double concept_weight, const Groups& groups) {
  if (concept_targets.size() != t.concept_logits.size())
    throw DataError("concept target length does not match K");
  auto task = task_cross_entropy(t.task_logits, task_target);
  auto con = grouped_concept_loss(t.concept_logits, concept_targets, groups);
  JointLoss j;
  j.task = task.value;
  j.concepts = con.value;
  j.total = j.task + concept_weight * j.concepts;
  j.d_task_logits = std::move(task.grad);
  j.d_concept_logits = std::move(con.grad);
  for (double& g : j.d_concept_logits) g *= concept_weight;
  return j;
}

inline double task_accuracy(const CreamModel& model, const LabeledDataset& ds, SideChannel side) {
  if (ds.size() == 0) return std::numeric_limits<double>::quiet_NaN();
  std::size_t hit = 0;
  for (std::size_t n = 0; n < ds.size(); ++n)
    hit += argmax(forward(model, ds.features.row(n), Phase::infer, side).task_logits) == ds.tasks[n];
  return 100.0 * static_cast<double>(hit) / static_cast<double>(ds.size());
}

inline double mean_loss(const CreamModel& model, const LabeledDataset& ds) {
  double s = 0.0;
  for (std::size_t n = 0; n < ds.size(); ++n) {
    const auto t = forward(model, ds.features.row(n), Phase::infer, SideChannel::enabled);
    s += joint_loss(t, ds.concepts.row(n), ds.tasks[n], model.config.concept_weight,
                    model.activation_groups).total;
  }
  return s / static_cast<double>(ds.size());
}

// Trains `model` in place; deterministic for a given (model, data, config).
inline TrainHistory train(CreamModel& model, const LabeledDataset& train_set,
                          const LabeledDataset* val_set, const TrainConfig& tc) {
  tc.validate();
  validate_dataset(train_set, model.graph);
  if (train_set.num_features() != model.input_dim)
    throw DataError("training features have width " + std::to_string(train_set.num_features()) +
                    ", model expects " + std::to_string(model.input_dim));
  Rng rng(tc.seed);
  Rng order_rng = rng.derive(1);
  Rng dropout_rng = rng.derive(2);

  AdamConfig adam{tc.learning_rate};
  std::vector<std::vector<AdamState>> states;
  for (auto* b : model.blocks()) {
    states.emplace_back();
    for (const auto& l : b->layers()) states.back().emplace_back(l, adam);
  }

  TrainHistory h;
  const std::size_t n = train_set.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::optional<CreamModel> best;
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;

  for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
    if (tc.shuffle) std::shuffle(order.begin(), order.end(), order_rng.engine());
    double sum_total = 0.0, sum_task = 0.0, sum_concept = 0.0;
    for (std::size_t start = 0, batch = 0; start < n; start += tc.batch_size, ++batch) {
      const std::size_t end = std::min(n, start + tc.batch_size);
      ModelGrads grads = zero_grads(model);
      for (std::size_t i = start; i < end; ++i) {
        const std::size_t s = order[i];
        const auto t = forward(model, train_set.features.row(s), Phase::train,
                               SideChannel::enabled, &dropout_rng);
        const auto loss = joint_loss(t, train_set.concepts.row(s), train_set.tasks[s],
                                     model.config.concept_weight, model.activation_groups);
        if (!std::isfinite(loss.total))
          throw TrainingError("non-finite loss at epoch " + std::to_string(epoch + 1) +
                              ", batch " + std::to_string(batch + 1));
        sum_total += loss.total;
        sum_task += loss.task;
        sum_concept += loss.concepts;
        backward(model, t, loss.d_task_logits, loss.d_concept_logits, grads);
      }
      const double scale = 1.0 / static_cast<double>(end - start);
      auto blocks = model.blocks();
      for (std::size_t b = 0; b < blocks.size(); ++b)
        for (std::size_t l = 0; l < blocks[b]->layers().size(); ++l) {
          grads[b][l].scale(scale);
          try {
            adam_step(blocks[b]->layers()[l], grads[b][l], states[b][l]);
          } catch (const TrainingError& e) {
            throw TrainingError(std::string(e.what()) + " at epoch " + std::to_string(epoch + 1) +
                                ", batch " + std::to_string(batch + 1));
          }
        }
    }
    const double dn = static_cast<double>(n);
    h.total_loss.push_back(sum_total / dn);
    h.task_loss.push_back(sum_task / dn);
    h.concept_loss.push_back(sum_concept / dn);
    h.train_accuracy.push_back(task_accuracy(model, train_set, SideChannel::enabled));
    const bool eval_now = val_set && val_set->size() > 0 && tc.eval_every > 0 &&
                          ((epoch + 1) % tc.eval_every == 0 || epoch + 1 == tc.epochs);
    h.val_accuracy.push_back(eval_now ? task_accuracy(model, *val_set, SideChannel::enabled)
                                      : std::numeric_limits<double>::quiet_NaN());
    ++model.epochs_seen;

    if (tc.early_stopping_patience > 0 && eval_now) {
      const double v = mean_loss(model, *val_set);
      if (v < best_val) {
        best_val = v;
        best = model;
        since_best = 0;
      } else if (++since_best >= tc.early_stopping_patience) {
        break;
      }
    }
  }
  if (best) {
    const std::size_t seen = model.epochs_seen;
    model = std::move(*best);
    model.epochs_seen = seen;
  }
  return h;
}

// ---------------------------------------------------------------------------
// True-concept baseline: one affine layer + softmax on ground-truth concepts.

struct ConceptBaseline {
  MaskedAffine classifier;
  double test_accuracy = 0.0;  // percent

  std::size_t predict(std::span<const double> concepts) const {
    return argmax(classifier.forward(concepts));
  }
};

inline double baseline_accuracy(const ConceptBaseline& b, const LabeledDataset& ds) {
  if (ds.size() == 0) return std::numeric_limits<double>::quiet_NaN();
  std::size_t hit = 0;
  for (std::size_t n = 0; n < ds.size(); ++n) hit += b.predict(ds.concepts.row(n)) == ds.tasks[n];
  return 100.0 * static_cast<double>(hit) / static_cast<double>(ds.size());
}

inline ConceptBaseline train_concept_baseline(const LabeledDataset& train_set,
                                              const LabeledDataset& test_set,
                                              const TrainConfig& tc) {
  tc.validate();
  const std::size_t k = train_set.num_concepts();
  const std::size_t l = train_set.num_tasks();
  Rng rng(tc.seed);
  Rng order_rng = rng.derive(1);
  ConceptBaseline b{MaskedAffine::dense(k, l)};
  b.classifier.init(rng);
  AdamState state(b.classifier, AdamConfig{tc.learning_rate});

  const std::size_t n = train_set.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
    if (tc.shuffle) std::shuffle(order.begin(), order.end(), order_rng.engine());
    for (std::size_t start = 0; start < n; start += tc.batch_size) {
      const std::size_t end = std::min(n, start + tc.batch_size);
      AffineGrad g = b.classifier.zero_grad();
      for (std::size_t i = start; i < end; ++i) {
        const auto x = train_set.concepts.row(order[i]);
        const auto loss = task_cross_entropy(b.classifier.forward(x), train_set.tasks[order[i]]);
        b.classifier.backward(x, loss.grad, g);
      }
      g.scale(1.0 / static_cast<double>(end - start));
      adam_step(b.classifier, g, state);
    }
  }
  b.test_accuracy = baseline_accuracy(b, test_set);
  return b;
}

}  // namespace cream
