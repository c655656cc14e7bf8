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

// The concept reasoning network.
//
//   features -> [backbone] -> splitter -> z_C (d_C*K) | z_Y (d_Y)
//   z_C -> concept block (masked by M_C) -> concept logits -> activations Ĉ
//   z_Y -> side projector (affine + ReLU) -> ẑ_Y (L), dropped as a whole
//   [Ĉ ; ẑ_Y] -> classifier (masked by M_Y) -> task logits
//
// The classifier is the only consumer of Ĉ, so an intervention on Ĉ never
// propagates to other concepts.

#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cream/graph.hpp"
#include "cream/masks.hpp"
#include "cream/numcore.hpp"

namespace cream {

inline constexpr int kCheckpointVersion = 1;

enum class ConceptMode { soft, hard };
enum class Phase { train, infer };
enum class SideChannel { enabled, disabled };
enum class SideState { active, dropped, disabled };

inline std::string to_string(ConceptMode m) { return m == ConceptMode::soft ? "soft" : "hard"; }
inline std::string to_string(SideState s) {
  switch (s) {
    case SideState::active: return "active";
    case SideState::dropped: return "dropped";
    default: return "disabled";
  }
}

struct CreamConfig {
  std::size_t exo_dims = 7;     // d_C
  std::size_t side_dims = 20;   // d_Y; 0 removes the side-channel
  double dropout = 0.9;         // whole side-channel drop probability p
  double concept_weight = 1.0;  // λ
  std::size_t concept_depth = 0;
  std::size_t task_depth = 0;
  ConceptMode mode = ConceptMode::soft;
  bool mutex_softmax = true;        // false: sigmoid on every concept
  std::size_t backbone_width = 0;   // 0: identity backbone
  bool rescale_side_channel = false;  // inverse-(1-p) scaling of active ẑ_Y in training
  bool dense_concept_adjacency = false;
  bool dense_task_adjacency = false;
  std::uint64_t seed = 0;

  void validate() const {
    if (exo_dims < 1) throw ConfigError("d_C must be >= 1");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout p must lie in [0, 1)");
    if (!(concept_weight > 0.0)) throw ConfigError("concept weight λ must be > 0");
  }
};

struct PercentileTable {
  Vector low;   // 5th percentile per concept
  Vector high;  // 95th percentile per concept
  bool present() const { return !low.empty(); }
};

struct CreamModel {
  CreamConfig config;
  BinarizedGraph graph;
  AdjacencyPair adjacency;  // after ablations
  MaskStack concept_masks;
  MaskStack task_masks;
  std::size_t input_dim = 0;

  std::optional<MaskedMlp> backbone;
  MaskedMlp splitter;
  std::optional<MaskedMlp> side_projector;
  MaskedMlp concept_block;
  MaskedMlp classifier;

  Groups activation_groups;
  PercentileTable percentiles;
  std::size_t epochs_seen = 0;

  std::size_t num_concepts() const { return graph.num_concepts(); }
  std::size_t num_tasks() const { return graph.num_tasks(); }
  bool has_side_channel() const { return config.side_dims > 0; }

  std::vector<MaskedMlp*> blocks() {
    std::vector<MaskedMlp*> b;
    if (backbone) b.push_back(&*backbone);
    b.push_back(&splitter);
    if (side_projector) b.push_back(&*side_projector);
    b.push_back(&concept_block);
    b.push_back(&classifier);
    return b;
  }
  std::vector<const MaskedMlp*> blocks() const {
    std::vector<const MaskedMlp*> b;
    for (auto* p : const_cast<CreamModel*>(this)->blocks()) b.push_back(p);
    return b;
  }
};

using ModelGrads = std::vector<std::vector<AffineGrad>>;

inline ModelGrads zero_grads(const CreamModel& model) {
  ModelGrads g;
  for (const auto* b : model.blocks()) g.push_back(b->zero_grads());
  return g;
}

inline AdjacencyPair ablated_adjacency(const BinarizedGraph& bg, const CreamConfig& cfg) {
  AdjacencyPair a = build_adjacency(bg);
  if (cfg.dense_concept_adjacency)
    a.concept_adj = Matrix(bg.num_concepts(), bg.num_concepts(), 1.0);
  if (cfg.dense_task_adjacency) a.task_adj = Matrix(bg.num_concepts(), bg.num_tasks(), 1.0);
  return a;
}

inline CreamModel init_model(const CreamConfig& config, const BinarizedGraph& bg,
                             std::size_t input_dim, Rng& rng) {
  config.validate();
  const std::size_t k = bg.num_concepts();
  const std::size_t l = bg.num_tasks();
  if (k == 0 || l == 0) throw ConfigError("model needs at least one concept and one task");
  if (input_dim == 0) throw ConfigError("input dimension must be positive");

  CreamModel m;
  m.config = config;
  m.graph = bg;
  m.input_dim = input_dim;
  m.adjacency = ablated_adjacency(bg, config);

  const Matrix concept_pattern = expand_concept_mask(m.adjacency.concept_adj, config.exo_dims);
  m.concept_masks = factorize(
      concept_pattern, std::vector<std::size_t>(config.concept_depth, config.exo_dims * k));

  Matrix task_pattern;
  if (m.has_side_channel()) {
    task_pattern = build_task_mask(m.adjacency.task_adj);
  } else {
    task_pattern = m.adjacency.task_adj.transposed();
    for (std::size_t t = 0; t < l; ++t) {
      bool any = false;
      for (std::size_t i = 0; i < k; ++i) any = any || task_pattern(t, i) != 0.0;
      if (!any)
        throw ConfigError("task '" + bg.tasks[t] +
                          "' has neither concept parents nor a side-channel");
    }
  }
  const std::size_t task_hidden = m.has_side_channel() ? k + l : k;
  m.task_masks = factorize(task_pattern, std::vector<std::size_t>(config.task_depth, task_hidden));

  std::size_t z_dim = input_dim;
  if (config.backbone_width > 0) {
    m.backbone = MaskedMlp({Matrix(config.backbone_width, input_dim, 1.0)}, Activation::relu,
                           Activation::relu);
    z_dim = config.backbone_width;
  }
  m.splitter = MaskedMlp({Matrix(config.exo_dims * k + config.side_dims, z_dim, 1.0)},
                         Activation::identity, Activation::identity);
  if (m.has_side_channel())
    m.side_projector =
        MaskedMlp({Matrix(l, config.side_dims, 1.0)}, Activation::relu, Activation::relu);
  m.concept_block = MaskedMlp(m.concept_masks.masks, Activation::relu, Activation::identity);
  m.classifier = MaskedMlp(m.task_masks.masks, Activation::relu, Activation::identity);

  if (config.mutex_softmax) m.activation_groups = bg.groups;
  for (auto* b : m.blocks()) b->init(rng);
  return m;
}

// ---------------------------------------------------------------------------
// Concept activations

// Soft: group softmax / sigmoid. Hard: argmax one-hot per group, round(σ)
// elsewhere.
inline Vector activate_concepts(const CreamModel& model, std::span<const double> logits) {
  Vector soft = softmax_over_groups(logits, model.activation_groups);
  if (model.config.mode == ConceptMode::soft) return soft;
  Vector hard(soft.size());
  std::vector<char> grouped(soft.size(), 0);
  for (const auto& g : model.activation_groups) {
    std::size_t best = g.front();
    for (std::size_t i : g) {
      grouped[i] = 1;
      if (logits[i] > logits[best]) best = i;
    }
    hard[best] = 1.0;
  }
  for (std::size_t i = 0; i < soft.size(); ++i)
    if (!grouped[i]) hard[i] = soft[i] >= 0.5 ? 1.0 : 0.0;
  return hard;
}

// dL/dlogits given dL/dĈ. The hard mode uses the straight-through surrogate:
// the soft Jacobian (softmax per group, σ' elsewhere).
inline Vector concept_activation_vjp(const CreamModel& model, std::span<const double> logits,
                                     std::span<const double> d_concepts) {
  const Vector s = softmax_over_groups(logits, model.activation_groups);
  Vector dl(logits.size());
  std::vector<char> grouped(logits.size(), 0);
  for (const auto& g : model.activation_groups) {
    double dot = 0.0;
    for (std::size_t i : g) dot += s[i] * d_concepts[i];
    for (std::size_t i : g) {
      grouped[i] = 1;
      dl[i] = s[i] * (d_concepts[i] - dot);
    }
  }
  for (std::size_t i = 0; i < logits.size(); ++i)
    if (!grouped[i]) dl[i] = s[i] * (1.0 - s[i]) * d_concepts[i];
  return dl;
}

// ---------------------------------------------------------------------------
// Forward / backward

struct ForwardTrace {
  Vector features;
  Vector z;               // backbone output
  Vector z_concept;       // z_C
  Vector z_side;          // z_Y
  Vector side_out;        // ẑ_Y (zeros unless active; empty when d_Y = 0)
  Vector concept_logits;  // l̂_C
  Vector concepts;        // Ĉ
  Vector task_logits;
  Vector task_probs;
  SideState side_state = SideState::disabled;
  double side_scale = 1.0;

  MaskedMlp::Trace backbone_trace, splitter_trace, side_trace, concept_trace, classifier_trace;

  Vector classifier_input() const {
    Vector in(concepts);
    in.insert(in.end(), side_out.begin(), side_out.end());
    return in;
  }
};

// Task logits from concept activations and the side-channel output. Every
// prediction path (inference, interventions, importance) goes through here.
inline Vector classify(const CreamModel& model, std::span<const double> concepts,
                       std::span<const double> side_out,
                       MaskedMlp::Trace* trace = nullptr) {
  Vector in(concepts.begin(), concepts.end());
  if (model.has_side_channel()) in.insert(in.end(), side_out.begin(), side_out.end());
  return model.classifier.forward(in, trace);
}

inline ForwardTrace forward(const CreamModel& model, std::span<const double> features, Phase phase,
                            SideChannel side, Rng* rng = nullptr) {
  if (features.size() != model.input_dim)
    throw ConfigError("forward: feature length " + std::to_string(features.size()) +
                      " != model input width " + std::to_string(model.input_dim));
  ForwardTrace t;
  t.features.assign(features.begin(), features.end());
  t.z = model.backbone ? model.backbone->forward(features, &t.backbone_trace) : t.features;

  const Vector split = model.splitter.forward(t.z, &t.splitter_trace);
  const std::size_t zc = model.config.exo_dims * model.num_concepts();
  t.z_concept.assign(split.begin(), split.begin() + static_cast<std::ptrdiff_t>(zc));
  t.z_side.assign(split.begin() + static_cast<std::ptrdiff_t>(zc), split.end());

  t.concept_logits = model.concept_block.forward(t.z_concept, &t.concept_trace);
  t.concepts = activate_concepts(model, t.concept_logits);

  if (!model.has_side_channel()) {
    t.side_state = SideState::disabled;
  } else {
    t.side_state = side == SideChannel::disabled ? SideState::disabled : SideState::active;
    if (phase == Phase::train && t.side_state == SideState::active) {
      if (!rng) throw UsageError("training-phase forward needs a random generator");
      if (rng->bernoulli(model.config.dropout)) t.side_state = SideState::dropped;
      else if (model.config.rescale_side_channel) t.side_scale = 1.0 / (1.0 - model.config.dropout);
    }
    if (t.side_state == SideState::active) {
      t.side_out = model.side_projector->forward(t.z_side, &t.side_trace);
      for (double& v : t.side_out) v *= t.side_scale;
    } else {
      t.side_out.assign(model.num_tasks(), 0.0);
    }
  }

  t.task_logits = classify(model, t.concepts, t.side_out, &t.classifier_trace);
  t.task_probs = softmax(t.task_logits);
  return t;
}

// Gradients of a loss with the given dL/d(task logits) and an extra
// dL/d(concept logits) term (the concept loss). Accumulates into `grads`.
inline void backward(const CreamModel& model, const ForwardTrace& t,
                     std::span<const double> d_task_logits,
                     std::span<const double> d_concept_logits, ModelGrads& grads) {
  if (!t.classifier_trace.valid) throw UsageError("backward called without a forward trace");
  const std::size_t k = model.num_concepts();
  std::size_t slot = grads.size();
  auto take = [&]() -> std::vector<AffineGrad>& { return grads[--slot]; };

  const Vector d_in = model.classifier.backward(t.classifier_trace, d_task_logits, take());
  const std::span<const double> d_concepts(d_in.data(), k);

  Vector dl = concept_activation_vjp(model, t.concept_logits, d_concepts);
  for (std::size_t i = 0; i < k; ++i) dl[i] += d_concept_logits[i];
  const Vector dz_c = model.concept_block.backward(t.concept_trace, dl, take());

  Vector dz_y(model.config.side_dims, 0.0);
  if (model.side_projector) {
    auto& side_grads = take();
    if (t.side_state == SideState::active) {
      Vector d_side(d_in.begin() + static_cast<std::ptrdiff_t>(k), d_in.end());
      for (double& v : d_side) v *= t.side_scale;
      dz_y = model.side_projector->backward(t.side_trace, d_side, side_grads);
    }
  }

  Vector d_split(dz_c);
  d_split.insert(d_split.end(), dz_y.begin(), dz_y.end());
  const Vector dz = model.splitter.backward(t.splitter_trace, d_split, take());
  if (model.backbone) model.backbone->backward(t.backbone_trace, dz, take());
}

// ---------------------------------------------------------------------------
// Percentiles and interventions

// Linear-interpolation empirical quantile over a sorted sample.
inline double quantile_sorted(const Vector& sorted, double q) {
  if (sorted.empty()) throw DataError("quantile of an empty sample");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

inline PercentileTable percentiles_of(const std::vector<Vector>& activations) {
  if (activations.empty()) throw DataError("cannot compute percentiles of an empty dataset");
  const std::size_t k = activations.front().size();
  PercentileTable p{Vector(k), Vector(k)};
  Vector column(activations.size());
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t n = 0; n < activations.size(); ++n) column[n] = activations[n][c];
    std::sort(column.begin(), column.end());
    p.low[c] = quantile_sorted(column, 0.05);
    p.high[c] = quantile_sorted(column, 0.95);
  }
  return p;
}

// Stores the 5th/95th percentiles of predicted activations over `features`
// (the training split) in the model.
inline const PercentileTable& compute_percentiles(CreamModel& model, const Matrix& features) {
  if (features.rows() == 0) throw DataError("cannot compute percentiles of an empty dataset");
  std::vector<Vector> acts;
  acts.reserve(features.rows());
  for (std::size_t n = 0; n < features.rows(); ++n)
    acts.push_back(forward(model, features.row(n), Phase::infer, SideChannel::disabled).concepts);
  model.percentiles = percentiles_of(acts);
  return model.percentiles;
}

struct InterventionError : UsageError {
  using UsageError::UsageError;
};

// Ground-truth value for one concept; style follows the model's concept mode
// (percentile values for soft concepts, exact 0/1 for hard concepts).
struct Intervention {
  std::size_t concept_index = 0;
  int truth = 0;
};

// One intervention on a whole mutex group: `active` on, siblings off.
inline std::vector<Intervention> group_intervention(const CreamModel& model, std::size_t group,
                                                    std::size_t active) {
  if (group >= model.graph.groups.size()) throw InterventionError("unknown mutex group");
  const auto& members = model.graph.groups[group];
  if (std::find(members.begin(), members.end(), active) == members.end())
    throw InterventionError("concept is not a member of group '" + model.graph.group_names[group] + "'");
  std::vector<Intervention> out;
  for (std::size_t i : members) out.push_back({i, i == active ? 1 : 0});
  return out;
}

inline void validate_interventions(const CreamModel& model,
                                   std::span<const Intervention> interventions) {
  const std::size_t k = model.num_concepts();
  std::vector<int> active_in_group(model.graph.groups.size(), 0);
  for (const auto& iv : interventions) {
    if (iv.concept_index >= k)
      throw InterventionError("unknown concept index " + std::to_string(iv.concept_index));
    if (iv.truth != 0 && iv.truth != 1) throw InterventionError("intervention truth must be 0 or 1");
    const auto g = model.graph.group_of[iv.concept_index];
    if (g && iv.truth == 1 && ++active_in_group[*g] > 1)
      throw InterventionError("two active concepts in mutex group '" + model.graph.group_names[*g] + "'");
  }
  if (model.config.mode == ConceptMode::soft && !interventions.empty() &&
      !model.percentiles.present())
    throw InterventionError("soft interventions need a percentile table; run compute_percentiles");
}

inline double intervention_value(const CreamModel& model, const Intervention& iv) {
  if (model.config.mode == ConceptMode::hard) return iv.truth ? 1.0 : 0.0;
  return iv.truth ? model.percentiles.high[iv.concept_index] : model.percentiles.low[iv.concept_index];
}

// Overwrites intervened entries of Ĉ on an existing trace and re-evaluates
// the classifier. Concept logits and other concepts are left untouched.
inline void intervene_trace(const CreamModel& model, ForwardTrace& t,
                            std::span<const Intervention> interventions) {
  validate_interventions(model, interventions);
  for (const auto& iv : interventions) t.concepts[iv.concept_index] = intervention_value(model, iv);
  t.task_logits = classify(model, t.concepts, t.side_out, &t.classifier_trace);
  t.task_probs = softmax(t.task_logits);
}

inline ForwardTrace apply_interventions(const CreamModel& model, std::span<const double> features,
                                        std::span<const Intervention> interventions,
                                        SideChannel side) {
  ForwardTrace t = forward(model, features, Phase::infer, side);
  intervene_trace(model, t, interventions);
  return t;
}

// ---------------------------------------------------------------------------
// Checkpoints

inline Json matrix_to_json(const Matrix& m) {
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.data()}};
}
inline Matrix matrix_from_json(const Json& j) {
  Matrix m(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
  auto data = j.at("data").get<std::vector<double>>();
  if (data.size() != m.rows() * m.cols()) throw DataError("checkpoint matrix size mismatch");
  m.data() = std::move(data);
  return m;
}

inline Json config_to_json(const CreamConfig& c) {
  return {{"exo_dims", c.exo_dims},
          {"side_dims", c.side_dims},
          {"dropout", c.dropout},
          {"concept_weight", c.concept_weight},
          {"concept_depth", c.concept_depth},
          {"task_depth", c.task_depth},
          {"mode", to_string(c.mode)},
          {"mutex_softmax", c.mutex_softmax},
          {"backbone_width", c.backbone_width},
          {"rescale_side_channel", c.rescale_side_channel},
          {"dense_concept_adjacency", c.dense_concept_adjacency},
          {"dense_task_adjacency", c.dense_task_adjacency},
          {"seed", c.seed}};
}

inline CreamConfig config_from_json(const Json& j) {
  CreamConfig c;
  c.exo_dims = j.at("exo_dims");
  c.side_dims = j.at("side_dims");
  c.dropout = j.at("dropout");
  c.concept_weight = j.at("concept_weight");
  c.concept_depth = j.at("concept_depth");
  c.task_depth = j.at("task_depth");
  c.mode = j.at("mode") == "hard" ? ConceptMode::hard : ConceptMode::soft;
  c.mutex_softmax = j.at("mutex_softmax");
  c.backbone_width = j.at("backbone_width");
  c.rescale_side_channel = j.at("rescale_side_channel");
  c.dense_concept_adjacency = j.at("dense_concept_adjacency");
  c.dense_task_adjacency = j.at("dense_task_adjacency");
  c.seed = j.at("seed");
  return c;
}

inline Json binarized_to_json(const BinarizedGraph& bg) {
  Json groups = Json::array();
  for (std::size_t g = 0; g < bg.groups.size(); ++g)
    groups.push_back({{"name", bg.group_names[g]}, {"members", bg.groups[g]}});
  return {{"concepts", bg.concepts},     {"tasks", bg.tasks},
          {"groups", groups},            {"concept_edges", bg.concept_edges},
          {"bidirected", bg.bidirected}, {"task_edges", bg.task_edges},
          {"fingerprint", bg.fingerprint}};
}

inline BinarizedGraph binarized_from_json(const Json& j) {
  BinarizedGraph bg;
  bg.concepts = j.at("concepts").get<std::vector<std::string>>();
  bg.tasks = j.at("tasks").get<std::vector<std::string>>();
  bg.group_of.assign(bg.concepts.size(), std::nullopt);
  for (const auto& g : j.at("groups")) {
    bg.group_names.push_back(g.at("name"));
    bg.groups.push_back(g.at("members").get<std::vector<std::size_t>>());
    for (std::size_t i : bg.groups.back()) bg.group_of.at(i) = bg.groups.size() - 1;
  }
  bg.concept_edges = j.at("concept_edges").get<std::vector<IndexPair>>();
  bg.bidirected = j.at("bidirected").get<std::vector<IndexPair>>();
  bg.task_edges = j.at("task_edges").get<std::vector<IndexPair>>();
  bg.fingerprint = j.at("fingerprint");
  return bg;
}

inline Json model_to_json(const CreamModel& m) {
  Json blocks = Json::array();
  for (const auto* b : m.blocks()) {
    Json layers = Json::array();
    for (const auto& l : b->layers())
      layers.push_back({{"weights", matrix_to_json(l.weights)},
                        {"bias", l.bias},
                        {"mask", matrix_to_json(l.mask)}});
    blocks.push_back(layers);
  }
  return {{"version", kCheckpointVersion},
          {"config", config_to_json(m.config)},
          {"graph_fingerprint", m.graph.fingerprint},
          {"graph", binarized_to_json(m.graph)},
          {"input_dim", m.input_dim},
          {"blocks", blocks},
          {"percentiles", {{"low", m.percentiles.low}, {"high", m.percentiles.high}}},
          {"epochs_seen", m.epochs_seen}};
}

// Rebuilds the architecture from config + graph, then restores parameters;
// stored masks must equal the rebuilt ones.
inline CreamModel model_from_json(const Json& j, const std::string& expected_fingerprint = {}) {
  if (j.at("version").get<int>() != kCheckpointVersion)
    throw DataError("unsupported checkpoint version");
  const std::string fp = j.at("graph_fingerprint");
  if (!expected_fingerprint.empty() && fp != expected_fingerprint)
    throw DataError("checkpoint graph fingerprint " + fp + " does not match graph " +
                    expected_fingerprint);
  Rng rng(0);
  CreamModel m = init_model(config_from_json(j.at("config")), binarized_from_json(j.at("graph")),
                            j.at("input_dim").get<std::size_t>(), rng);
  auto blocks = m.blocks();
  const Json& jb = j.at("blocks");
  if (jb.size() != blocks.size()) throw DataError("checkpoint block count mismatch");
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    auto& layers = blocks[b]->layers();
    if (jb[b].size() != layers.size()) throw DataError("checkpoint layer count mismatch");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      if (!(matrix_from_json(jb[b][i].at("mask")) == layers[i].mask))
        throw DataError("checkpoint mask does not match the graph-derived mask");
      layers[i].weights = matrix_from_json(jb[b][i].at("weights"));
      layers[i].bias = jb[b][i].at("bias").get<Vector>();
      if (layers[i].weights.rows() != layers[i].mask.rows() ||
          layers[i].weights.cols() != layers[i].mask.cols() ||
          layers[i].bias.size() != layers[i].mask.rows())
        throw DataError("checkpoint parameter shape mismatch");
      layers[i].apply_mask();
    }
  }
  m.percentiles.low = j.at("percentiles").at("low").get<Vector>();
  m.percentiles.high = j.at("percentiles").at("high").get<Vector>();
  m.epochs_seen = j.at("epochs_seen");
  return m;
}

inline void save_checkpoint(const CreamModel& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write checkpoint " + path);
  out << model_to_json(m).dump() << '\n';
}

inline CreamModel load_checkpoint(const std::string& path,
                                  const std::string& expected_fingerprint = {}) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read checkpoint " + path);
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::exception& e) {
    throw DataError("malformed checkpoint " + path + ": " + e.what());
  }
  return model_from_json(j, expected_fingerprint);
}

}  // namespace cream
