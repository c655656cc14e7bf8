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

// Metrics: accuracies, channel importance (two-player SAGE and permutation
// importance), leakage, intervention curves and representation diagnostics.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "cream/data.hpp"
#include "cream/model.hpp"
#include "cream/numcore.hpp"

namespace cream {

// ---------------------------------------------------------------------------
// Accuracy

struct Evaluation {
  double task_accuracy = 0.0;        // percent
  Vector concept_accuracy;           // percent, per binarized concept
  double mean_concept_accuracy = 0.0;  // percent
};

// Binary decision per concept: argmax inside activation groups, 0.5 elsewhere.
inline std::vector<int> concept_decisions(const CreamModel& model, std::span<const double> concepts) {
  std::vector<int> out(concepts.size(), 0);
  std::vector<bool> grouped(concepts.size(), false);
  for (const auto& g : model.activation_groups) {
    std::size_t best = g.front();
    for (std::size_t i : g) {
      grouped[i] = true;
      if (concepts[i] > concepts[best]) best = i;
    }
    out[best] = 1;
  }
  for (std::size_t i = 0; i < concepts.size(); ++i)
    if (!grouped[i]) out[i] = concepts[i] >= 0.5 ? 1 : 0;
  return out;
}

inline Evaluation evaluate(const CreamModel& model, const LabeledDataset& ds, SideChannel side) {
  validate_dataset(ds, model.graph);
  const std::size_t k = model.num_concepts();
  Evaluation e;
  e.concept_accuracy.assign(k, 0.0);
  if (ds.size() == 0) {
    e.task_accuracy = e.mean_concept_accuracy = std::numeric_limits<double>::quiet_NaN();
    return e;
  }
  std::size_t task_hits = 0;
  std::vector<std::size_t> hits(k, 0);
  for (std::size_t n = 0; n < ds.size(); ++n) {
    const auto t = forward(model, ds.features.row(n), Phase::infer, side);
    task_hits += argmax(t.task_logits) == ds.tasks[n];
    const auto d = concept_decisions(model, t.concepts);
    for (std::size_t i = 0; i < k; ++i) hits[i] += d[i] == static_cast<int>(ds.concepts(n, i));
  }
  const double dn = static_cast<double>(ds.size());
  e.task_accuracy = 100.0 * static_cast<double>(task_hits) / dn;
  double sum = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    e.concept_accuracy[i] = 100.0 * static_cast<double>(hits[i]) / dn;
    sum += e.concept_accuracy[i];
  }
  e.mean_concept_accuracy = k ? sum / static_cast<double>(k) : std::numeric_limits<double>::quiet_NaN();
  return e;
}

// Classifier inputs [Ĉ; ẑ_Y] per sample (Ĉ only when d_Y = 0).
inline Matrix classifier_inputs(const CreamModel& model, const LabeledDataset& ds, SideChannel side) {
  const std::size_t width = model.num_concepts() + (model.has_side_channel() ? model.num_tasks() : 0);
  Matrix m(ds.size(), width);
  for (std::size_t n = 0; n < ds.size(); ++n) {
    const auto in = forward(model, ds.features.row(n), Phase::infer, side).classifier_input();
    std::copy(in.begin(), in.end(), m.row(n).begin());
  }
  return m;
}

// Maps a classifier input row to class probabilities.
using ProbabilityFn = std::function<Vector(std::span<const double>)>;

inline ProbabilityFn classifier_probabilities(const CreamModel& model) {
  return [&model](std::span<const double> in) { return softmax(model.classifier.forward(in)); };
}

// ---------------------------------------------------------------------------
// Two-player SAGE over the concept channel (columns [0, split)) and the side
// channel (columns [split, width)).

struct SageConfig {
  double reference_fraction = 0.2;
  std::size_t initial_draws = 64;
  std::size_t max_draws = 4096;
  double convergence_threshold = 5e-2;  // absolute change of CCI between doublings
};

struct ChannelImportance {
  double phi_concept = 0.0;
  double phi_side = 0.0;
  double v_concept = 0.0;  // v({c})
  double v_side = 0.0;     // v({y})
  double v_full = 0.0;     // v(D)
  double cci = std::numeric_limits<double>::quiet_NaN();
  bool valid = false;  // false when v(D) <= 0
  bool converged = false;
  std::size_t draws = 0;
  double efficiency_gap = 0.0;  // |φ_c + φ_y - v(D)|
  SageConfig settings;
};

// Exact Shapley values of a two-player game with v(∅) = 0.
inline ChannelImportance two_player_shapley(double v_concept, double v_side, double v_full) {
  ChannelImportance r;
  r.v_concept = v_concept;
  r.v_side = v_side;
  r.v_full = v_full;
  r.phi_concept = 0.5 * (v_concept + (v_full - v_side));
  r.phi_side = 0.5 * (v_side + (v_full - v_concept));
  r.efficiency_gap = std::abs(r.phi_concept + r.phi_side - v_full);
  r.valid = v_full > 0.0;
  if (r.valid) r.cci = r.phi_concept / (r.phi_concept + r.phi_side);
  return r;
}

inline ChannelImportance channel_sage(const ProbabilityFn& predict, const Matrix& inputs,
                                      std::span<const std::size_t> labels, std::size_t split,
                                      const SageConfig& cfg, Rng& rng) {
  const std::size_t n = inputs.rows();
  const std::size_t width = inputs.cols();
  if (labels.size() != n) throw DataError("SAGE: label count does not match stored inputs");
  if (n == 0) throw DataError("SAGE: no stored inputs");
  if (split > width) throw UsageError("SAGE: channel split beyond input width");
  if (!(cfg.reference_fraction > 0.0 && cfg.reference_fraction <= 1.0))
    throw ConfigError("SAGE reference fraction must lie in (0, 1]");
  if (cfg.initial_draws < 1) throw ConfigError("SAGE needs at least one draw");

  const std::size_t ref_n =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(cfg.reference_fraction *
                                                                      static_cast<double>(n))));
  auto perm = rng.permutation(n);
  perm.resize(ref_n);

  std::vector<Vector> full(n);
  for (std::size_t i = 0; i < n; ++i) full[i] = predict(inputs.row(i));
  const std::size_t l = full.front().size();

  Vector empty(l, 0.0);
  for (std::size_t r : perm)
    for (std::size_t c = 0; c < l; ++c) empty[c] += full[r][c];
  for (double& v : empty) v /= static_cast<double>(ref_n);

  double loss_empty = 0.0, loss_full = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    loss_empty += clamped_cross_entropy(empty, labels[i]);
    loss_full += clamped_cross_entropy(full[i], labels[i]);
  }
  loss_empty /= static_cast<double>(n);
  loss_full /= static_cast<double>(n);
  const double v_full = loss_empty - loss_full;

  if (split == width) {  // no side channel: dummy player
    ChannelImportance r = two_player_shapley(v_full, 0.0, v_full);
    r.converged = true;
    r.settings = cfg;
    return r;
  }

  std::vector<Vector> sum_c(n, Vector(l, 0.0)), sum_y(n, Vector(l, 0.0));
  Vector mixed(width);
  std::size_t draws = 0;
  auto extend = [&](std::size_t target) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto x = inputs.row(i);
      for (std::size_t d = draws; d < target; ++d) {
        const auto ref = inputs.row(perm[rng.index(ref_n)]);
        std::copy(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(split), mixed.begin());
        std::copy(ref.begin() + static_cast<std::ptrdiff_t>(split), ref.end(),
                  mixed.begin() + static_cast<std::ptrdiff_t>(split));
        const Vector pc = predict(mixed);
        std::copy(ref.begin(), ref.begin() + static_cast<std::ptrdiff_t>(split), mixed.begin());
        std::copy(x.begin() + static_cast<std::ptrdiff_t>(split), x.end(),
                  mixed.begin() + static_cast<std::ptrdiff_t>(split));
        const Vector py = predict(mixed);
        for (std::size_t c = 0; c < l; ++c) {
          sum_c[i][c] += pc[c];
          sum_y[i][c] += py[c];
        }
      }
    }
    draws = target;
  };
  auto estimate = [&]() {
    double lc = 0.0, ly = 0.0;
    Vector p(l);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < l; ++c) p[c] = sum_c[i][c] / static_cast<double>(draws);
      lc += clamped_cross_entropy(p, labels[i]);
      for (std::size_t c = 0; c < l; ++c) p[c] = sum_y[i][c] / static_cast<double>(draws);
      ly += clamped_cross_entropy(p, labels[i]);
    }
    return two_player_shapley(loss_empty - lc / static_cast<double>(n),
                              loss_empty - ly / static_cast<double>(n), v_full);
  };

  extend(cfg.initial_draws);
  ChannelImportance cur = estimate();
  bool converged = false;
  while (draws * 2 <= cfg.max_draws) {
    extend(draws * 2);
    ChannelImportance next = estimate();
    const double delta = std::abs(next.cci - cur.cci);
    cur = next;
    if (std::isfinite(delta) && delta < cfg.convergence_threshold) {
      converged = true;
      break;
    }
  }
  cur.converged = converged;
  cur.draws = draws;
  cur.settings = cfg;
  return cur;
}

inline ChannelImportance channel_sage(const CreamModel& model, const LabeledDataset& ds,
                                      const SageConfig& cfg, Rng& rng) {
  const Matrix inputs = classifier_inputs(model, ds, SideChannel::enabled);
  return channel_sage(classifier_probabilities(model), inputs, ds.tasks, model.num_concepts(), cfg,
                      rng);
}

// ---------------------------------------------------------------------------
// Permutation importance of a whole channel, as a fraction of accuracy.

enum class Channel { concepts, side };

inline double stored_accuracy(const ProbabilityFn& predict, const Matrix& inputs,
                              std::span<const std::size_t> labels) {
  std::size_t hit = 0;
  for (std::size_t i = 0; i < inputs.rows(); ++i) hit += argmax(predict(inputs.row(i))) == labels[i];
  return static_cast<double>(hit) / static_cast<double>(inputs.rows());
}

inline double permutation_importance(const ProbabilityFn& predict, const Matrix& inputs,
                                     std::span<const std::size_t> labels, std::size_t begin,
                                     std::size_t end, std::size_t iterations, Rng& rng) {
  if (labels.size() != inputs.rows()) throw DataError("PFI: label count does not match stored inputs");
  if (inputs.rows() == 0) throw DataError("PFI: no stored inputs");
  if (begin >= end) return 0.0;
  if (iterations < 1) throw ConfigError("PFI needs at least one iteration");
  // Integer hit counts keep an unchanged accuracy at exactly zero importance.
  const std::size_t n = inputs.rows();
  std::size_t base_hits = 0;
  for (std::size_t i = 0; i < n; ++i) base_hits += argmax(predict(inputs.row(i))) == labels[i];
  std::size_t permuted_hits = 0;
  Vector row(inputs.cols());
  for (std::size_t it = 0; it < iterations; ++it) {
    const auto perm = rng.permutation(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto x = inputs.row(i);
      const auto donor = inputs.row(perm[i]);
      std::copy(x.begin(), x.end(), row.begin());
      std::copy(donor.begin() + static_cast<std::ptrdiff_t>(begin),
                donor.begin() + static_cast<std::ptrdiff_t>(end),
                row.begin() + static_cast<std::ptrdiff_t>(begin));
      permuted_hits += argmax(predict(row)) == labels[i];
    }
  }
  const double diff = static_cast<double>(base_hits * iterations) - static_cast<double>(permuted_hits);
  return diff / static_cast<double>(n * iterations);
}

inline double permutation_importance(const CreamModel& model, const LabeledDataset& ds,
                                     Channel channel, std::size_t iterations, Rng& rng) {
  if (channel == Channel::side && !model.has_side_channel()) return 0.0;
  const Matrix inputs = classifier_inputs(model, ds, SideChannel::enabled);
  const std::size_t k = model.num_concepts();
  const std::size_t begin = channel == Channel::concepts ? 0 : k;
  const std::size_t end = channel == Channel::concepts ? k : inputs.cols();
  return permutation_importance(classifier_probabilities(model), inputs, ds.tasks, begin, end,
                                iterations, rng);
}

// ---------------------------------------------------------------------------
// Leakage

struct LeakageReport {
  double model_accuracy = 0.0;     // percent, side-channel disabled
  double baseline_accuracy = 0.0;  // percent, true concepts -> task
  double leakage = 0.0;            // Λ, percentage points
};

inline LeakageReport leakage(double model_accuracy, double baseline_accuracy) {
  return {model_accuracy, baseline_accuracy, std::max(model_accuracy - baseline_accuracy, 0.0)};
}

// ---------------------------------------------------------------------------
// Intervention curves

enum class InterventionPolicy { random_direct_first, random_all };

inline std::string to_string(InterventionPolicy p) {
  return p == InterventionPolicy::random_direct_first ? "random-direct-first" : "random-all";
}

struct InterventionCurve {
  InterventionPolicy policy = InterventionPolicy::random_direct_first;
  bool grouped = false;
  std::vector<std::uint64_t> seeds;
  Vector mean;  // percent, index b = number of interventions
  Vector std;   // sample standard deviation over seeds

  void write_csv(std::ostream& out) const {
    out << "interventions,mean_accuracy,std_accuracy\n";
    for (std::size_t b = 0; b < mean.size(); ++b)
      out << b << ',' << format_double(mean[b]) << ',' << format_double(std[b]) << '\n';
  }
};

// Intervention units: every concept, or mutex groups plus free concepts.
inline std::vector<std::vector<std::size_t>> intervention_units(const CreamModel& model, bool grouped) {
  std::vector<std::vector<std::size_t>> units;
  const std::size_t k = model.num_concepts();
  if (!grouped) {
    for (std::size_t i = 0; i < k; ++i) units.push_back({i});
    return units;
  }
  for (const auto& g : model.graph.groups) units.push_back(g);
  for (std::size_t i = 0; i < k; ++i)
    if (!model.graph.group_of[i]) units.push_back({i});
  return units;
}

inline InterventionCurve intervention_curve(const CreamModel& model, const LabeledDataset& ds,
                                            InterventionPolicy policy, bool grouped,
                                            std::span<const std::uint64_t> seeds, std::size_t budget,
                                            SideChannel side) {
  validate_dataset(ds, model.graph);
  if (seeds.empty()) throw ConfigError("intervention curve needs at least one seed");
  if (ds.size() == 0) throw DataError("intervention curve needs a non-empty dataset");
  if (model.config.mode == ConceptMode::soft && !model.percentiles.present())
    throw InterventionError("soft interventions need the percentile table");
  const auto units = intervention_units(model, grouped);
  if (budget > units.size())
    throw UsageError("intervention budget " + std::to_string(budget) + " exceeds the " +
                     std::to_string(units.size()) + (grouped ? " intervention groups" : " concepts"));

  const auto direct = direct_concepts(model.graph);
  std::vector<bool> unit_direct(units.size(), false);
  for (std::size_t u = 0; u < units.size(); ++u)
    for (std::size_t i : units[u])
      if (std::binary_search(direct.begin(), direct.end(), i)) unit_direct[u] = true;

  InterventionCurve curve{policy, grouped, {seeds.begin(), seeds.end()}, {}, {}};
  std::vector<Vector> per_seed;
  for (std::uint64_t seed : seeds) {
    Rng base(seed);
    std::vector<std::size_t> hits(budget + 1, 0);
    for (std::size_t n = 0; n < ds.size(); ++n) {
      Rng r = base.derive(n);
      auto order = r.permutation(units.size());
      if (policy == InterventionPolicy::random_direct_first)
        std::stable_partition(order.begin(), order.end(), [&](std::size_t u) { return unit_direct[u]; });
      ForwardTrace t = forward(model, ds.features.row(n), Phase::infer, side);
      hits[0] += argmax(t.task_logits) == ds.tasks[n];
      std::vector<Intervention> ivs;
      for (std::size_t b = 1; b <= budget; ++b) {
        for (std::size_t i : units[order[b - 1]])
          ivs.push_back({i, static_cast<int>(ds.concepts(n, i))});
        ForwardTrace ti = t;
        intervene_trace(model, ti, ivs);
        hits[b] += argmax(ti.task_logits) == ds.tasks[n];
      }
    }
    Vector acc(budget + 1);
    for (std::size_t b = 0; b <= budget; ++b)
      acc[b] = 100.0 * static_cast<double>(hits[b]) / static_cast<double>(ds.size());
    per_seed.push_back(std::move(acc));
  }
  curve.mean.assign(budget + 1, 0.0);
  curve.std.assign(budget + 1, 0.0);
  const double s = static_cast<double>(per_seed.size());
  for (std::size_t b = 0; b <= budget; ++b) {
    for (const auto& a : per_seed) curve.mean[b] += a[b];
    curve.mean[b] /= s;
    if (per_seed.size() > 1) {
      double ss = 0.0;
      for (const auto& a : per_seed) ss += (a[b] - curve.mean[b]) * (a[b] - curve.mean[b]);
      curve.std[b] = std::sqrt(ss / (s - 1.0));
    }
  }
  return curve;
}

// ---------------------------------------------------------------------------
// Representation diagnostics

inline constexpr double kDeadVariance = 1e-10;

struct RepresentationReport {
  std::vector<std::size_t> live;  // indices into z = [z_C; z_Y]
  std::vector<std::size_t> dead;
  Matrix correlation;             // live x live
  Matrix side_covariance;         // L x L over ẑ_Y; empty when d_Y = 0
  Vector side_variance;
};

inline Matrix covariance(const std::vector<Vector>& rows) {
  const std::size_t d = rows.empty() ? 0 : rows.front().size();
  Matrix c(d, d);
  if (rows.size() < 2) return c;
  Vector mean(d, 0.0);
  for (const auto& r : rows)
    for (std::size_t i = 0; i < d; ++i) mean[i] += r[i];
  for (double& m : mean) m /= static_cast<double>(rows.size());
  for (const auto& r : rows)
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = i; j < d; ++j) c(i, j) += (r[i] - mean[i]) * (r[j] - mean[j]);
  const double denom = static_cast<double>(rows.size() - 1);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i; j < d; ++j) c(j, i) = c(i, j) = c(i, j) / denom;
  return c;
}

inline RepresentationReport representation_diagnostics(const CreamModel& model,
                                                       const LabeledDataset& ds) {
  std::vector<Vector> z, side;
  for (std::size_t n = 0; n < ds.size(); ++n) {
    const auto t = forward(model, ds.features.row(n), Phase::infer, SideChannel::enabled);
    Vector row = t.z_concept;
    row.insert(row.end(), t.z_side.begin(), t.z_side.end());
    z.push_back(std::move(row));
    if (model.has_side_channel()) side.push_back(t.side_out);
  }
  RepresentationReport rep;
  const Matrix cov = covariance(z);
  for (std::size_t i = 0; i < cov.rows(); ++i)
    (cov(i, i) < kDeadVariance ? rep.dead : rep.live).push_back(i);
  rep.correlation = Matrix(rep.live.size(), rep.live.size());
  for (std::size_t a = 0; a < rep.live.size(); ++a)
    for (std::size_t b = 0; b < rep.live.size(); ++b) {
      const std::size_t i = rep.live[a], j = rep.live[b];
      rep.correlation(a, b) = a == b ? 1.0 : cov(i, j) / std::sqrt(cov(i, i) * cov(j, j));
    }
  if (model.has_side_channel()) {
    rep.side_covariance = covariance(side);
    for (std::size_t i = 0; i < rep.side_covariance.rows(); ++i)
      rep.side_variance.push_back(rep.side_covariance(i, i));
  }
  return rep;
}

inline void write_matrix_csv(std::ostream& out, const Matrix& m) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) out << (j ? "," : "") << format_double(m(i, j));
    out << '\n';
  }
}

}  // namespace cream
