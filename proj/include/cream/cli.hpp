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

// Command-line front end. Every command that writes files puts them under
// --out together with a manifest.json; no timestamps are recorded, so equal
// inputs give byte-identical outputs.
//
// Config files hold one `key = value` per line (`#` starts a comment); keys
// are long flag names without the leading dashes. Precedence: flags, then
// the config file, then built-in defaults.

#pragma once

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "cream/data.hpp"
#include "cream/graph.hpp"
#include "cream/interpret.hpp"
#include "cream/masks.hpp"
#include "cream/model.hpp"
#include "cream/service.hpp"
#include "cream/train.hpp"

namespace cream {

inline constexpr const char* kVersion = "1.0.0";
inline constexpr int kDatasetFormatVersion = 1;

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Ablations

struct AblationFlags {
  bool dense_concept_adjacency = false;
  bool dense_task_adjacency = false;
  bool sigmoid_only = false;
  bool no_side_channel = false;
};

inline AblationFlags parse_ablations(const std::vector<std::string>& names) {
  AblationFlags f;
  for (const auto& n : names) {
    if (n == "dense-concept-adjacency") f.dense_concept_adjacency = true;
    else if (n == "dense-task-adjacency") f.dense_task_adjacency = true;
    else if (n == "sigmoid-only") f.sigmoid_only = true;
    else if (n == "no-side-channel") f.no_side_channel = true;
    else throw UsageError("unknown ablation '" + n + "'");
  }
  return f;
}

inline CreamConfig apply_ablations(CreamConfig c, const AblationFlags& f) {
  if (f.dense_concept_adjacency) c.dense_concept_adjacency = true;
  if (f.dense_task_adjacency) c.dense_task_adjacency = true;
  if (f.sigmoid_only) c.mutex_softmax = false;
  if (f.no_side_channel) c.side_dims = 0;
  return c;
}

struct AblationVariant {
  std::string name;
  CreamConfig config;
};

// Side-channel-free variants: {softmax, sigmoid} x {structured, dense A_Y, dense A_C}.
inline std::vector<AblationVariant> ablation_matrix(const CreamConfig& base) {
  std::vector<AblationVariant> out;
  for (bool sigmoid : {false, true}) {
    const std::string act = sigmoid ? "sigmoid" : "softmax";
    AblationFlags f;
    f.no_side_channel = true;
    f.sigmoid_only = sigmoid;
    out.push_back({act + "/no-side-channel", apply_ablations(base, f)});
    AblationFlags cc = f;
    cc.dense_task_adjacency = true;
    out.push_back({act + "/only-concept-concept", apply_ablations(base, cc)});
    AblationFlags ct = f;
    ct.dense_concept_adjacency = true;
    out.push_back({act + "/only-concept-task", apply_ablations(base, ct)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Options

struct CliOptions {
  std::string config_file, out, data, graph, checkpoint, split = "test";
  std::string variant = "incomplete", policy = "random-direct-first", metric = "accuracy";
  std::string host = "127.0.0.1", static_dir, concept_activation = "softmax", mode = "soft";
  std::string dropout_list = "0.9", dc_list = "7", depth_list = "0";
  std::vector<std::string> ablate;
  std::size_t n = 10000, n_val = 1000, n_test = 10000, features = 16;
  std::size_t exo_dims = 7, side_dims = 20, concept_depth = 0, task_depth = 0, backbone_width = 0;
  std::size_t epochs = 50, batch_size = 256, patience = 0, eval_every = 1;
  std::size_t seeds = 3, pfi_iterations = 100, baseline_epochs = 50, initial_draws = 64, max_draws = 4096;
  long long budget = -1, explain = -1;
  double noise = 0.3, flip = 0.0, dropout = 0.9, concept_weight = 1.0, lr = 1e-3, baseline_lr = 1e-2;
  double reference_fraction = 0.2, convergence = 5e-2;
  bool no_side_channel = false, rescale = false, grouped = false, masks = false;
  std::uint64_t seed = 0;
  int port = 8080;

  Json to_json() const {
    return {{"data", data},
            {"graph", graph},
            {"checkpoint", checkpoint},
            {"split", split},
            {"variant", variant},
            {"policy", policy},
            {"metric", metric},
            {"concept_activation", concept_activation},
            {"mode", mode},
            {"dropout_list", dropout_list},
            {"dc_list", dc_list},
            {"depth_list", depth_list},
            {"ablate", ablate},
            {"n", n},
            {"n_val", n_val},
            {"n_test", n_test},
            {"features", features},
            {"exo_dims", exo_dims},
            {"side_dims", side_dims},
            {"concept_depth", concept_depth},
            {"task_depth", task_depth},
            {"backbone_width", backbone_width},
            {"epochs", epochs},
            {"batch_size", batch_size},
            {"patience", patience},
            {"eval_every", eval_every},
            {"seeds", seeds},
            {"pfi_iterations", pfi_iterations},
            {"baseline_epochs", baseline_epochs},
            {"baseline_lr", baseline_lr},
            {"initial_draws", initial_draws},
            {"max_draws", max_draws},
            {"budget", budget},
            {"explain", explain},
            {"noise", noise},
            {"flip", flip},
            {"dropout", dropout},
            {"concept_weight", concept_weight},
            {"lr", lr},
            {"reference_fraction", reference_fraction},
            {"convergence", convergence},
            {"no_side_channel", no_side_channel},
            {"rescale_side_channel", rescale},
            {"grouped", grouped},
            {"masks", masks},
            {"seed", seed}};
  }
};

inline CreamConfig model_config(const CliOptions& o) {
  CreamConfig c;
  c.exo_dims = o.exo_dims;
  c.side_dims = o.side_dims;
  c.dropout = o.dropout;
  c.concept_weight = o.concept_weight;
  c.concept_depth = o.concept_depth;
  c.task_depth = o.task_depth;
  c.mode = o.mode == "hard" ? ConceptMode::hard : ConceptMode::soft;
  c.mutex_softmax = o.concept_activation != "sigmoid";
  c.backbone_width = o.backbone_width;
  c.rescale_side_channel = o.rescale;
  c.seed = o.seed;
  AblationFlags f = parse_ablations(o.ablate);
  if (o.no_side_channel) f.no_side_channel = true;
  c = apply_ablations(c, f);
  c.validate();
  return c;
}

inline TrainConfig train_config(const CliOptions& o) {
  TrainConfig t;
  t.epochs = o.epochs;
  t.batch_size = o.batch_size;
  t.learning_rate = o.lr;
  t.seed = o.seed;
  t.early_stopping_patience = o.patience;
  t.eval_every = o.eval_every;
  return t;
}

// ---------------------------------------------------------------------------
// File helpers

inline std::string read_text(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw DataError("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw DataError("cannot write " + p.string());
  out << text;
}

inline void write_json(const fs::path& p, const Json& j) { write_text(p, j.dump(2) + "\n"); }

inline std::string matrix_csv(const Matrix& m) {
  std::ostringstream os;
  write_matrix_csv(os, m);
  return os.str();
}

inline fs::path prepare_out(const std::string& out) {
  if (out.empty()) throw UsageError("--out is required for this command");
  fs::create_directories(out);
  return fs::path(out);
}

inline void write_manifest(const fs::path& dir, const std::string& command, const CliOptions& o,
                           const std::string& graph_fp) {
  const Json config = o.to_json();
  write_json(dir / "manifest.json",
             {{"command", command},
              {"config", config},
              {"config_hash", fingerprint_text(config.dump())},
              {"graph_fingerprint", graph_fp},
              {"seed", o.seed},
              {"versions",
               {{"cream", kVersion},
                {"checkpoint_format", kCheckpointVersion},
                {"dataset_format", kDatasetFormatVersion}}}});
}

inline ReasoningGraphSpec load_graph_file(const fs::path& p) { return parse_graph(read_text(p)); }

inline ReasoningGraphSpec resolve_graph(const CliOptions& o) {
  if (!o.graph.empty()) return load_graph_file(o.graph);
  if (!o.data.empty() && fs::exists(fs::path(o.data) / "graph.json"))
    return load_graph_file(fs::path(o.data) / "graph.json");
  throw UsageError("no graph: pass --graph or a --data directory containing graph.json");
}

inline LabeledDataset load_split(const CliOptions& o, const std::string& split, const BinarizedGraph& bg) {
  if (o.data.empty()) throw UsageError("--data is required for this command");
  LabeledDataset ds = load_dataset(fs::path(o.data) / (split + ".csv"), bg);
  if (!ds.graph_fingerprint.empty() && ds.graph_fingerprint != bg.fingerprint)
    throw FingerprintMismatch("dataset '" + split + "' was generated for graph " +
                              ds.graph_fingerprint + ", expected " + bg.fingerprint);
  return ds;
}

inline bool has_split(const CliOptions& o, const std::string& split) {
  return !o.data.empty() && fs::exists(fs::path(o.data) / (split + ".csv"));
}

inline CreamModel load_model(const CliOptions& o) {
  if (o.checkpoint.empty()) throw UsageError("--checkpoint is required for this command");
  return load_checkpoint(o.checkpoint);
}

template <class T>
std::vector<T> parse_list(const std::string& text, const char* flag) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::istringstream is(item);
    T v{};
    if (!(is >> v) || !is.eof()) throw UsageError(std::string("cannot parse '") + item + "' in " + flag);
    out.push_back(v);
  }
  if (out.empty()) throw UsageError(std::string(flag) + " needs at least one value");
  return out;
}

inline Json evaluation_json(const CreamModel& m, const Evaluation& e, bool side) {
  Json per = Json::object();
  for (std::size_t i = 0; i < m.num_concepts(); ++i) per[m.graph.concepts[i]] = e.concept_accuracy[i];
  return {{"side_channel", side},
          {"task_accuracy", e.task_accuracy},
          {"mean_concept_accuracy", e.mean_concept_accuracy},
          {"concept_accuracy", per}};
}

inline Json importance_json(const ChannelImportance& ci, double pci, double psi) {
  auto num = [](double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); };
  return {{"phi_concept", ci.phi_concept},
          {"phi_side", ci.phi_side},
          {"v_concept", ci.v_concept},
          {"v_side", ci.v_side},
          {"v_full", ci.v_full},
          {"cci", num(ci.cci)},
          {"valid", ci.valid},
          {"converged", ci.converged},
          {"draws", ci.draws},
          {"efficiency_gap", ci.efficiency_gap},
          {"reference_fraction", ci.settings.reference_fraction},
          {"convergence_threshold", ci.settings.convergence_threshold},
          {"pci", pci},
          {"psi", psi}};
}

// ---------------------------------------------------------------------------
// Commands

inline int cmd_gen_data(const CliOptions& o, std::ostream& out) {
  ApparelGenConfig g;
  g.variant = o.variant == "complete" ? ApparelVariant::complete : ApparelVariant::incomplete;
  g.n_train = o.n;
  g.n_val = o.n_val;
  g.n_test = o.n_test;
  g.feature_dim = o.features;
  g.noise = o.noise;
  g.flip_probability = o.flip;
  g.seed = o.seed;
  const auto data = generate_apparel(g);
  const fs::path dir = prepare_out(o.out);
  write_json(dir / "graph.json", to_json(data.spec));
  save_dataset(data.splits.train, dir / "train.csv");
  save_dataset(data.splits.val, dir / "val.csv");
  save_dataset(data.splits.test, dir / "test.csv");
  write_manifest(dir, "gen-data", o, data.graph.fingerprint);
  out << "wrote " << data.splits.train.size() << '/' << data.splits.val.size() << '/'
      << data.splits.test.size() << " samples to " << dir.string() << '\n';
  return 0;
}

inline int cmd_train(const CliOptions& o, std::ostream& out) {
  const auto spec = resolve_graph(o);
  const auto bg = binarize(spec);
  const auto train_set = load_split(o, "train", bg);
  std::optional<LabeledDataset> val;
  if (has_split(o, "val")) val = load_split(o, "val", bg);
  const CreamConfig cfg = model_config(o);
  const fs::path dir = prepare_out(o.out);

  Rng init_rng = Rng(o.seed).derive(100);
  CreamModel model = init_model(cfg, bg, train_set.num_features(), init_rng);
  const TrainHistory h = train(model, train_set, val ? &*val : nullptr, train_config(o));
  compute_percentiles(model, train_set.features);
  save_checkpoint(model, (dir / "checkpoint.json").string());

  std::ostringstream hist;
  h.write_csv(hist);
  write_text(dir / "history.csv", hist.str());

  Json metrics = {{"epochs", h.epochs()}, {"final_total_loss", h.total_loss.back()}};
  if (has_split(o, "test")) {
    const auto test = load_split(o, "test", bg);
    metrics["test"] = evaluation_json(model, evaluate(model, test, SideChannel::enabled), true);
    metrics["test_no_side_channel"] =
        evaluation_json(model, evaluate(model, test, SideChannel::disabled), false);
  }
  write_json(dir / "metrics.json", metrics);
  write_manifest(dir, "train", o, bg.fingerprint);
  out << metrics.dump(2) << '\n';
  return 0;
}

inline int cmd_eval(const CliOptions& o, std::ostream& out) {
  const CreamModel model = load_model(o);
  const auto ds = load_split(o, o.split, model.graph);
  const SideChannel side = o.no_side_channel ? SideChannel::disabled : SideChannel::enabled;
  Json result;
  std::string file;
  if (o.explain >= 0) {
    result = explain_dataset_sample(model, ds, static_cast<std::size_t>(o.explain), side);
    file = "explain.json";
  } else {
    const auto e = evaluate(model, ds, side);
    result = evaluation_json(model, e, side == SideChannel::enabled);
    file = "metrics.json";
    if (!o.out.empty()) {
      const fs::path dir = prepare_out(o.out);
      std::ostringstream csv;
      csv << "concept,accuracy\n";
      for (std::size_t i = 0; i < model.num_concepts(); ++i)
        csv << model.graph.concepts[i] << ',' << format_double(e.concept_accuracy[i]) << '\n';
      write_text(dir / "concept_accuracy.csv", csv.str());
    }
  }
  if (!o.out.empty()) {
    const fs::path dir = prepare_out(o.out);
    write_json(dir / file, result);
    write_manifest(dir, "eval", o, model.graph.fingerprint);
  }
  out << result.dump(2) << '\n';
  return 0;
}

inline int cmd_intervene(const CliOptions& o, std::ostream& out) {
  const CreamModel model = load_model(o);
  const auto ds = load_split(o, o.split, model.graph);
  if (o.seeds < 1) throw UsageError("--seeds must be >= 1");
  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < o.seeds; ++i) seeds.push_back(o.seed + i);
  const std::size_t units = intervention_units(model, o.grouped).size();
  const std::size_t budget = o.budget < 0 ? units : static_cast<std::size_t>(o.budget);
  const auto policy = o.policy == "random-all" ? InterventionPolicy::random_all
                                               : InterventionPolicy::random_direct_first;
  const auto curve = intervention_curve(model, ds, policy, o.grouped, seeds, budget,
                                        o.no_side_channel ? SideChannel::disabled : SideChannel::enabled);
  const fs::path dir = prepare_out(o.out);
  std::ostringstream csv;
  curve.write_csv(csv);
  write_text(dir / "curve.csv", csv.str());
  write_json(dir / "curve.json", {{"policy", to_string(curve.policy)},
                                  {"grouped", curve.grouped},
                                  {"seeds", curve.seeds},
                                  {"side_channel", !o.no_side_channel},
                                  {"mean", curve.mean},
                                  {"std", curve.std}});
  write_manifest(dir, "intervene", o, model.graph.fingerprint);
  out << csv.str();
  return 0;
}

inline int cmd_importance(const CliOptions& o, std::ostream& out) {
  const CreamModel model = load_model(o);
  const auto ds = load_split(o, o.split, model.graph);
  SageConfig sc;
  sc.reference_fraction = o.reference_fraction;
  sc.initial_draws = o.initial_draws;
  sc.max_draws = o.max_draws;
  sc.convergence_threshold = o.convergence;
  Rng base(o.seed);
  Rng sage_rng = base.derive(1), pci_rng = base.derive(2), psi_rng = base.derive(3);
  const auto ci = channel_sage(model, ds, sc, sage_rng);
  const double pci = permutation_importance(model, ds, Channel::concepts, o.pfi_iterations, pci_rng);
  const double psi = permutation_importance(model, ds, Channel::side, o.pfi_iterations, psi_rng);
  const auto rep = representation_diagnostics(model, ds);

  const fs::path dir = prepare_out(o.out);
  const Json imp = importance_json(ci, pci, psi);
  write_json(dir / "importance.json", imp);
  write_text(dir / "correlation.csv", matrix_csv(rep.correlation));
  if (model.has_side_channel()) write_text(dir / "side_covariance.csv", matrix_csv(rep.side_covariance));
  write_json(dir / "diagnostics.json",
             {{"live_dimensions", rep.live}, {"dead_dimensions", rep.dead}, {"side_variance", rep.side_variance}});
  write_manifest(dir, "importance", o, model.graph.fingerprint);
  out << imp.dump(2) << '\n';
  return 0;
}

inline int cmd_leakage(const CliOptions& o, std::ostream& out) {
  const CreamModel model = load_model(o);
  const auto train_set = load_split(o, "train", model.graph);
  const auto test = load_split(o, o.split, model.graph);
  TrainConfig tc;
  tc.epochs = o.baseline_epochs;
  tc.learning_rate = o.baseline_lr;
  tc.batch_size = o.batch_size;
  tc.seed = o.seed;
  const auto baseline = train_concept_baseline(train_set, test, tc);
  const auto rep = leakage(task_accuracy(model, test, SideChannel::disabled), baseline.test_accuracy);
  const Json j = {{"model_accuracy", rep.model_accuracy},
                  {"baseline_accuracy", rep.baseline_accuracy},
                  {"leakage", rep.leakage}};
  const fs::path dir = prepare_out(o.out);
  write_json(dir / "leakage.json", j);
  write_manifest(dir, "leakage", o, model.graph.fingerprint);
  out << j.dump(2) << '\n';
  return 0;
}

inline int cmd_sweep(const CliOptions& o, std::ostream& out) {
  const auto dropouts = parse_list<double>(o.dropout_list, "--dropout");
  const auto dcs = parse_list<std::size_t>(o.dc_list, "--dc");
  const auto depths = parse_list<std::size_t>(o.depth_list, "--depth");
  if (o.seeds < 1) throw UsageError("--seeds must be >= 1");
  const bool want_cci = o.metric == "cci" || o.metric == "all";
  const bool want_pfi = o.metric == "pfi" || o.metric == "all";
  const auto spec = resolve_graph(o);
  const auto bg = binarize(spec);
  const auto train_set = load_split(o, "train", bg);
  const auto test = load_split(o, "test", bg);
  const fs::path dir = prepare_out(o.out);

  std::ostringstream csv;
  csv << "dropout,exo_dims,concept_depth,seed,task_accuracy,task_accuracy_no_side_channel,"
         "mean_concept_accuracy";
  if (want_cci) csv << ",phi_concept,phi_side,cci";
  if (want_pfi) csv << ",pci,psi";
  csv << '\n';
  for (double p : dropouts)
    for (std::size_t dc : dcs)
      for (std::size_t depth : depths)
        for (std::size_t s = 0; s < o.seeds; ++s) {
          CliOptions cell = o;
          cell.dropout = p;
          cell.exo_dims = dc;
          cell.concept_depth = depth;
          cell.seed = o.seed + s;
          const CreamConfig cfg = model_config(cell);
          Rng init_rng = Rng(cell.seed).derive(100);
          CreamModel m = init_model(cfg, bg, train_set.num_features(), init_rng);
          train(m, train_set, nullptr, train_config(cell));
          const auto on = evaluate(m, test, SideChannel::enabled);
          const double off = task_accuracy(m, test, SideChannel::disabled);
          csv << format_double(p) << ',' << dc << ',' << depth << ',' << cell.seed << ','
              << format_double(on.task_accuracy) << ',' << format_double(off) << ','
              << format_double(on.mean_concept_accuracy);
          Rng base(cell.seed);
          if (want_cci) {
            Rng r = base.derive(1);
            const auto ci = channel_sage(m, test, SageConfig{}, r);
            csv << ',' << format_double(ci.phi_concept) << ',' << format_double(ci.phi_side) << ','
                << format_double(ci.cci);
          }
          if (want_pfi) {
            Rng r2 = base.derive(2), r3 = base.derive(3);
            csv << ',' << format_double(permutation_importance(m, test, Channel::concepts, o.pfi_iterations, r2))
                << ',' << format_double(permutation_importance(m, test, Channel::side, o.pfi_iterations, r3));
          }
          csv << '\n';
        }
  write_text(dir / "sweep.csv", csv.str());
  write_manifest(dir, "sweep", o, bg.fingerprint);
  out << csv.str();
  return 0;
}

inline int cmd_export_graph(const CliOptions& o, std::ostream& out) {
  ReasoningGraphSpec spec;
  if (!o.graph.empty() || !o.data.empty()) spec = resolve_graph(o);
  else spec = parse_graph(apparel_graph_json(o.variant == "complete" ? ApparelVariant::complete
                                                                     : ApparelVariant::incomplete));
  const auto bg = binarize(spec);
  const fs::path dir = prepare_out(o.out);
  const CreamConfig cfg = model_config(o);
  const auto adj = ablated_adjacency(bg, cfg);
  write_json(dir / "graph.json", to_json(spec));
  write_json(dir / "binarized.json", binarized_to_json(bg));
  write_text(dir / "concept_adjacency.csv", matrix_csv(adj.concept_adj));
  write_text(dir / "task_adjacency.csv", matrix_csv(adj.task_adj));
  std::string rules;
  for (const auto& r : export_logic_rules(bg)) rules += r + "\n";
  write_text(dir / "rules.txt", rules);
  if (o.masks) {
    Rng rng = Rng(o.seed).derive(100);
    const CreamModel m = init_model(cfg, bg, o.features, rng);
    for (std::size_t i = 0; i < m.concept_masks.masks.size(); ++i)
      write_text(dir / ("concept_mask_" + std::to_string(i + 1) + ".csv"), matrix_csv(m.concept_masks.masks[i]));
    for (std::size_t i = 0; i < m.task_masks.masks.size(); ++i)
      write_text(dir / ("task_mask_" + std::to_string(i + 1) + ".csv"), matrix_csv(m.task_masks.masks[i]));
  }
  write_manifest(dir, "export-graph", o, bg.fingerprint);
  for (const auto& w : spec.warnings) out << "warning: " << w << '\n';
  out << rules;
  return 0;
}

inline int cmd_serve(const CliOptions& o, std::ostream& out) {
  CreamModel model = load_model(o);
  LabeledDataset ds = load_split(o, o.split, model.graph);
  const Session s = make_session(std::move(model), std::move(ds));
  serve(s, o.host, o.port, o.static_dir, out);
  return 0;
}

// ---------------------------------------------------------------------------
// Parsing

struct CliApp {
  CLI::App app{"Concept reasoning models: data, training, metrics and service", "cream"};
  CliOptions opts;
};

inline void build_app(CliApp& c) {
  auto& app = c.app;
  auto& o = c.opts;
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.set_version_flag("--version", kVersion);

  auto common = [&](CLI::App* s, bool needs_out) {
    s->add_option("--config", o.config_file, "key = value config file");
    auto* opt = s->add_option("--out", o.out, "output directory");
    if (needs_out) opt->required();
    s->add_option("--seed", o.seed, "run seed");
  };
  auto model_flags = [&](CLI::App* s) {
    s->add_option("--exo-dims", o.exo_dims, "exogenous dimensions per concept (d_C)");
    s->add_option("--side-dims", o.side_dims, "side-channel input width (d_Y)");
    s->add_option("--dropout", o.dropout, "side-channel dropout probability");
    s->add_option("--concept-weight", o.concept_weight, "concept loss weight (lambda)");
    s->add_option("--concept-depth", o.concept_depth, "hidden layers in the concept block");
    s->add_option("--task-depth", o.task_depth, "hidden layers in the task classifier");
    s->add_option("--mode", o.mode, "concept mode")->check(CLI::IsMember({"soft", "hard"}));
    s->add_option("--concept-activation", o.concept_activation, "mutex activation")
        ->check(CLI::IsMember({"softmax", "sigmoid"}));
    s->add_option("--backbone-width", o.backbone_width, "trainable backbone width, 0 for identity");
    s->add_flag("--rescale-side-channel", o.rescale, "inverse-(1-p) scaling of the active side-channel");
    s->add_option("--ablate", o.ablate, "ablations")
        ->delimiter(',')
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll)
        ->check(CLI::IsMember({"dense-concept-adjacency", "dense-task-adjacency", "sigmoid-only",
                               "no-side-channel"}));
  };
  auto train_flags = [&](CLI::App* s) {
    s->add_option("--epochs", o.epochs);
    s->add_option("--batch-size", o.batch_size);
    s->add_option("--lr", o.lr, "learning rate");
    s->add_option("--patience", o.patience, "early stopping patience, 0 disables");
    s->add_option("--eval-every", o.eval_every);
  };
  auto data_flags = [&](CLI::App* s, bool with_split) {
    s->add_option("--data", o.data, "dataset directory")->required();
    if (with_split) s->add_option("--split", o.split, "dataset split to evaluate");
  };
  auto checkpoint_flag = [&](CLI::App* s) { s->add_option("--checkpoint", o.checkpoint)->required(); };

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic apparel dataset");
  common(gen, true);
  gen->add_option("--variant", o.variant)->check(CLI::IsMember({"incomplete", "complete"}));
  gen->add_option("--n", o.n, "training samples");
  gen->add_option("--n-val", o.n_val, "validation samples");
  gen->add_option("--n-test", o.n_test, "test samples");
  gen->add_option("--features", o.features, "feature width");
  gen->add_option("--noise", o.noise, "feature noise");
  gen->add_option("--flip", o.flip, "concept label flip probability");

  auto* tr = app.add_subcommand("train", "train a model");
  common(tr, true);
  data_flags(tr, false);
  tr->add_option("--graph", o.graph, "graph file, defaults to <data>/graph.json");
  tr->add_flag("--no-side-channel", o.no_side_channel, "train without a side-channel (d_Y = 0)");
  model_flags(tr);
  train_flags(tr);

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  common(ev, false);
  checkpoint_flag(ev);
  data_flags(ev, true);
  ev->add_flag("--no-side-channel", o.no_side_channel, "disable the side-channel at inference");
  ev->add_option("--explain", o.explain, "print the prediction payload of one sample");

  auto* iv = app.add_subcommand("intervene", "intervention curve");
  common(iv, true);
  checkpoint_flag(iv);
  data_flags(iv, true);
  iv->add_option("--policy", o.policy)->check(CLI::IsMember({"random-direct-first", "random-all"}));
  iv->add_flag("--grouped", o.grouped, "intervene on whole mutex groups");
  iv->add_option("--seeds", o.seeds, "number of seeds");
  iv->add_option("--budget", o.budget, "largest number of interventions");
  iv->add_flag("--no-side-channel", o.no_side_channel, "disable the side-channel at inference");

  auto* im = app.add_subcommand("importance", "channel importance and representation diagnostics");
  common(im, true);
  checkpoint_flag(im);
  data_flags(im, true);
  im->add_option("--pfi-iterations", o.pfi_iterations);
  im->add_option("--reference-fraction", o.reference_fraction);
  im->add_option("--initial-draws", o.initial_draws);
  im->add_option("--max-draws", o.max_draws);
  im->add_option("--convergence", o.convergence);

  auto* lk = app.add_subcommand("leakage", "leakage against the true-concept baseline");
  common(lk, true);
  checkpoint_flag(lk);
  data_flags(lk, true);
  lk->add_option("--baseline-epochs", o.baseline_epochs);
  lk->add_option("--baseline-lr", o.baseline_lr);
  lk->add_option("--batch-size", o.batch_size);

  auto* sw = app.add_subcommand("sweep", "train a grid of models and tabulate metrics");
  common(sw, true);
  data_flags(sw, false);
  sw->add_option("--graph", o.graph);
  model_flags(sw);
  sw->remove_option(sw->get_option("--dropout"));
  sw->remove_option(sw->get_option("--exo-dims"));
  sw->add_option("--dropout", o.dropout_list, "comma-separated dropout rates");
  sw->add_option("--dc", o.dc_list, "comma-separated exogenous widths");
  sw->add_option("--depth", o.depth_list, "comma-separated concept block depths");
  sw->add_option("--seeds", o.seeds, "seeds per cell");
  sw->add_option("--metric", o.metric)->check(CLI::IsMember({"accuracy", "cci", "pfi", "all"}));
  sw->add_option("--pfi-iterations", o.pfi_iterations);
  sw->add_flag("--no-side-channel", o.no_side_channel);
  train_flags(sw);

  auto* ex = app.add_subcommand("export-graph", "binarized graph, adjacency, masks and logic rules");
  common(ex, true);
  ex->add_option("--graph", o.graph);
  ex->add_option("--data", o.data);
  ex->add_option("--variant", o.variant)->check(CLI::IsMember({"incomplete", "complete"}));
  ex->add_flag("--masks", o.masks, "also write the mask stacks");
  ex->add_option("--features", o.features, "input width for the mask stacks");
  ex->add_flag("--no-side-channel", o.no_side_channel);
  model_flags(ex);

  auto* sv = app.add_subcommand("serve", "HTTP API over a checkpoint and dataset");
  common(sv, false);
  checkpoint_flag(sv);
  data_flags(sv, true);
  sv->add_option("--host", o.host);
  sv->add_option("--port", o.port);
  sv->add_option("--static", o.static_dir, "directory served at /");
}

// Key/value pairs from a config file, as `--key=value` tokens.
inline std::vector<std::string> config_tokens(const std::string& path, const CLI::App& sub) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file " + path);
  std::vector<std::string> tokens;
  std::string line;
  std::size_t lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw UsageError(path + ":" + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "config" || !sub.get_option_no_throw("--" + key))
      throw UsageError(path + ":" + std::to_string(lineno) + ": unknown key '" + key + "' for " +
                       sub.get_name());
    tokens.push_back("--" + key + "=" + value);
  }
  return tokens;
}

inline int dispatch(const std::string& name, const CliOptions& o, std::ostream& out) {
  if (name == "gen-data") return cmd_gen_data(o, out);
  if (name == "train") return cmd_train(o, out);
  if (name == "eval") return cmd_eval(o, out);
  if (name == "intervene") return cmd_intervene(o, out);
  if (name == "importance") return cmd_importance(o, out);
  if (name == "leakage") return cmd_leakage(o, out);
  if (name == "sweep") return cmd_sweep(o, out);
  if (name == "export-graph") return cmd_export_graph(o, out);
  if (name == "serve") return cmd_serve(o, out);
  throw UsageError("unknown command " + name);
}

// `args` excludes the program name. Exit status: 0 success, 2 usage error,
// 1 any other failure.
inline int run_command(std::vector<std::string> args, std::ostream& out = std::cout,
                       std::ostream& err = std::cerr) {
  CliApp c;
  build_app(c);
  std::string name;
  try {
    if (!args.empty() && args.front().rfind("-", 0) != 0) {
      name = args.front();
      std::string cfg_path;
      for (std::size_t i = 1; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) cfg_path = args[i + 1];
        else if (args[i].rfind("--config=", 0) == 0) cfg_path = args[i].substr(9);
      }
      if (!cfg_path.empty()) {
        const auto* sub = c.app.get_subcommand_no_throw(name);
        if (!sub) throw UsageError("unknown command '" + name + "'");
        auto tokens = config_tokens(cfg_path, *sub);
        args.insert(args.begin() + 1, tokens.begin(), tokens.end());
      }
    }
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    c.app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = c.app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n" << c.app.help();
    return 2;
  }
  const auto* sub = c.app.get_subcommands().front();
  try {
    return dispatch(sub->get_name(), c.opts, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n" << sub->help();
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

inline int run_command(int argc, char** argv) {
  return run_command(std::vector<std::string>(argv + 1, argv + argc));
}

}  // namespace cream
