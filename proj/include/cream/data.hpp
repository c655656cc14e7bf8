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

// Labeled datasets: the synthetic hierarchical apparel generator, CSV +
// manifest persistence and deterministic stratified splitting.
//
// CSV layout: header `f0,...,f{F-1},c:<concept>,...,y`, one sample per row,
// concepts in graph index order, y the class index. The sibling manifest
// `<stem>.json` records F, K, L, names, split tag and graph fingerprint.

#pragma once

#include <algorithm>
#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cream/graph.hpp"
#include "cream/numcore.hpp"

namespace cream {

struct LabeledDataset {
  Matrix features;                  // N x F
  Matrix concepts;                  // N x K, 0/1
  std::vector<std::size_t> tasks;   // N class indices
  std::vector<std::string> concept_names;
  std::vector<std::string> task_names;
  std::string split;
  std::string graph_fingerprint;

  std::size_t size() const { return tasks.size(); }
  std::size_t num_features() const { return features.cols(); }
  std::size_t num_concepts() const { return concept_names.size(); }
  std::size_t num_tasks() const { return task_names.size(); }
};

inline LabeledDataset subset(const LabeledDataset& ds, const std::vector<std::size_t>& rows,
                             std::string split_tag) {
  LabeledDataset out;
  out.features = Matrix(rows.size(), ds.num_features());
  out.concepts = Matrix(rows.size(), ds.num_concepts());
  out.concept_names = ds.concept_names;
  out.task_names = ds.task_names;
  out.split = std::move(split_tag);
  out.graph_fingerprint = ds.graph_fingerprint;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::copy_n(ds.features.row(rows[r]).begin(), ds.num_features(), out.features.row(r).begin());
    std::copy_n(ds.concepts.row(rows[r]).begin(), ds.num_concepts(), out.concepts.row(r).begin());
    out.tasks.push_back(ds.tasks[rows[r]]);
  }
  return out;
}

// Shape, label-range and mutex one-hot checks. Throws DataError naming the
// first offending row.
inline void validate_dataset(const LabeledDataset& ds, const BinarizedGraph& bg) {
  if (ds.num_concepts() != bg.num_concepts())
    throw DataError("dataset has " + std::to_string(ds.num_concepts()) +
                    " concept columns but the graph has K = " + std::to_string(bg.num_concepts()));
  if (ds.num_tasks() != bg.num_tasks())
    throw DataError("dataset has " + std::to_string(ds.num_tasks()) +
                    " classes but the graph has L = " + std::to_string(bg.num_tasks()));
  if (ds.features.rows() != ds.size() || ds.concepts.rows() != ds.size() ||
      ds.concepts.cols() != ds.num_concepts())
    throw DataError("dataset matrices disagree on the sample count");
  for (std::size_t n = 0; n < ds.size(); ++n) {
    if (ds.tasks[n] >= ds.num_tasks())
      throw DataError("row " + std::to_string(n) + ": class index " + std::to_string(ds.tasks[n]) +
                      " out of range");
    for (double v : ds.concepts.row(n))
      if (v != 0.0 && v != 1.0) throw DataError("row " + std::to_string(n) + ": non-binary concept value");
    if (!all_finite(ds.features.row(n)))
      throw DataError("row " + std::to_string(n) + ": non-finite feature");
    for (std::size_t g = 0; g < bg.groups.size(); ++g) {
      double sum = 0.0;
      for (std::size_t i : bg.groups[g]) sum += ds.concepts(n, i);
      if (sum != 1.0)
        throw DataError("row " + std::to_string(n) + ": mutex group '" + bg.group_names[g] +
                        "' is not one-hot");
    }
  }
}

// ---------------------------------------------------------------------------
// Synthetic apparel data

enum class ApparelVariant { incomplete, complete };

inline constexpr std::array<const char*, 10> kApparelClasses = {
    "T-shirt", "Trouser", "Pullover", "Dress", "Coat",
    "Sandal",  "Shirt",   "Sneaker",  "Bag",   "Ankle Boot"};

// Hierarchical graph: {Clothes, Goods} -> {Tops, Bottoms, Dresses, Outers,
// Accessories, Shoes} -> classes. The complete variant adds a Season node
// (Summer, Winter, Mild Seasons) feeding the classes of that season.
inline std::string apparel_graph_json(ApparelVariant variant) {
  Json g;
  g["concepts"] = Json::array();
  for (const char* c : {"Clothes", "Goods", "Tops", "Bottoms", "Dresses", "Outers", "Accessories", "Shoes"})
    g["concepts"].push_back({{"name", c}, {"cardinality", 1}});
  if (variant == ApparelVariant::complete)
    g["concepts"].push_back({{"name", "Season"},
                             {"cardinality", 3},
                             {"categories", {"Summer", "Winter", "Mild Seasons"}}});
  g["tasks"] = kApparelClasses;
  g["edges"] = Json::array();
  auto edge = [&](const char* s, const char* d) { g["edges"].push_back({{"src", s}, {"dst", d}}); };
  for (const char* c : {"Tops", "Bottoms", "Dresses", "Outers"}) edge("Clothes", c);
  for (const char* c : {"Accessories", "Shoes"}) edge("Goods", c);
  for (const char* c : {"T-shirt", "Pullover", "Shirt"}) edge("Tops", c);
  edge("Bottoms", "Trouser");
  edge("Dresses", "Dress");
  edge("Outers", "Coat");
  edge("Accessories", "Bag");
  for (const char* c : {"Sandal", "Sneaker", "Ankle Boot"}) edge("Shoes", c);
  if (variant == ApparelVariant::complete) {
    for (const char* c : {"T-shirt", "Sandal", "Dress"}) edge("Summer", c);
    for (const char* c : {"Pullover", "Ankle Boot", "Coat"}) edge("Winter", c);
    for (const char* c : {"Shirt", "Sneaker", "Trouser", "Bag"}) edge("Mild Seasons", c);
  }
  g["mutex_groups"] = Json::array(
      {{{"name", "Level 1"}, {"members", {"Clothes", "Goods"}}},
       {{"name", "Level 2"},
        {"members", {"Tops", "Bottoms", "Dresses", "Outers", "Accessories", "Shoes"}}}});
  return g.dump(2);
}

// Active concept names per class (index into kApparelClasses).
inline std::vector<std::string> apparel_concepts_of(std::size_t cls, ApparelVariant variant) {
  static const std::array<std::vector<std::string>, 10> base = {{
      {"Clothes", "Tops"},    {"Clothes", "Bottoms"}, {"Clothes", "Tops"},  {"Clothes", "Dresses"},
      {"Clothes", "Outers"},  {"Goods", "Shoes"},     {"Clothes", "Tops"},  {"Goods", "Shoes"},
      {"Goods", "Accessories"}, {"Goods", "Shoes"},
  }};
  static const std::array<const char*, 10> season = {"Summer", "Mild Seasons", "Winter", "Summer",
                                                     "Winter", "Summer",       "Mild Seasons",
                                                     "Mild Seasons", "Mild Seasons", "Winter"};
  auto out = base.at(cls);
  if (variant == ApparelVariant::complete) out.push_back(season[cls]);
  return out;
}

struct ApparelGenConfig {
  ApparelVariant variant = ApparelVariant::incomplete;
  std::size_t n_train = 10000;
  std::size_t n_val = 1000;
  std::size_t n_test = 10000;
  std::size_t feature_dim = 16;
  double noise = 0.3;
  double flip_probability = 0.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (noise < 0.0) throw ConfigError("feature noise must be >= 0");
    if (!(flip_probability >= 0.0 && flip_probability < 0.5))
      throw ConfigError("concept flip probability must lie in [0, 0.5)");
    if (feature_dim == 0) throw ConfigError("feature width must be positive");
  }
};

struct DatasetSplits {
  LabeledDataset train, val, test;
};

struct ApparelData {
  ReasoningGraphSpec spec;
  BinarizedGraph graph;
  DatasetSplits splits;
};

// Features are the sum of one embedding per active concept, one embedding
// per class and isotropic Gaussian noise. Embeddings are drawn once per seed,
// so all splits share them. Classes are exactly balanced, then shuffled.
inline ApparelData generate_apparel(const ApparelGenConfig& cfg) {
  cfg.validate();
  ApparelData out;
  out.spec = parse_graph(apparel_graph_json(cfg.variant));
  out.graph = binarize(out.spec);
  const auto& bg = out.graph;
  const std::size_t k = bg.num_concepts();
  const std::size_t l = bg.num_tasks();
  const std::size_t f = cfg.feature_dim;

  Rng rng(cfg.seed);
  Rng embed_rng = rng.derive(0);
  Matrix concept_emb(k, f), class_emb(l, f);
  for (double& v : concept_emb.data()) v = embed_rng.normal();
  for (double& v : class_emb.data()) v = embed_rng.normal();

  Matrix truth(l, k);
  for (std::size_t c = 0; c < l; ++c)
    for (const auto& name : apparel_concepts_of(c, cfg.variant)) truth(c, *bg.concept_index(name)) = 1.0;

  auto make = [&](std::size_t n, const char* tag, std::uint64_t stream) {
    Rng r = rng.derive(stream);
    LabeledDataset ds;
    ds.features = Matrix(n, f);
    ds.concepts = Matrix(n, k);
    ds.concept_names = bg.concepts;
    ds.task_names = bg.tasks;
    ds.split = tag;
    ds.graph_fingerprint = bg.fingerprint;
    std::vector<std::size_t> classes(n);
    for (std::size_t i = 0; i < n; ++i) classes[i] = i % l;
    std::shuffle(classes.begin(), classes.end(), r.engine());
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = classes[i];
      ds.tasks.push_back(c);
      auto x = ds.features.row(i);
      for (std::size_t j = 0; j < f; ++j) x[j] = class_emb(c, j) + cfg.noise * r.normal();
      for (std::size_t q = 0; q < k; ++q) {
        if (truth(c, q) == 0.0) continue;
        for (std::size_t j = 0; j < f; ++j) x[j] += concept_emb(q, j);
      }
      auto row = ds.concepts.row(i);
      std::copy_n(truth.row(c).begin(), k, row.begin());
      if (cfg.flip_probability > 0.0) {
        std::vector<char> grouped(k, 0);
        for (const auto& g : bg.groups) {
          for (std::size_t q : g) grouped[q] = 1;
          if (!r.bernoulli(cfg.flip_probability)) continue;
          std::size_t on = g.front();
          for (std::size_t q : g) if (row[q] == 1.0) on = q;
          std::size_t pick = g[r.index(g.size() - 1)];
          if (pick == on) pick = g.back();
          row[on] = 0.0;
          row[pick] = 1.0;
        }
        for (std::size_t q = 0; q < k; ++q)
          if (!grouped[q] && r.bernoulli(cfg.flip_probability)) row[q] = 1.0 - row[q];
      }
    }
    return ds;
  };
  out.splits.train = make(cfg.n_train, "train", 1);
  out.splits.val = make(cfg.n_val, "val", 2);
  out.splits.test = make(cfg.n_test, "test", 3);
  return out;
}

// ---------------------------------------------------------------------------
// Splitting

// Stratified, deterministic split. Each class is shuffled and every member
// gets the key (rank + 0.5) / class_size; walking samples in key order and
// cutting at the global targets keeps every class within one sample of its
// proportional share.
inline DatasetSplits split(const LabeledDataset& ds, std::array<double, 3> fractions,
                           std::uint64_t seed) {
  for (double f : fractions)
    if (f < 0.0) throw ConfigError("split fractions must be non-negative");
  if (std::abs(fractions[0] + fractions[1] + fractions[2] - 1.0) > 1e-9)
    throw ConfigError("split fractions must sum to 1");
  const std::size_t n = ds.size();
  Rng rng(seed);

  std::map<std::size_t, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < n; ++i) by_class[ds.tasks[i]].push_back(i);
  struct Keyed {
    double key;
    std::size_t cls;
    std::size_t row;
  };
  std::vector<Keyed> order;
  for (auto& [cls, rows] : by_class) {
    std::shuffle(rows.begin(), rows.end(), rng.engine());
    for (std::size_t r = 0; r < rows.size(); ++r)
      order.push_back({(static_cast<double>(r) + 0.5) / static_cast<double>(rows.size()), cls, rows[r]});
  }
  std::sort(order.begin(), order.end(), [](const Keyed& a, const Keyed& b) {
    return a.key != b.key ? a.key < b.key : a.cls < b.cls;
  });

  const auto n_train = static_cast<std::size_t>(std::llround(fractions[0] * static_cast<double>(n)));
  const auto n_val = std::min(n - n_train,
                              static_cast<std::size_t>(std::llround(fractions[1] * static_cast<double>(n))));
  std::vector<std::size_t> a, b, c;
  for (std::size_t i = 0; i < order.size(); ++i)
    (i < n_train ? a : i < n_train + n_val ? b : c).push_back(order[i].row);
  for (auto* part : {&a, &b, &c}) std::shuffle(part->begin(), part->end(), rng.engine());
  return {subset(ds, a, "train"), subset(ds, b, "val"), subset(ds, c, "test")};
}

// ---------------------------------------------------------------------------
// Persistence

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::filesystem::path manifest_path_for(const std::filesystem::path& csv) {
  auto p = csv;
  p.replace_extension(".json");
  return p;
}

inline void save_dataset(const LabeledDataset& ds, const std::filesystem::path& csv_path) {
  for (const auto& n : ds.concept_names)
    if (n.find(',') != std::string::npos || n.find('"') != std::string::npos)
      throw DataError("concept name '" + n + "' cannot be written to CSV");
  std::ofstream out(csv_path);
  if (!out) throw DataError("cannot write " + csv_path.string());
  for (std::size_t j = 0; j < ds.num_features(); ++j) out << 'f' << j << ',';
  for (const auto& n : ds.concept_names) out << "c:" << n << ',';
  out << "y\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (double v : ds.features.row(i)) out << format_double(v) << ',';
    for (double v : ds.concepts.row(i)) out << (v != 0.0 ? '1' : '0') << ',';
    out << ds.tasks[i] << '\n';
  }
  Json manifest = {{"features", ds.num_features()},   {"concepts", ds.num_concepts()},
                   {"tasks", ds.num_tasks()},         {"rows", ds.size()},
                   {"concept_names", ds.concept_names}, {"task_names", ds.task_names},
                   {"split", ds.split},               {"graph_fingerprint", ds.graph_fingerprint}};
  std::ofstream m(manifest_path_for(csv_path));
  if (!m) throw DataError("cannot write manifest for " + csv_path.string());
  m << manifest.dump(2) << '\n';
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

// Reads a CSV + manifest and validates against `bg`.
inline LabeledDataset load_dataset(const std::filesystem::path& csv_path, const BinarizedGraph& bg) {
  std::ifstream m(manifest_path_for(csv_path));
  if (!m) throw DataError("missing manifest " + manifest_path_for(csv_path).string());
  Json manifest;
  try {
    manifest = Json::parse(m);
  } catch (const Json::exception& e) {
    throw DataError(std::string("malformed manifest: ") + e.what());
  }
  LabeledDataset ds;
  const auto f = manifest.at("features").get<std::size_t>();
  ds.concept_names = manifest.at("concept_names").get<std::vector<std::string>>();
  ds.task_names = manifest.at("task_names").get<std::vector<std::string>>();
  ds.split = manifest.value("split", "");
  ds.graph_fingerprint = manifest.value("graph_fingerprint", "");
  const std::size_t k = ds.concept_names.size();

  std::ifstream in(csv_path);
  if (!in) throw DataError("cannot read " + csv_path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty dataset file " + csv_path.string());
  const auto header = split_csv_line(line);
  std::size_t n_concept_cols = 0;
  for (const auto& h : header) n_concept_cols += h.rfind("c:", 0) == 0 ? 1 : 0;
  if (n_concept_cols != bg.num_concepts())
    throw DataError("dataset has " + std::to_string(n_concept_cols) +
                    " concept columns but the graph has K = " + std::to_string(bg.num_concepts()));
  if (header.size() != f + k + 1 || header.back() != "y" || n_concept_cols != k)
    throw DataError("CSV header does not match the manifest shape");
  for (std::size_t i = 0; i < k; ++i)
    if (header[f + i] != "c:" + ds.concept_names[i] || ds.concept_names[i] != bg.concepts[i])
      throw DataError("concept column " + std::to_string(i) + " is '" + header[f + i] +
                      "', graph expects 'c:" + bg.concepts[i] + "'");

  std::vector<double> feats, concepts;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != f + k + 1)
      throw DataError("row " + std::to_string(row) + ": expected " + std::to_string(f + k + 1) +
                      " cells, found " + std::to_string(cells.size()));
    try {
      for (std::size_t j = 0; j < f; ++j) feats.push_back(std::stod(cells[j]));
      for (std::size_t j = 0; j < k; ++j) {
        const auto& c = cells[f + j];
        if (c != "0" && c != "1")
          throw DataError("row " + std::to_string(row) + ": non-binary concept value '" + c + "'");
        concepts.push_back(c == "1" ? 1.0 : 0.0);
      }
      const long long y = std::stoll(cells.back());
      if (y < 0) throw DataError("row " + std::to_string(row) + ": invalid class index");
      ds.tasks.push_back(static_cast<std::size_t>(y));
    } catch (const std::logic_error&) {
      throw DataError("row " + std::to_string(row) + ": unparsable number");
    }
    ++row;
  }
  ds.features = Matrix(row, f);
  ds.features.data() = std::move(feats);
  ds.concepts = Matrix(row, k);
  ds.concepts.data() = std::move(concepts);
  validate_dataset(ds, bg);
  return ds;
}

}  // namespace cream
