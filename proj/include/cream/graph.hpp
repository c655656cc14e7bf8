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

// Expert reasoning graphs: parsing, validation, binarization of categorical
// concepts, adjacency matrices, direct-concept sets and logic-rule export.
//
// Graph file schema (JSON, unknown fields rejected at every level):
//
//   {
//     "concepts": [ {"name": str, "cardinality": int >= 1,
//                    "categories": [str, ...]            (optional)} ],
//     "tasks": [str, ...],
//     "edges": [ {"src": str, "dst": str,
//                 "kind": "directed" | "bidirected"       (default directed),
//                 "expansion": "matched" | "pairwise"     (optional)} ],
//     "mutex_groups": [ {"name": str, "members": [str, ...]} ]
//   }
//
// A concept of cardinality n > 1 expands to n binarized concepts that form a
// mutex group named after the node. Their names are the `categories` entries,
// or "<name>[i]" when none are given. Edge endpoints may name a concept node,
// a single category, or a task. Node-level edges between two categorical
// nodes default to index-matched expansion; edges where one side is a single
// binarized concept broadcast to every member of the other side.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "cream/numcore.hpp"
#include "json.hpp"

namespace cream {

using Json = nlohmann::json;

// Aggregates every violation found while validating a graph.
struct GraphError : ConfigError {
  std::vector<std::string> violations;
  explicit GraphError(std::vector<std::string> v)
      : ConfigError(join(v)), violations(std::move(v)) {}

 private:
  static std::string join(const std::vector<std::string>& v) {
    std::string s = "invalid reasoning graph:";
    for (const auto& x : v) s += "\n  - " + x;
    return s;
  }
};

enum class EdgeKind { directed, bidirected };
enum class Expansion { automatic, matched, pairwise };

struct ConceptNode {
  std::string name;
  std::size_t cardinality = 1;
  std::vector<std::string> categories;
};

struct EdgeSpec {
  std::string src;
  std::string dst;
  EdgeKind kind = EdgeKind::directed;
  Expansion expansion = Expansion::automatic;
};

struct MutexGroupSpec {
  std::string name;
  std::vector<std::string> members;
};

struct ReasoningGraphSpec {
  std::vector<ConceptNode> concepts;
  std::vector<std::string> tasks;
  std::vector<EdgeSpec> edges;
  std::vector<MutexGroupSpec> mutex_groups;
  std::vector<std::string> warnings;

  // Binarized names of a concept node, in category order.
  static std::vector<std::string> binarized_names(const ConceptNode& c) {
    if (c.cardinality == 1) return {c.name};
    if (!c.categories.empty()) return c.categories;
    std::vector<std::string> out;
    for (std::size_t i = 0; i < c.cardinality; ++i)
      out.push_back(c.name + "[" + std::to_string(i) + "]");
    return out;
  }
};

namespace detail {

inline void require_only(const Json& obj, std::initializer_list<const char*> allowed,
                         const std::string& where, std::vector<std::string>& errors) {
  if (!obj.is_object()) {
    errors.push_back(where + ": expected an object");
    return;
  }
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) errors.push_back(where + ": unknown field '" + key + "'");
  }
}

inline std::string str_field(const Json& obj, const char* key, const std::string& where,
                             std::vector<std::string>& errors) {
  if (!obj.contains(key) || !obj.at(key).is_string()) {
    errors.push_back(where + ": missing string field '" + key + "'");
    return {};
  }
  return obj.at(key).get<std::string>();
}

}  // namespace detail

inline std::string to_string(EdgeKind k) { return k == EdgeKind::directed ? "directed" : "bidirected"; }
inline std::string to_string(Expansion e) {
  switch (e) {
    case Expansion::matched: return "matched";
    case Expansion::pairwise: return "pairwise";
    default: return "auto";
  }
}

// Checks naming, references, downward task edges and mutex disjointness.
inline std::vector<std::string> validate(ReasoningGraphSpec& spec) {
  std::vector<std::string> errors;
  std::map<std::string, std::string> names;  // name -> what it is
  auto claim = [&](const std::string& n, const std::string& what) {
    if (n.empty()) {
      errors.push_back("empty " + what + " name");
      return;
    }
    auto [it, inserted] = names.emplace(n, what);
    if (!inserted) errors.push_back("duplicate name '" + n + "'");
  };

  std::map<std::string, const ConceptNode*> categorical;
  std::set<std::string> binary;  // names denoting exactly one binarized concept
  for (const auto& c : spec.concepts) {
    if (c.cardinality == 0) errors.push_back("concept '" + c.name + "' has cardinality 0");
    if (!c.categories.empty() && c.categories.size() != c.cardinality)
      errors.push_back("concept '" + c.name + "' lists " + std::to_string(c.categories.size()) +
                       " categories for cardinality " + std::to_string(c.cardinality));
    claim(c.name, "concept");
    if (c.cardinality == 1) {
      binary.insert(c.name);
    } else {
      categorical[c.name] = &c;
      for (const auto& b : ReasoningGraphSpec::binarized_names(c)) {
        claim(b, "category");
        binary.insert(b);
      }
    }
  }
  std::set<std::string> tasks;
  for (const auto& t : spec.tasks) {
    claim(t, "task");
    tasks.insert(t);
  }

  auto known = [&](const std::string& n) { return names.count(n) > 0; };
  std::set<std::string> has_parent;
  for (const auto& e : spec.edges) {
    const std::string label = "edge " + e.src + " -> " + e.dst;
    if (!known(e.src)) errors.push_back(label + ": unknown node '" + e.src + "'");
    if (!known(e.dst)) errors.push_back(label + ": unknown node '" + e.dst + "'");
    if (tasks.count(e.src))
      errors.push_back(label + ": task as source violates downward reasoning");
    if (e.kind == EdgeKind::bidirected && tasks.count(e.dst))
      errors.push_back(label + ": bidirected edge into a task violates downward reasoning");
    if (e.src == e.dst) errors.push_back(label + ": self loop");
    if (tasks.count(e.dst)) has_parent.insert(e.dst);
  }

  std::set<std::string> grouped;
  for (const auto& [name, node] : categorical)
    for (const auto& b : ReasoningGraphSpec::binarized_names(*node)) grouped.insert(b);
  for (const auto& g : spec.mutex_groups) {
    if (g.members.size() < 2)
      errors.push_back("mutex group '" + g.name + "' needs at least 2 members");
    for (const auto& m : g.members) {
      if (!binary.count(m)) {
        errors.push_back("mutex group '" + g.name + "': member '" + m +
                         "' is not a binary concept or category");
        continue;
      }
      if (!grouped.insert(m).second)
        errors.push_back("mutex group '" + g.name + "': member '" + m +
                         "' already belongs to another mutex group");
    }
  }

  spec.warnings.clear();
  for (const auto& t : spec.tasks)
    if (!has_parent.count(t))
      spec.warnings.push_back("task '" + t + "' has no concept parents; it relies on the side-channel alone");
  return errors;
}

inline ReasoningGraphSpec parse_graph(const Json& doc) {
  std::vector<std::string> errors;
  ReasoningGraphSpec spec;
  if (doc.is_null()) return spec;
  detail::require_only(doc, {"concepts", "tasks", "edges", "mutex_groups"}, "graph", errors);
  if (!errors.empty()) throw GraphError(errors);

  auto array_of = [&](const char* key) -> const Json* {
    if (!doc.contains(key)) return nullptr;
    if (!doc.at(key).is_array()) {
      errors.push_back(std::string("'") + key + "' must be an array");
      return nullptr;
    }
    return &doc.at(key);
  };

  if (const Json* arr = array_of("concepts")) {
    for (std::size_t i = 0; i < arr->size(); ++i) {
      const Json& c = (*arr)[i];
      const std::string where = "concepts[" + std::to_string(i) + "]";
      detail::require_only(c, {"name", "cardinality", "categories"}, where, errors);
      if (!c.is_object()) continue;
      ConceptNode node;
      node.name = detail::str_field(c, "name", where, errors);
      if (c.contains("cardinality")) {
        if (!c.at("cardinality").is_number_integer() || c.at("cardinality").get<long long>() < 1)
          errors.push_back(where + ": cardinality must be an integer >= 1");
        else
          node.cardinality = c.at("cardinality").get<std::size_t>();
      }
      if (c.contains("categories")) {
        if (!c.at("categories").is_array())
          errors.push_back(where + ": categories must be an array of strings");
        else
          for (const auto& s : c.at("categories")) {
            if (!s.is_string()) errors.push_back(where + ": category names must be strings");
            else node.categories.push_back(s.get<std::string>());
          }
      }
      spec.concepts.push_back(std::move(node));
    }
  }
  if (const Json* arr = array_of("tasks")) {
    for (const auto& t : *arr) {
      if (!t.is_string()) errors.push_back("tasks: entries must be strings");
      else spec.tasks.push_back(t.get<std::string>());
    }
  }
  if (const Json* arr = array_of("edges")) {
    for (std::size_t i = 0; i < arr->size(); ++i) {
      const Json& e = (*arr)[i];
      const std::string where = "edges[" + std::to_string(i) + "]";
      detail::require_only(e, {"src", "dst", "kind", "expansion"}, where, errors);
      if (!e.is_object()) continue;
      EdgeSpec edge;
      edge.src = detail::str_field(e, "src", where, errors);
      edge.dst = detail::str_field(e, "dst", where, errors);
      if (e.contains("kind")) {
        const Json& k = e.at("kind");
        if (k == "directed") edge.kind = EdgeKind::directed;
        else if (k == "bidirected") edge.kind = EdgeKind::bidirected;
        else errors.push_back(where + ": kind must be 'directed' or 'bidirected'");
      }
      if (e.contains("expansion")) {
        const Json& x = e.at("expansion");
        if (x == "matched") edge.expansion = Expansion::matched;
        else if (x == "pairwise") edge.expansion = Expansion::pairwise;
        else errors.push_back(where + ": expansion must be 'matched' or 'pairwise'");
      }
      spec.edges.push_back(std::move(edge));
    }
  }
  if (const Json* arr = array_of("mutex_groups")) {
    for (std::size_t i = 0; i < arr->size(); ++i) {
      const Json& g = (*arr)[i];
      const std::string where = "mutex_groups[" + std::to_string(i) + "]";
      detail::require_only(g, {"name", "members"}, where, errors);
      if (!g.is_object()) continue;
      MutexGroupSpec group;
      group.name = detail::str_field(g, "name", where, errors);
      if (!g.contains("members") || !g.at("members").is_array())
        errors.push_back(where + ": missing array field 'members'");
      else
        for (const auto& m : g.at("members")) {
          if (!m.is_string()) errors.push_back(where + ": members must be strings");
          else group.members.push_back(m.get<std::string>());
        }
      spec.mutex_groups.push_back(std::move(group));
    }
  }
  if (!errors.empty()) throw GraphError(errors);
  auto violations = validate(spec);
  if (!violations.empty()) throw GraphError(violations);
  return spec;
}

inline ReasoningGraphSpec parse_graph(const std::string& contents) {
  Json doc;
  try {
    doc = Json::parse(contents);
  } catch (const Json::parse_error& e) {
    throw GraphError({std::string("malformed JSON: ") + e.what()});
  }
  return parse_graph(doc);
}

// Canonical JSON form; keys are emitted sorted, so dump() is stable.
inline Json to_json(const ReasoningGraphSpec& spec) {
  Json doc;
  doc["concepts"] = Json::array();
  for (const auto& c : spec.concepts) {
    Json n{{"name", c.name}, {"cardinality", c.cardinality}};
    if (!c.categories.empty()) n["categories"] = c.categories;
    doc["concepts"].push_back(n);
  }
  doc["tasks"] = spec.tasks;
  doc["edges"] = Json::array();
  for (const auto& e : spec.edges) {
    Json j{{"src", e.src}, {"dst", e.dst}, {"kind", to_string(e.kind)}};
    if (e.expansion != Expansion::automatic) j["expansion"] = to_string(e.expansion);
    doc["edges"].push_back(j);
  }
  doc["mutex_groups"] = Json::array();
  for (const auto& g : spec.mutex_groups)
    doc["mutex_groups"].push_back({{"name", g.name}, {"members", g.members}});
  return doc;
}

// 64-bit FNV-1a over the canonical serialization, as 16 hex digits.
inline std::string fingerprint_text(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return os.str();
}

inline std::string graph_fingerprint(const ReasoningGraphSpec& spec) {
  return fingerprint_text(to_json(spec).dump());
}

// ---------------------------------------------------------------------------

using IndexPair = std::pair<std::size_t, std::size_t>;

struct BinarizedGraph {
  std::vector<std::string> concepts;                 // K
  std::vector<std::string> tasks;                    // L
  std::vector<std::optional<std::size_t>> group_of;  // per concept
  std::vector<std::string> group_names;
  Groups groups;
  std::vector<IndexPair> concept_edges;  // directed, bidirected already expanded
  std::vector<IndexPair> bidirected;     // unordered (a < b), for display
  std::vector<IndexPair> task_edges;     // concept -> task
  std::string fingerprint;

  std::size_t num_concepts() const { return concepts.size(); }
  std::size_t num_tasks() const { return tasks.size(); }

  std::optional<std::size_t> concept_index(const std::string& name) const {
    for (std::size_t i = 0; i < concepts.size(); ++i)
      if (concepts[i] == name) return i;
    return std::nullopt;
  }
  std::optional<std::size_t> task_index(const std::string& name) const {
    for (std::size_t i = 0; i < tasks.size(); ++i)
      if (tasks[i] == name) return i;
    return std::nullopt;
  }
};

inline BinarizedGraph binarize(const ReasoningGraphSpec& spec) {
  BinarizedGraph bg;
  bg.fingerprint = graph_fingerprint(spec);
  std::map<std::string, std::vector<std::size_t>> concept_ref;  // name -> binarized indices

  for (const auto& c : spec.concepts) {
    const auto names = ReasoningGraphSpec::binarized_names(c);
    std::vector<std::size_t> idx;
    for (const auto& n : names) {
      idx.push_back(bg.concepts.size());
      concept_ref[n] = {bg.concepts.size()};
      bg.concepts.push_back(n);
      bg.group_of.emplace_back();
    }
    concept_ref[c.name] = idx;
    if (c.cardinality > 1) {
      for (std::size_t i : idx) bg.group_of[i] = bg.groups.size();
      bg.group_names.push_back(c.name);
      bg.groups.push_back(idx);
    }
  }
  for (const auto& g : spec.mutex_groups) {
    std::vector<std::size_t> idx;
    for (const auto& m : g.members) idx.push_back(concept_ref.at(m).front());
    for (std::size_t i : idx) bg.group_of[i] = bg.groups.size();
    bg.group_names.push_back(g.name);
    bg.groups.push_back(idx);
  }
  bg.tasks = spec.tasks;
  std::map<std::string, std::size_t> task_ref;
  for (std::size_t i = 0; i < spec.tasks.size(); ++i) task_ref[spec.tasks[i]] = i;

  std::vector<std::string> errors;
  std::set<IndexPair> cedges, tedges, bidir;
  for (const auto& e : spec.edges) {
    const std::string label = "edge " + e.src + " -> " + e.dst;
    const auto& src = concept_ref.at(e.src);
    const bool to_task = task_ref.count(e.dst) > 0;
    const std::vector<std::size_t> dst =
        to_task ? std::vector<std::size_t>{task_ref.at(e.dst)} : concept_ref.at(e.dst);

    std::vector<IndexPair> pairs;
    const bool both_multi = src.size() > 1 && dst.size() > 1;
    const bool matched = e.expansion == Expansion::matched ||
                         (e.expansion == Expansion::automatic && both_multi);
    if (matched) {
      if (src.size() != dst.size()) {
        errors.push_back(label + ": index-matched expansion needs equal cardinalities (" +
                         std::to_string(src.size()) + " vs " + std::to_string(dst.size()) + ")");
        continue;
      }
      for (std::size_t i = 0; i < src.size(); ++i) pairs.emplace_back(src[i], dst[i]);
    } else {
      for (std::size_t s : src)
        for (std::size_t d : dst) pairs.emplace_back(s, d);
    }

    for (auto [s, d] : pairs) {
      if (to_task) {
        tedges.emplace(s, d);
        continue;
      }
      if (s == d) continue;
      if (bg.group_of[s] && bg.group_of[s] == bg.group_of[d]) {
        errors.push_back(label + ": connects mutex siblings '" + bg.concepts[s] + "' and '" +
                         bg.concepts[d] + "'");
        continue;
      }
      cedges.emplace(s, d);
      if (e.kind == EdgeKind::bidirected) {
        cedges.emplace(d, s);
        bidir.emplace(std::min(s, d), std::max(s, d));
      }
    }
  }
  if (!errors.empty()) throw GraphError(errors);
  bg.concept_edges.assign(cedges.begin(), cedges.end());
  bg.task_edges.assign(tedges.begin(), tedges.end());
  bg.bidirected.assign(bidir.begin(), bidir.end());
  return bg;
}

struct AdjacencyPair {
  Matrix concept_adj;  // A_C, K x K
  Matrix task_adj;     // A_Y, K x L
};

inline AdjacencyPair build_adjacency(const BinarizedGraph& bg) {
  const std::size_t k = bg.num_concepts();
  AdjacencyPair a{Matrix::identity(k), Matrix(k, bg.num_tasks())};
  for (auto [s, d] : bg.concept_edges) a.concept_adj(s, d) = 1.0;
  for (auto [s, d] : bg.task_edges) a.task_adj(s, d) = 1.0;
  return a;
}

// Concepts with at least one outgoing task edge, ascending.
inline std::vector<std::size_t> direct_concepts(const BinarizedGraph& bg) {
  std::set<std::size_t> s;
  for (auto [c, t] : bg.task_edges) s.insert(c);
  return {s.begin(), s.end()};
}

inline std::vector<std::string> export_logic_rules(const BinarizedGraph& bg) {
  std::vector<std::string> rules;
  auto exclusive = [&](const std::vector<std::string>& names) {
    for (std::size_t i = 0; i < names.size(); ++i)
      for (std::size_t j = i + 1; j < names.size(); ++j)
        rules.push_back(names[i] + " ⊓ " + names[j] + " ⊑ ⊥");
  };
  for (const auto& g : bg.groups) {
    std::vector<std::string> names;
    for (std::size_t i : g) names.push_back(bg.concepts[i]);
    exclusive(names);
  }

  const auto adj = build_adjacency(bg);
  const std::size_t k = bg.num_concepts();
  for (std::size_t i = 0; i < k; ++i) {
    std::string body;
    for (std::size_t j = 0; j < k; ++j)
      if (j != i && adj.concept_adj(j, i) != 0.0) body += "z_" + bg.concepts[j] + " ⊓ ";
    rules.push_back(bg.concepts[i] + " ← " + body + "z_" + bg.concepts[i]);
  }

  // Task classes are mutually exclusive outcomes.
  exclusive(bg.tasks);
  for (std::size_t t = 0; t < bg.num_tasks(); ++t) {
    std::string body;
    for (std::size_t i = 0; i < k; ++i)
      if (adj.task_adj(i, t) != 0.0) body += bg.concepts[i] + " ⊓ ";
    rules.push_back(bg.tasks[t] + " ← " + body + "z_" + bg.tasks[t]);
  }
  return rules;
}

}  // namespace cream
