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

// JSON API over a loaded checkpoint and dataset. Handlers are pure functions
// of (Session, request); the HTTP layer only routes and serializes.

#pragma once

#include <httplib.h>

#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "cream/data.hpp"
#include "cream/interpret.hpp"
#include "cream/model.hpp"

namespace cream {

struct FingerprintMismatch : ConfigError {
  using ConfigError::ConfigError;
};
struct NotFound : UsageError {
  using UsageError::UsageError;
};
struct BadRequest : UsageError {
  using UsageError::UsageError;
};

struct Session {
  CreamModel model;
  LabeledDataset data;
  Json graph_view;
  Json headline;
};

inline Json graph_view(const CreamModel& model) {
  const auto& bg = model.graph;
  const auto direct = direct_concepts(bg);
  Json nodes = Json::array();
  for (std::size_t i = 0; i < bg.num_concepts(); ++i) {
    const auto g = bg.group_of[i];
    nodes.push_back({{"id", bg.concepts[i]},
                     {"kind", "concept"},
                     {"index", i},
                     {"group", g ? Json(bg.group_names[*g]) : Json(nullptr)},
                     {"direct", std::binary_search(direct.begin(), direct.end(), i)}});
  }
  for (std::size_t t = 0; t < bg.num_tasks(); ++t)
    nodes.push_back({{"id", bg.tasks[t]}, {"kind", "task"}, {"index", t}});
  Json edges = Json::array();
  for (auto [a, b] : bg.concept_edges) {
    const bool bidi = std::find(bg.bidirected.begin(), bg.bidirected.end(),
                                IndexPair{std::min(a, b), std::max(a, b)}) != bg.bidirected.end();
    if (bidi && a > b) continue;
    edges.push_back({{"source", bg.concepts[a]},
                     {"target", bg.concepts[b]},
                     {"kind", bidi ? "bidirected" : "directed"}});
  }
  for (auto [c, t] : bg.task_edges)
    edges.push_back({{"source", bg.concepts[c]}, {"target", bg.tasks[t]}, {"kind", "directed"}});
  Json groups = Json::array();
  for (std::size_t g = 0; g < bg.groups.size(); ++g) {
    Json members = Json::array();
    for (std::size_t i : bg.groups[g]) members.push_back(bg.concepts[i]);
    groups.push_back({{"name", bg.group_names[g]}, {"members", members}});
  }
  Json direct_names = Json::array();
  for (std::size_t i : direct) direct_names.push_back(bg.concepts[i]);
  return {{"nodes", nodes},
          {"edges", edges},
          {"mutex_groups", groups},
          {"direct_concepts", direct_names},
          {"fingerprint", bg.fingerprint}};
}

inline Session make_session(CreamModel model, LabeledDataset data) {
  if (!data.graph_fingerprint.empty() && data.graph_fingerprint != model.graph.fingerprint)
    throw FingerprintMismatch("dataset graph fingerprint " + data.graph_fingerprint +
                              " does not match the checkpoint's " + model.graph.fingerprint);
  validate_dataset(data, model.graph);
  Session s{std::move(model), std::move(data), {}, {}};
  s.graph_view = graph_view(s.model);
  const auto with_side = evaluate(s.model, s.data, SideChannel::enabled);
  const auto without = evaluate(s.model, s.data, SideChannel::disabled);
  s.headline = {{"samples", s.data.size()},
                {"task_accuracy", with_side.task_accuracy},
                {"task_accuracy_no_side_channel", without.task_accuracy},
                {"mean_concept_accuracy", with_side.mean_concept_accuracy}};
  return s;
}

// ---------------------------------------------------------------------------
// Prediction payloads

inline Json prediction_json(const CreamModel& model, std::span<const double> logits) {
  const Vector p = softmax(logits);
  const std::size_t best = argmax(p);
  return {{"logits", Vector(logits.begin(), logits.end())},
          {"probabilities", p},
          {"prediction", best},
          {"label", model.graph.tasks[best]}};
}

inline Json concepts_json(const CreamModel& model, const ForwardTrace& t) {
  const auto& bg = model.graph;
  const auto direct = direct_concepts(bg);
  Json out = Json::array();
  for (std::size_t i = 0; i < model.num_concepts(); ++i) {
    const auto g = bg.group_of[i];
    out.push_back({{"index", i},
                   {"name", bg.concepts[i]},
                   {"group", g ? Json(bg.group_names[*g]) : Json(nullptr)},
                   {"group_id", g ? Json(*g) : Json(nullptr)},
                   {"direct", std::binary_search(direct.begin(), direct.end(), i)},
                   {"logit", t.concept_logits[i]},
                   {"value", t.concepts[i]}});
  }
  return out;
}

// Full and concept-only predictions for one trace (after any interventions).
inline Json explain_trace(const CreamModel& model, const ForwardTrace& t) {
  const Vector zero(model.num_tasks(), 0.0);
  return {{"concepts", concepts_json(model, t)},
          {"side_channel", to_string(t.side_state)},
          {"full", prediction_json(model, t.task_logits)},
          {"concept_only", prediction_json(model, classify(model, t.concepts, zero))}};
}

// Shared by `eval --explain` and POST /api/predict.
inline Json explain_sample(const CreamModel& model, std::span<const double> features, SideChannel side) {
  return explain_trace(model, forward(model, features, Phase::infer, side));
}

// ---------------------------------------------------------------------------
// Handlers

struct ApiResponse {
  int status = 200;
  Json body;
};

inline ApiResponse error_response(int status, const std::string& message) {
  return {status, {{"error", message}, {"status", status}}};
}

inline std::size_t sample_id_of(const Session& s, const Json& v) {
  if (!v.is_number_integer() && !v.is_number_unsigned()) throw BadRequest("sample_id must be an integer");
  const auto id = v.get<long long>();
  if (id < 0 || static_cast<std::size_t>(id) >= s.data.size())
    throw NotFound("unknown sample " + std::to_string(id));
  return static_cast<std::size_t>(id);
}

inline void check_fingerprint(const Session& s, const Json& body) {
  if (body.contains("graph_fingerprint") &&
      body.at("graph_fingerprint") != Json(s.model.graph.fingerprint))
    throw FingerprintMismatch("request graph fingerprint does not match the loaded model");
}

inline bool side_flag(const Json& body) {
  if (!body.contains("side_channel")) return true;
  if (!body.at("side_channel").is_boolean()) throw BadRequest("side_channel must be a boolean");
  return body.at("side_channel").get<bool>();
}

// Resolves {sample_id} or {features} to a feature vector plus optional id.
inline std::pair<Vector, std::optional<std::size_t>> request_features(const Session& s, const Json& body) {
  if (body.contains("sample_id")) {
    const std::size_t id = sample_id_of(s, body.at("sample_id"));
    const auto row = s.data.features.row(id);
    return {Vector(row.begin(), row.end()), id};
  }
  if (body.contains("features")) {
    const auto& f = body.at("features");
    if (!f.is_array()) throw BadRequest("features must be an array of numbers");
    Vector x;
    for (const auto& v : f) {
      if (!v.is_number()) throw BadRequest("features must be an array of numbers");
      x.push_back(v.get<double>());
    }
    if (x.size() != s.model.input_dim)
      throw BadRequest("features has " + std::to_string(x.size()) + " entries, model expects " +
                       std::to_string(s.model.input_dim));
    if (!all_finite(x)) throw BadRequest("features must be finite");
    return {std::move(x), std::nullopt};
  }
  throw BadRequest("request needs sample_id or features");
}

inline void attach_truth(const CreamModel& model, const LabeledDataset& ds, Json& out,
                         std::optional<std::size_t> id) {
  if (!id) return;
  out["sample_id"] = *id;
  out["true_class"] = ds.tasks[*id];
  out["true_label"] = model.graph.tasks[ds.tasks[*id]];
  const auto c = ds.concepts.row(*id);
  out["true_concepts"] = Vector(c.begin(), c.end());
}

// Prediction payload for one dataset row; `eval --explain` prints exactly this.
inline Json explain_dataset_sample(const CreamModel& model, const LabeledDataset& ds, std::size_t id,
                                   SideChannel side) {
  if (id >= ds.size()) throw NotFound("unknown sample " + std::to_string(id));
  Json out = explain_sample(model, ds.features.row(id), side);
  attach_truth(model, ds, out, id);
  return out;
}

template <class F>
ApiResponse guarded(F&& f) {
  try {
    return {200, f()};
  } catch (const FingerprintMismatch& e) {
    return error_response(409, e.what());
  } catch (const NotFound& e) {
    return error_response(404, e.what());
  } catch (const UsageError& e) {
    return error_response(400, e.what());
  } catch (const ConfigError& e) {
    return error_response(400, e.what());
  } catch (const DataError& e) {
    return error_response(400, e.what());
  } catch (const Json::exception& e) {
    return error_response(400, std::string("malformed request: ") + e.what());
  }
}

inline Json parse_body(const std::string& text) {
  Json body;
  try {
    body = Json::parse(text);
  } catch (const Json::exception& e) {
    throw BadRequest(std::string("malformed JSON body: ") + e.what());
  }
  if (!body.is_object()) throw BadRequest("request body must be a JSON object");
  return body;
}

inline ApiResponse handle_graph(const Session& s) { return {200, s.graph_view}; }

inline ApiResponse handle_model(const Session& s) {
  return {200,
          {{"config", config_to_json(s.model.config)},
           {"graph_fingerprint", s.model.graph.fingerprint},
           {"concepts", s.model.graph.concepts},
           {"tasks", s.model.graph.tasks},
           {"input_dim", s.model.input_dim},
           {"epochs_seen", s.model.epochs_seen},
           {"percentiles", {{"low", s.model.percentiles.low}, {"high", s.model.percentiles.high}}},
           {"metrics", s.headline}}};
}

inline ApiResponse handle_samples(const Session& s, long long offset, long long limit) {
  return guarded([&]() -> Json {
    if (offset < 0) throw BadRequest("offset must be >= 0");
    if (limit < 1) throw BadRequest("limit must be >= 1");
    Json items = Json::array();
    const auto n = static_cast<long long>(s.data.size());
    for (long long i = offset; i < std::min(n, offset + limit); ++i) {
      const auto id = static_cast<std::size_t>(i);
      const auto c = s.data.concepts.row(id);
      items.push_back({{"id", id},
                       {"true_class", s.data.tasks[id]},
                       {"true_label", s.model.graph.tasks[s.data.tasks[id]]},
                       {"true_concepts", Vector(c.begin(), c.end())}});
    }
    return {{"total", s.data.size()}, {"offset", offset}, {"limit", limit}, {"samples", items}};
  });
}

inline ApiResponse handle_predict(const Session& s, const std::string& text) {
  return guarded([&]() -> Json {
    const Json body = parse_body(text);
    check_fingerprint(s, body);
    const bool side = side_flag(body);
    const SideChannel sc = side ? SideChannel::enabled : SideChannel::disabled;
    if (body.contains("sample_id"))
      return explain_dataset_sample(s.model, s.data, sample_id_of(s, body.at("sample_id")), sc);
    auto [x, id] = request_features(s, body);
    return explain_sample(s.model, x, sc);
  });
}

inline std::vector<Intervention> parse_overrides(const Session& s, const Json& body) {
  if (!body.contains("overrides")) return {};
  const auto& list = body.at("overrides");
  if (!list.is_array()) throw BadRequest("overrides must be an array");
  std::vector<Intervention> out;
  for (const auto& o : list) {
    if (!o.is_object() || !o.contains("concept") || !o.contains("value"))
      throw BadRequest("each override needs concept and value");
    std::size_t index = 0;
    const auto& c = o.at("concept");
    if (c.is_string()) {
      const auto i = s.model.graph.concept_index(c.get<std::string>());
      if (!i) throw BadRequest("unknown concept '" + c.get<std::string>() + "'");
      index = *i;
    } else if (c.is_number_unsigned() || c.is_number_integer()) {
      const auto i = c.get<long long>();
      if (i < 0 || static_cast<std::size_t>(i) >= s.model.num_concepts())
        throw BadRequest("unknown concept index " + std::to_string(i));
      index = static_cast<std::size_t>(i);
    } else {
      throw BadRequest("override concept must be a name or an index");
    }
    const auto& v = o.at("value");
    int truth = -1;
    if (v.is_boolean()) truth = v.get<bool>() ? 1 : 0;
    else if (v.is_number() && (v.get<double>() == 0.0 || v.get<double>() == 1.0))
      truth = static_cast<int>(v.get<double>());
    if (truth < 0) throw BadRequest("override value must be 0 or 1");
    out.push_back({index, truth});
  }
  return out;
}

inline ApiResponse handle_intervene(const Session& s, const std::string& text) {
  return guarded([&]() -> Json {
    const Json body = parse_body(text);
    check_fingerprint(s, body);
    const bool side = side_flag(body);
    auto [x, id] = request_features(s, body);
    const auto ivs = parse_overrides(s, body);
    const SideChannel sc = side ? SideChannel::enabled : SideChannel::disabled;
    const ForwardTrace before = forward(s.model, x, Phase::infer, sc);
    const ForwardTrace after = apply_interventions(s.model, x, ivs, sc);
    Json b = explain_trace(s.model, before);
    Json a = explain_trace(s.model, after);
    Vector delta(s.model.num_tasks()), delta_concept(s.model.num_tasks());
    const auto pa = a["full"]["probabilities"].get<Vector>();
    const auto pb = b["full"]["probabilities"].get<Vector>();
    const auto ca = a["concept_only"]["probabilities"].get<Vector>();
    const auto cb = b["concept_only"]["probabilities"].get<Vector>();
    for (std::size_t t = 0; t < delta.size(); ++t) {
      delta[t] = pa[t] - pb[t];
      delta_concept[t] = ca[t] - cb[t];
    }
    Json applied = Json::array();
    for (const auto& iv : ivs)
      applied.push_back({{"concept", s.model.graph.concepts[iv.concept_index]},
                         {"truth", iv.truth},
                         {"value", intervention_value(s.model, iv)}});
    Json out = {{"before", b},
                {"after", a},
                {"delta", delta},
                {"delta_concept_only", delta_concept},
                {"applied", applied}};
    attach_truth(s.model, s.data, out, id);
    return out;
  });
}

// ---------------------------------------------------------------------------
// HTTP

inline void send(httplib::Response& res, const ApiResponse& r) {
  res.status = r.status;
  res.set_content(r.body.dump(), "application/json");
}

inline std::unique_ptr<httplib::Server> make_server(const Session& s, const std::string& static_dir = {}) {
  auto srv = std::make_unique<httplib::Server>();
  srv->set_default_headers({{"Access-Control-Allow-Origin", "*"},
                            {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                            {"Access-Control-Allow-Headers", "Content-Type"}});
  srv->Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  srv->Get("/api/graph", [&s](const httplib::Request&, httplib::Response& res) { send(res, handle_graph(s)); });
  srv->Get("/api/model", [&s](const httplib::Request&, httplib::Response& res) { send(res, handle_model(s)); });
  srv->Get("/api/samples", [&s](const httplib::Request& req, httplib::Response& res) {
    auto num = [&](const char* key, long long fallback) -> std::optional<long long> {
      if (!req.has_param(key)) return fallback;
      try {
        std::size_t used = 0;
        const std::string v = req.get_param_value(key);
        const long long n = std::stoll(v, &used);
        if (used != v.size()) return std::nullopt;
        return n;
      } catch (const std::logic_error&) {
        return std::nullopt;
      }
    };
    const auto offset = num("offset", 0);
    const auto limit = num("limit", 50);
    if (!offset || !limit) return send(res, error_response(400, "offset and limit must be integers"));
    send(res, handle_samples(s, *offset, *limit));
  });
  srv->Post("/api/predict", [&s](const httplib::Request& req, httplib::Response& res) {
    send(res, handle_predict(s, req.body));
  });
  srv->Post("/api/intervene", [&s](const httplib::Request& req, httplib::Response& res) {
    send(res, handle_intervene(s, req.body));
  });
  if (!static_dir.empty() && !srv->set_mount_point("/", static_dir))
    throw ConfigError("static directory '" + static_dir + "' does not exist");
  return srv;
}

// Blocks until the server stops.
inline void serve(const Session& s, const std::string& host, int port, const std::string& static_dir,
                  std::ostream& log) {
  auto srv = make_server(s, static_dir);
  log << "serving " << s.data.size() << " samples on http://" << host << ':' << port << '\n';
  log.flush();
  if (!srv->listen(host, port)) throw ConfigError("cannot bind " + host + ":" + std::to_string(port));
}

}  // namespace cream
