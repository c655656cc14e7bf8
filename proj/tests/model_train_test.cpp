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

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "test_support.hpp"

namespace cream {
namespace {

using testing::apparel_graph;

CreamModel small_model(CreamConfig cfg, std::uint64_t seed, std::size_t input_dim = 6,
                       ApparelVariant v = ApparelVariant::incomplete) {
  Rng rng(seed);
  return init_model(cfg, apparel_graph(v), input_dim, rng);
}

Vector random_vector(std::size_t n, Rng& rng) {
  Vector v(n);
  for (double& x : v) x = rng.normal(0.0, 1.0);
  return v;
}

const char* kTriple = R"({"concepts": [{"name": "G", "cardinality": 3, "categories": ["g0", "g1", "g2"]},
                                     {"name": "B"}],
                        "tasks": ["y0", "y1"],
                        "edges": [{"src": "G", "dst": "y0"}, {"src": "B", "dst": "y1"}]})";

TEST(InitModel, SplitterWidth) {
  CreamConfig cfg;
  const auto m = small_model(cfg, 1);
  EXPECT_EQ(m.splitter.out_dim(), 7u * 8u + 20u);
  EXPECT_EQ(m.side_projector->in_dim(), 20u);
}

TEST(InitModel, NoSideChannelDropsProjector) {
  CreamConfig cfg;
  cfg.side_dims = 0;
  const auto m = small_model(cfg, 1);
  EXPECT_FALSE(m.side_projector.has_value());
  EXPECT_EQ(m.splitter.out_dim(), 7u * 8u);
  EXPECT_EQ(m.classifier.layers().back().mask, m.adjacency.task_adj.transposed());
}

TEST(InitModel, SameSeedIdenticalParameters) {
  CreamConfig cfg;
  cfg.concept_depth = 1;
  EXPECT_EQ(model_to_json(small_model(cfg, 5)), model_to_json(small_model(cfg, 5)));
  EXPECT_NE(model_to_json(small_model(cfg, 5)), model_to_json(small_model(cfg, 6)));
}

TEST(Forward, DisabledSideChannelEqualsZeroedSide) {
  Rng rng(2);
  const auto m = small_model(CreamConfig{}, 3);
  const Vector x = random_vector(m.input_dim, rng);
  const auto on = forward(m, x, Phase::infer, SideChannel::enabled);
  const auto off = forward(m, x, Phase::infer, SideChannel::disabled);
  EXPECT_EQ(off.task_logits, classify(m, on.concepts, Vector(m.num_tasks(), 0.0)));
  EXPECT_EQ(off.concepts, on.concepts);
}

TEST(Forward, TrainPhaseDropsWholeSideChannel) {
  Rng rng(4);
  CreamConfig cfg;
  cfg.dropout = 0.5;
  const auto m = small_model(cfg, 3);
  const Vector x = random_vector(m.input_dim, rng);
  std::size_t dropped = 0;
  for (int i = 0; i < 400; ++i) {
    const auto t = forward(m, x, Phase::train, SideChannel::enabled, &rng);
    if (t.side_state == SideState::dropped) {
      ++dropped;
      for (double v : t.side_out) EXPECT_EQ(v, 0.0);
    }
  }
  EXPECT_GT(dropped, 150u);
  EXPECT_LT(dropped, 250u);
}

TEST(Forward, SeveredConceptInputsHaveZeroJacobian) {
  Rng rng(8);
  for (std::size_t depth = 0; depth < 3; ++depth) {
    CreamConfig cfg;
    cfg.exo_dims = 2;
    cfg.concept_depth = depth;
    auto m = small_model(cfg, depth);
    testing::scramble_all_weights(m.concept_block, rng);
    const Matrix j = testing::mlp_jacobian(m.concept_block, random_vector(16, rng));
    for (std::size_t i = 0; i < 8; ++i)
      for (std::size_t src = 0; src < 8; ++src)
        for (std::size_t d = 0; d < 2; ++d)
          if (m.adjacency.concept_adj(src, i) == 0.0) EXPECT_EQ(j(i, src * 2 + d), 0.0);
  }
}

TEST(Forward, HardModeStraightThrough) {
  CreamConfig cfg;
  cfg.mode = ConceptMode::hard;
  Rng rng(1);
  const auto m = init_model(cfg, binarize(parse_graph(std::string(kTriple))), 3, rng);
  const Vector logits{2.0, 0.1, -1.0, 0.3};
  const Vector c = activate_concepts(m, logits);
  EXPECT_EQ(c, (Vector{1, 0, 0, 1}));
  const Vector up{1.0, -2.0, 0.5, 1.0};
  const Vector s = softmax(Vector{2.0, 0.1, -1.0});
  const double dot = s[0] * up[0] + s[1] * up[1] + s[2] * up[2];
  const Vector dl = concept_activation_vjp(m, logits, up);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(dl[i], s[i] * (up[i] - dot), 1e-15);
}

TEST(Percentiles, ConstantActivation) {
  const auto p = percentiles_of(std::vector<Vector>(5, Vector{0.7}));
  EXPECT_DOUBLE_EQ(p.low[0], 0.7);
  EXPECT_DOUBLE_EQ(p.high[0], 0.7);
}

TEST(Percentiles, InterpolatedQuantiles) {
  std::vector<Vector> acts;
  for (int i = 10; i >= 0; --i) acts.push_back({i / 10.0});
  const auto p = percentiles_of(acts);
  EXPECT_NEAR(p.low[0], 0.05, 1e-12);
  EXPECT_NEAR(p.high[0], 0.95, 1e-12);
}

TEST(Percentiles, EmptyDatasetRejected) {
  EXPECT_THROW(percentiles_of({}), DataError);
}

class InterventionTest : public ::testing::Test {
 protected:
  void SetUp() override {
    Rng rng(9);
    model = small_model(CreamConfig{}, 9);
    Matrix feats(50, model.input_dim);
    for (double& v : feats.data()) v = rng.normal(0.0, 1.0);
    compute_percentiles(model, feats);
    x = random_vector(model.input_dim, rng);
  }
  CreamModel model;
  Vector x;
};

TEST_F(InterventionTest, IndirectConceptLeavesTaskLogits) {
  const auto base = forward(model, x, Phase::infer, SideChannel::enabled);
  const std::size_t clothes = *model.graph.concept_index("Clothes");
  for (int truth : {0, 1}) {
    const std::vector<Intervention> iv{{clothes, truth}};
    EXPECT_EQ(apply_interventions(model, x, iv, SideChannel::enabled).task_logits, base.task_logits);
  }
}

TEST_F(InterventionTest, GroupedInterventionUsesPercentiles) {
  const auto& group = model.graph.groups[1];
  const auto ivs = group_intervention(model, 1, group[1]);
  const auto t = apply_interventions(model, x, ivs, SideChannel::enabled);
  for (std::size_t k = 0; k < group.size(); ++k) {
    const std::size_t c = group[k];
    EXPECT_EQ(t.concepts[c], k == 1 ? model.percentiles.high[c] : model.percentiles.low[c]);
  }
}

TEST_F(InterventionTest, UnknownConceptRejected) {
  const std::vector<Intervention> iv{{99, 1}};
  EXPECT_THROW(apply_interventions(model, x, iv, SideChannel::enabled), InterventionError);
}

TEST_F(InterventionTest, TwoActiveInGroupNamesGroup) {
  const auto& g = model.graph.groups[0];
  const std::vector<Intervention> iv{{g[0], 1}, {g[1], 1}};
  try {
    apply_interventions(model, x, iv, SideChannel::enabled);
    FAIL();
  } catch (const InterventionError& e) {
    EXPECT_NE(std::string(e.what()).find(model.graph.group_names[0]), std::string::npos);
  }
}

TEST(JointLoss, WeightedSum) {
  ForwardTrace t;
  t.task_logits = Vector(10, 0.0);
  t.concept_logits = Vector{0.0};
  const auto uniform = joint_loss(t, Vector{1.0}, 3, 1.0, Groups{});
  EXPECT_NEAR(uniform.task, std::log(10.0), 1e-12);
  EXPECT_NEAR(uniform.total, std::log(10.0) + std::log(2.0), 1e-12);
  const auto half = joint_loss(t, Vector{1.0}, 3, 0.5, Groups{});
  EXPECT_NEAR(half.total, std::log(10.0) + 0.5 * std::log(2.0), 1e-12);
  EXPECT_NEAR(half.d_concept_logits[0], 0.5 * (0.5 - 1.0), 1e-15);
}

TEST(GradientFidelity, RandomModelsMatchFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(100 + seed);
    CreamConfig cfg;
    cfg.exo_dims = 1 + rng.index(2);
    cfg.side_dims = rng.index(2) ? 3 : 0;
    cfg.concept_depth = rng.index(2);
    cfg.task_depth = rng.index(2);
    cfg.backbone_width = rng.index(2) ? 5 : 0;
    cfg.mutex_softmax = rng.index(2) == 0;
    cfg.concept_weight = 0.5 + rng.uniform(0.0, 1.0);
    auto m = small_model(cfg, seed, 4);
    ASSERT_LE(testing::parameter_count(m), 1000u);
    const Vector x = random_vector(4, rng);
    Vector c(8, 0.0);
    c[0] = c[2] = 1.0;
    EXPECT_LT(testing::gradient_check(m, x, c, rng.index(10)), 1e-4) << "seed " << seed;
  }
}

TEST(Train, SameSeedSameHistory) {
  ApparelGenConfig g;
  g.n_train = 400;
  g.n_val = 100;
  g.n_test = 100;
  const auto data = generate_apparel(g);
  TrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 64;
  auto run = [&] {
    Rng rng(1);
    auto m = init_model(CreamConfig{}, data.graph, 16, rng);
    auto h = train(m, data.splits.train, &data.splits.val, tc);
    return std::pair{h, model_to_json(m)};
  };
  const auto a = run(), b = run();
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
  EXPECT_LT(a.first.total_loss.back(), a.first.total_loss.front());
}

TEST(Train, MaskedWeightsStayZero) {
  ApparelGenConfig g;
  g.n_train = 300;
  const auto data = generate_apparel(g);
  Rng rng(2);
  CreamConfig cfg;
  cfg.concept_depth = 1;
  auto m = init_model(cfg, data.graph, 16, rng);
  TrainConfig tc;
  tc.epochs = 2;
  train(m, data.splits.train, nullptr, tc);
  for (auto* b : m.blocks())
    for (const auto& l : b->layers())
      for (std::size_t k = 0; k < l.weights.data().size(); ++k)
        if (l.mask.data()[k] == 0.0) EXPECT_EQ(l.weights.data()[k], 0.0);
}

TEST(Baseline, DegenerateSingleClass) {
  const auto bg = binarize(parse_graph(std::string(
      R"({"concepts": [{"name": "A"}], "tasks": ["only"], "edges": [{"src": "A", "dst": "only"}]})")));
  LabeledDataset ds;
  ds.features = Matrix(20, 1);
  ds.concepts = Matrix(20, 1);
  for (std::size_t i = 0; i < 20; ++i) ds.concepts(i, 0) = static_cast<double>(i % 2);
  ds.tasks.assign(20, 0);
  ds.concept_names = bg.concepts;
  ds.task_names = bg.tasks;
  TrainConfig tc;
  tc.epochs = 2;
  EXPECT_DOUBLE_EQ(train_concept_baseline(ds, ds, tc).test_accuracy, 100.0);
}

TEST(Checkpoint, RoundTrip) {
  CreamConfig cfg;
  cfg.task_depth = 1;
  auto m = small_model(cfg, 12);
  m.percentiles = PercentileTable{Vector(8, 0.1), Vector(8, 0.9)};
  const auto path = std::filesystem::temp_directory_path() / "cream_checkpoint_test.json";
  save_checkpoint(m, path.string());
  const auto back = load_checkpoint(path.string());
  EXPECT_EQ(model_to_json(back), model_to_json(m));
  EXPECT_THROW(load_checkpoint(path.string(), "0000"), DataError);
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace cream
