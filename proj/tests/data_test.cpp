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

#include <filesystem>
#include <map>
#include <set>

#include "test_support.hpp"

namespace cream {
namespace {

namespace fs = std::filesystem;

std::set<std::string> active_concepts(const LabeledDataset& ds, std::size_t row) {
  std::set<std::string> out;
  for (std::size_t i = 0; i < ds.num_concepts(); ++i)
    if (ds.concepts(row, i) == 1.0) out.insert(ds.concept_names[i]);
  return out;
}

std::map<std::size_t, std::vector<double>> concept_row_per_class(const LabeledDataset& ds) {
  std::map<std::size_t, std::vector<double>> out;
  for (std::size_t n = 0; n < ds.size(); ++n)
    out[ds.tasks[n]] = {ds.concepts.row(n).begin(), ds.concepts.row(n).end()};
  return out;
}

ApparelData small(ApparelVariant v, std::uint64_t seed = 0) {
  ApparelGenConfig g;
  g.variant = v;
  g.n_train = 200;
  g.n_val = 50;
  g.n_test = 50;
  g.seed = seed;
  return generate_apparel(g);
}

class TempDir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = fs::temp_directory_path() /
          ("cream_data_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }
  fs::path dir;
};

TEST(Apparel, TrouserConcepts) {
  const auto d = small(ApparelVariant::incomplete);
  const auto& ds = d.splits.train;
  const std::size_t trouser = *d.graph.task_index("Trouser");
  for (std::size_t n = 0; n < ds.size(); ++n)
    if (ds.tasks[n] == trouser) EXPECT_EQ(active_concepts(ds, n), (std::set<std::string>{"Clothes", "Bottoms"}));
}

TEST(Apparel, IncompleteTopsAreIndistinguishable) {
  const auto d = small(ApparelVariant::incomplete);
  const auto rows = concept_row_per_class(d.splits.train);
  const auto& bg = d.graph;
  EXPECT_EQ(rows.at(*bg.task_index("T-shirt")), rows.at(*bg.task_index("Pullover")));
  EXPECT_EQ(rows.at(*bg.task_index("T-shirt")), rows.at(*bg.task_index("Shirt")));
}

TEST(Apparel, CompleteRowsAreInjective) {
  const auto d = small(ApparelVariant::complete);
  const auto rows = concept_row_per_class(d.splits.train);
  ASSERT_EQ(rows.size(), 10u);
  std::set<std::vector<double>> distinct;
  for (const auto& [cls, r] : rows) distinct.insert(r);
  EXPECT_EQ(distinct.size(), 10u);
}

TEST(Apparel, BalancedClassesAndValidRows) {
  const auto d = small(ApparelVariant::incomplete);
  std::map<std::size_t, std::size_t> counts;
  for (auto y : d.splits.train.tasks) ++counts[y];
  for (const auto& [cls, c] : counts) EXPECT_EQ(c, 20u);
  EXPECT_NO_THROW(validate_dataset(d.splits.train, d.graph));
}

TEST(Apparel, SameSeedSameData) {
  const auto a = small(ApparelVariant::incomplete, 3), b = small(ApparelVariant::incomplete, 3);
  EXPECT_EQ(a.splits.test.features, b.splits.test.features);
  EXPECT_EQ(a.splits.test.tasks, b.splits.test.tasks);
}

TEST_F(TempDir, SaveLoadRoundTrip) {
  const auto d = small(ApparelVariant::incomplete);
  save_dataset(d.splits.train, dir / "train.csv");
  const auto back = load_dataset(dir / "train.csv", d.graph);
  EXPECT_EQ(back.features, d.splits.train.features);
  EXPECT_EQ(back.concepts, d.splits.train.concepts);
  EXPECT_EQ(back.tasks, d.splits.train.tasks);
  EXPECT_EQ(back.concept_names, d.splits.train.concept_names);
  EXPECT_EQ(back.graph_fingerprint, d.graph.fingerprint);
}

TEST_F(TempDir, ConceptCountMismatchNamesBothCounts) {
  const auto d = small(ApparelVariant::incomplete);
  save_dataset(d.splits.train, dir / "train.csv");
  const auto other = testing::apparel_graph(ApparelVariant::complete);
  try {
    load_dataset(dir / "train.csv", other);
    FAIL();
  } catch (const DataError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find(std::to_string(d.graph.num_concepts())), std::string::npos) << msg;
    EXPECT_NE(msg.find(std::to_string(other.num_concepts())), std::string::npos) << msg;
  }
}

TEST_F(TempDir, MutexViolationNamesRow) {
  auto ds = small(ApparelVariant::incomplete).splits.train;
  const auto bg = testing::apparel_graph(ApparelVariant::incomplete);
  for (std::size_t i : bg.groups[1]) ds.concepts(7, i) = 1.0;
  save_dataset(ds, dir / "bad.csv");
  try {
    load_dataset(dir / "bad.csv", bg);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("row 7"), std::string::npos) << e.what();
  }
}

TEST(Split, SizesAndDeterminism) {
  ApparelGenConfig g;
  g.n_train = 1000;
  const auto full = generate_apparel(g).splits.train;
  const auto a = split(full, {0.8, 0.1, 0.1}, 4);
  EXPECT_EQ(a.train.size(), 800u);
  EXPECT_EQ(a.val.size(), 100u);
  EXPECT_EQ(a.test.size(), 100u);
  const auto b = split(full, {0.8, 0.1, 0.1}, 4);
  EXPECT_EQ(a.test.features, b.test.features);
  for (const auto* part : {&a.train, &a.val, &a.test}) {
    std::map<std::size_t, double> share;
    for (auto y : part->tasks) share[y] += 1.0 / static_cast<double>(part->size());
    for (const auto& [cls, s] : share) EXPECT_NEAR(s, 0.1, 0.02);
  }
}

TEST(Split, SingleClassDegradesGracefully) {
  LabeledDataset ds;
  ds.features = Matrix(10, 1);
  ds.concepts = Matrix(10, 0);
  ds.tasks.assign(10, 0);
  ds.task_names = {"only"};
  const auto s = split(ds, {0.6, 0.2, 0.2}, 1);
  EXPECT_EQ(s.train.size() + s.val.size() + s.test.size(), 10u);
  EXPECT_EQ(s.train.size(), 6u);
}

TEST(Split, FractionsMustSumToOne) {
  LabeledDataset ds;
  EXPECT_THROW(split(ds, {0.5, 0.2, 0.2}, 0), ConfigError);
}

}  // namespace
}  // namespace cream
