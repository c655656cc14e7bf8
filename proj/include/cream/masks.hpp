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

// Structured masks. A target dependency pattern P (outputs x inputs) is
// realized by a stack of binary masks M_{d+1} ... M_1 whose boolean product
// has exactly the sparsity pattern of P.
//
// Construction: every unit carries a dependency set. Inputs carry {self},
// outputs carry their pattern row, hidden units are labeled with the distinct
// output rows (first-occurrence order, cycled to fill the width). A
// connection u -> v is kept iff set(u) ⊆ set(v). Any path from input k to
// output o therefore needs k ∈ row(o), and the hidden units labeled row(o)
// provide such a path for every k ∈ row(o).

#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "cream/numcore.hpp"

namespace cream {

struct MaskStack {
  Matrix pattern;                   // n x m
  std::vector<std::size_t> widths;  // h_1 .. h_d
  std::vector<Matrix> masks;        // M_1 (h_1 x m) .. M_{d+1} (n x h_d)
  std::vector<std::vector<std::vector<std::size_t>>> hidden_sets;  // per layer, per unit

  Matrix product_pattern() const {
    Matrix p = masks.front();
    for (std::size_t i = 1; i < masks.size(); ++i) p = boolean_product(masks[i], p);
    return p;
  }
};

// M_C = A_C^T ⊗ 1_{1 x d_C}: concept i reads exogenous block j iff A_C(j,i) = 1.
inline Matrix expand_concept_mask(const Matrix& concept_adj, std::size_t exo_dims) {
  if (exo_dims < 1) throw ConfigError("exogenous dimensions per concept must be >= 1");
  const std::size_t k = concept_adj.rows();
  Matrix m(k, k * exo_dims);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j)
      if (concept_adj(j, i) != 0.0)
        for (std::size_t d = 0; d < exo_dims; ++d) m(i, j * exo_dims + d) = 1.0;
  return m;
}

// M_Y = [A_Y^T | I_L]: columns [0,K) read concept activations, [K,K+L) the
// per-class side-channel units.
inline Matrix build_task_mask(const Matrix& task_adj) {
  const std::size_t k = task_adj.rows();
  const std::size_t l = task_adj.cols();
  Matrix m(l, k + l);
  for (std::size_t t = 0; t < l; ++t) {
    for (std::size_t i = 0; i < k; ++i) m(t, i) = task_adj(i, t);
    m(t, k + t) = 1.0;
  }
  return m;
}

inline MaskStack factorize(const Matrix& pattern, const std::vector<std::size_t>& hidden_widths) {
  const std::size_t n = pattern.rows();
  const std::size_t m = pattern.cols();
  MaskStack stack{pattern, hidden_widths, {}, {}};

  std::vector<std::vector<std::size_t>> out_sets(n);
  for (std::size_t o = 0; o < n; ++o) {
    for (std::size_t k = 0; k < m; ++k)
      if (pattern(o, k) != 0.0) out_sets[o].push_back(k);
    if (out_sets[o].empty())
      throw ConfigError("factorize: output row " + std::to_string(o) + " has no dependencies");
  }
  if (hidden_widths.empty()) {
    Matrix single(n, m);
    for (std::size_t o = 0; o < n; ++o)
      for (std::size_t k : out_sets[o]) single(o, k) = 1.0;
    stack.masks.push_back(std::move(single));
    return stack;
  }

  std::vector<std::vector<std::size_t>> distinct;
  for (const auto& s : out_sets)
    if (std::find(distinct.begin(), distinct.end(), s) == distinct.end()) distinct.push_back(s);

  for (std::size_t layer = 0; layer < hidden_widths.size(); ++layer) {
    const std::size_t h = hidden_widths[layer];
    if (h < distinct.size())
      throw ConfigError("factorize: hidden layer " + std::to_string(layer + 1) + " has width " +
                        std::to_string(h) + " but needs " + std::to_string(distinct.size()) +
                        " units for the distinct dependency sets (deficit " +
                        std::to_string(distinct.size() - h) + ")");
    std::vector<std::vector<std::size_t>> labels(h);
    for (std::size_t u = 0; u < h; ++u) labels[u] = distinct[u % distinct.size()];
    stack.hidden_sets.push_back(std::move(labels));
  }

  auto subset = [](const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
    return std::includes(b.begin(), b.end(), a.begin(), a.end());
  };

  // input -> first hidden
  {
    const auto& labels = stack.hidden_sets.front();
    Matrix mk(labels.size(), m);
    for (std::size_t u = 0; u < labels.size(); ++u)
      for (std::size_t k : labels[u]) mk(u, k) = 1.0;
    stack.masks.push_back(std::move(mk));
  }
  for (std::size_t layer = 1; layer < hidden_widths.size(); ++layer) {
    const auto& prev = stack.hidden_sets[layer - 1];
    const auto& cur = stack.hidden_sets[layer];
    Matrix mk(cur.size(), prev.size());
    for (std::size_t v = 0; v < cur.size(); ++v)
      for (std::size_t u = 0; u < prev.size(); ++u)
        if (subset(prev[u], cur[v])) mk(v, u) = 1.0;
    stack.masks.push_back(std::move(mk));
  }
  {
    const auto& last = stack.hidden_sets.back();
    Matrix mk(n, last.size());
    for (std::size_t o = 0; o < n; ++o)
      for (std::size_t u = 0; u < last.size(); ++u)
        if (subset(last[u], out_sets[o])) mk(o, u) = 1.0;
    stack.masks.push_back(std::move(mk));
  }

  Matrix expected(n, m);
  for (std::size_t o = 0; o < n; ++o)
    for (std::size_t k : out_sets[o]) expected(o, k) = 1.0;
  if (!(stack.product_pattern() == expected))
    throw ConfigError("factorize: internal error, mask product does not reproduce the pattern");
  return stack;
}

}  // namespace cream
