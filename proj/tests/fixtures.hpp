#pragma once

// Shared fixtures: the two-feature sickness-score trees whose expected
// values (20/25) and outputs (80/90) anchor the inconsistency tests, plus a
// few synthetic model builders used across suites.

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "arbor/model.hpp"
#include "arbor/train.hpp"

namespace fixtures {

// Model A: output 80 iff fever AND cough. Root splits fever, the fever=1
// subtree splits cough; leaf covers 2/1/1 so E[f] = 20 and f(1,1) = 80.
inline arbor::TreeEnsemble model_a() {
  arbor::Tree t;
  t.children_left = {1, arbor::kLeaf, 3, arbor::kLeaf, arbor::kLeaf};
  t.children_right = {2, arbor::kLeaf, 4, arbor::kLeaf, arbor::kLeaf};
  t.children_default = {1, arbor::kLeaf, 3, arbor::kLeaf, arbor::kLeaf};
  t.split_feature = {0, 0, 1, 0, 0};
  t.threshold = {0.5, 0.0, 0.5, 0.0, 0.0};
  t.value = {0.0, 0.0, 0.0, 0.0, 80.0};
  t.cover = {4.0, 2.0, 2.0, 1.0, 1.0};
  arbor::TreeEnsemble ens;
  ens.num_features = 2;
  ens.feature_names = {"fever", "cough"};
  ens.trees.push_back(std::move(t));
  arbor::validate_ensemble(ens);
  return ens;
}

// Model B: root splits cough, the cough=1 subtree splits fever with leaves
// 10/90, so cough matters strictly more than in model A (E[f] = 25,
// f(1,1) = 90).
inline arbor::TreeEnsemble model_b() {
  arbor::Tree t;
  t.children_left = {1, arbor::kLeaf, 3, arbor::kLeaf, arbor::kLeaf};
  t.children_right = {2, arbor::kLeaf, 4, arbor::kLeaf, arbor::kLeaf};
  t.children_default = {1, arbor::kLeaf, 3, arbor::kLeaf, arbor::kLeaf};
  t.split_feature = {1, 0, 0, 0, 0};
  t.threshold = {0.5, 0.0, 0.5, 0.0, 0.0};
  t.value = {0.0, 0.0, 0.0, 10.0, 90.0};
  t.cover = {4.0, 2.0, 2.0, 1.0, 1.0};
  arbor::TreeEnsemble ens;
  ens.num_features = 2;
  ens.feature_names = {"fever", "cough"};
  ens.trees.push_back(std::move(t));
  arbor::validate_ensemble(ens);
  return ens;
}

// Chain AND over k features with uniform binary covers: the all-true leaf
// is worth `top` and everything else 0.
inline arbor::TreeEnsemble k_way_and(int k, double top = 100.0) {
  arbor::Tree t;
  auto add_node = [&t]() {
    t.children_left.push_back(arbor::kLeaf);
    t.children_right.push_back(arbor::kLeaf);
    t.children_default.push_back(arbor::kLeaf);
    t.split_feature.push_back(0);
    t.threshold.push_back(0.0);
    t.value.push_back(0.0);
    t.cover.push_back(0.0);
    return t.num_nodes() - 1;
  };
  const double root_cover = std::pow(2.0, k);
  int node = add_node();
  t.cover[node] = root_cover;
  for (int depth = 0; depth < k; ++depth) {
    const double cover = t.cover[node];
    const int zero_leaf = add_node();
    t.cover[zero_leaf] = cover / 2.0;
    const int one_child = add_node();
    t.cover[one_child] = cover / 2.0;
    t.split_feature[node] = depth;
    t.threshold[node] = 0.5;
    t.children_left[node] = zero_leaf;
    t.children_right[node] = one_child;
    t.children_default[node] = zero_leaf;
    node = one_child;
  }
  t.value[node] = top;
  arbor::TreeEnsemble ens;
  ens.num_features = k;
  ens.trees.push_back(std::move(t));
  arbor::validate_ensemble(ens);
  return ens;
}

// One stump per feature: split feature j at `thresholds[j]`, leaves
// (lo[j], hi[j]), uniform covers. Purely additive, so Shapley values have a
// closed form.
inline arbor::TreeEnsemble additive_stumps(const std::vector<double>& thresholds,
                                           const std::vector<double>& lo,
                                           const std::vector<double>& hi) {
  arbor::TreeEnsemble ens;
  ens.num_features = static_cast<int>(thresholds.size());
  for (std::size_t j = 0; j < thresholds.size(); ++j) {
    arbor::Tree t;
    t.children_left = {1, arbor::kLeaf, arbor::kLeaf};
    t.children_right = {2, arbor::kLeaf, arbor::kLeaf};
    t.children_default = {1, arbor::kLeaf, arbor::kLeaf};
    t.split_feature = {static_cast<int>(j), 0, 0};
    t.threshold = {thresholds[j], 0.0, 0.0};
    t.value = {0.0, lo[j], hi[j]};
    t.cover = {2.0, 1.0, 1.0};
    ens.trees.push_back(std::move(t));
  }
  arbor::validate_ensemble(ens);
  return ens;
}

// A fully developed depth-3 tree over 3 binary features splitting in the
// given order at every level; leaf values come from `table` indexed by the
// feature bits. Uniform covers.
inline arbor::Tree ordered_full_tree(const std::vector<int>& order,
                                     const std::vector<double>& table) {
  arbor::Tree t;
  // recursive build: node for a partial assignment
  std::function<int(int, std::vector<int>&)> build = [&](int level,
                                                         std::vector<int>& bits) -> int {
    const int node = t.num_nodes();
    t.children_left.push_back(arbor::kLeaf);
    t.children_right.push_back(arbor::kLeaf);
    t.children_default.push_back(arbor::kLeaf);
    t.split_feature.push_back(0);
    t.threshold.push_back(0.0);
    t.value.push_back(0.0);
    t.cover.push_back(std::pow(2.0, 3 - level));
    if (level == 3) {
      int idx = 0;
      for (int f = 0; f < 3; ++f) idx |= bits[f] << f;
      t.value[node] = table[idx];
      return node;
    }
    const int f = order[level];
    t.split_feature[node] = f;
    t.threshold[node] = 0.5;
    bits[f] = 0;
    const int left = build(level + 1, bits);
    bits[f] = 1;
    const int right = build(level + 1, bits);
    bits[f] = -1;
    t.children_left[node] = left;
    t.children_right[node] = right;
    t.children_default[node] = left;
    return node;
  };
  std::vector<int> bits(3, -1);
  build(0, bits);
  return t;
}

inline std::vector<double> random_row(int m, std::mt19937_64& rng,
                                      double missing_prob = 0.0) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> x(m);
  for (double& v : x)
    v = missing_prob > 0.0 && unit(rng) < missing_prob ? arbor::missing_value()
                                                       : unit(rng);
  return x;
}

}  // namespace fixtures
