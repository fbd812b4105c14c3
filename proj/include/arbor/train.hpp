#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "arbor/data.hpp"
#include "arbor/model.hpp"

namespace arbor {

// --------------------------------------------------------------------------
// Random ensembles for scaling and equivalence experiments

struct RandomModelSpec {
  int trees = 1;
  int features = 1;
  int max_depth = 1;
  std::uint64_t seed = 0;
  double leaf_scale = 1.0;   // leaf values ~ N(0, leaf_scale^2)
  double split_prob = 0.9;   // chance an expandable node splits again
};

namespace detail {

inline int build_random_node(Tree& t, std::mt19937_64& rng, const RandomModelSpec& spec,
                             int depth, double cover) {
  const int node = t.num_nodes();
  t.children_left.push_back(kLeaf);
  t.children_right.push_back(kLeaf);
  t.children_default.push_back(kLeaf);
  t.split_feature.push_back(0);
  t.threshold.push_back(0.0);
  t.value.push_back(0.0);
  t.cover.push_back(cover);

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const bool can_split = depth < spec.max_depth && cover >= 2.0;
  const bool do_split = can_split && (depth == 0 || unit(rng) < spec.split_prob);
  if (!do_split) {
    std::normal_distribution<double> leaf(0.0, spec.leaf_scale);
    t.value[node] = leaf(rng);
    return node;
  }

  std::uniform_int_distribution<int> feat(0, spec.features - 1);
  std::uniform_real_distribution<double> thresh(0.05, 0.95);
  std::uniform_real_distribution<double> frac(0.3, 0.7);
  t.split_feature[node] = feat(rng);
  t.threshold[node] = thresh(rng);
  const double left_cover =
      std::clamp(std::round(cover * frac(rng)), 1.0, cover - 1.0);
  const bool default_left = unit(rng) < 0.5;
  const int left = build_random_node(t, rng, spec, depth + 1, left_cover);
  const int right = build_random_node(t, rng, spec, depth + 1, cover - left_cover);
  t.children_left[node] = left;
  t.children_right[node] = right;
  t.children_default[node] = default_left ? left : right;
  return node;
}

}  // namespace detail

/// Deterministic-for-seed random ensemble with integral covers, thresholds in
/// (0,1) and Gaussian leaf values. Feature rows are expected in [0,1].
inline TreeEnsemble generate_random_ensemble(const RandomModelSpec& spec) {
  if (spec.trees < 1 || spec.features < 1 || spec.max_depth < 1)
    throw validation_error("generate_random_ensemble: trees, features and max_depth must be >= 1");
  std::mt19937_64 rng(spec.seed);
  TreeEnsemble ens;
  ens.num_features = spec.features;
  const double root_cover = static_cast<double>(1u << std::min(spec.max_depth + 3, 20));
  for (int i = 0; i < spec.trees; ++i) {
    Tree t;
    detail::build_random_node(t, rng, spec, 0, root_cover);
    ens.trees.push_back(std::move(t));
  }
  validate_ensemble(ens);
  return ens;
}

// --------------------------------------------------------------------------
// Greedy squared-error boosting (used by the synthetic experiments; records
// per-split gain so the gain-importance baseline has something to read)

struct BoostConfig {
  int rounds = 100;
  int depth = 3;
  double learning_rate = 0.1;
  std::uint64_t seed = 0;  // reserved; the exact greedy fit is deterministic
  int min_samples_leaf = 1;
};

namespace detail {

struct SplitChoice {
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

// Best squared-error reduction over all (feature, threshold) pairs.
// Missing feature values always go left (the default child).
inline SplitChoice best_split(const Dataset& data, const std::vector<double>& resid,
                              const std::vector<int>& idx, int min_leaf) {
  SplitChoice best;
  const int n = static_cast<int>(idx.size());
  double total = 0.0;
  for (int i : idx) total += resid[i];
  const double parent_score = total * total / n;

  std::vector<std::pair<double, double>> vals;  // (x, residual)
  vals.reserve(idx.size());
  for (std::size_t f = 0; f < data.num_cols; ++f) {
    vals.clear();
    double nan_sum = 0.0;
    int nan_count = 0;
    for (int i : idx) {
      const double x = data.at(i, f);
      if (is_missing(x))
        nan_sum += resid[i], ++nan_count;
      else
        vals.emplace_back(x, resid[i]);
    }
    if (static_cast<int>(vals.size()) < 2) continue;
    std::sort(vals.begin(), vals.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    double left_sum = nan_sum;
    int left_n = nan_count;
    for (std::size_t k = 0; k + 1 < vals.size(); ++k) {
      left_sum += vals[k].second;
      ++left_n;
      if (vals[k].first == vals[k + 1].first) continue;
      const int right_n = n - left_n;
      if (left_n < min_leaf || right_n < min_leaf) continue;
      const double right_sum = total - left_sum;
      const double gain =
          left_sum * left_sum / left_n + right_sum * right_sum / right_n - parent_score;
      if (gain > best.gain) {
        best.gain = gain;
        best.feature = static_cast<int>(f);
        best.threshold = 0.5 * (vals[k].first + vals[k + 1].first);
      }
    }
  }
  return best;
}

inline int grow_tree(Tree& t, const Dataset& data, const std::vector<double>& resid,
                     std::vector<int>& idx, int depth, const BoostConfig& cfg) {
  const int node = t.num_nodes();
  t.children_left.push_back(kLeaf);
  t.children_right.push_back(kLeaf);
  t.children_default.push_back(kLeaf);
  t.split_feature.push_back(0);
  t.threshold.push_back(0.0);
  t.value.push_back(0.0);
  t.cover.push_back(static_cast<double>(idx.size()));
  t.gain.push_back(0.0);

  double mean = 0.0;
  for (int i : idx) mean += resid[i];
  mean /= static_cast<double>(idx.size());

  SplitChoice split;
  if (depth < cfg.depth && static_cast<int>(idx.size()) >= 2 * cfg.min_samples_leaf)
    split = best_split(data, resid, idx, cfg.min_samples_leaf);
  if (split.feature < 0 || split.gain <= 1e-12) {
    t.value[node] = cfg.learning_rate * mean;
    return node;
  }

  std::vector<int> left_idx, right_idx;
  for (int i : idx) {
    const double x = data.at(i, split.feature);
    if (is_missing(x) || x <= split.threshold)
      left_idx.push_back(i);
    else
      right_idx.push_back(i);
  }
  idx.clear();
  idx.shrink_to_fit();

  t.split_feature[node] = split.feature;
  t.threshold[node] = split.threshold;
  t.gain[node] = split.gain;
  const int left = grow_tree(t, data, resid, left_idx, depth + 1, cfg);
  const int right = grow_tree(t, data, resid, right_idx, depth + 1, cfg);
  t.children_left[node] = left;
  t.children_right[node] = right;
  t.children_default[node] = left;
  return node;
}

}  // namespace detail

/// Boosted depth-limited regression trees fit by greedy variance reduction
/// with shrinkage. base_offset is the label mean; every tree fits the
/// running residual.
inline TreeEnsemble fit_boosted_trees(const Dataset& data, const BoostConfig& cfg) {
  if (data.num_rows == 0) throw validation_error("fit_boosted_trees: empty dataset");
  if (!data.has_labels()) throw validation_error("fit_boosted_trees: dataset has no labels");
  for (double y : data.labels)
    if (is_missing(y)) throw validation_error("fit_boosted_trees: missing label");
  if (cfg.rounds < 1 || cfg.depth < 1)
    throw validation_error("fit_boosted_trees: rounds and depth must be >= 1");

  TreeEnsemble ens;
  ens.num_features = static_cast<int>(data.num_cols);
  ens.feature_names = data.column_names;
  ens.base_offset =
      std::accumulate(data.labels.begin(), data.labels.end(), 0.0) / data.num_rows;

  std::vector<double> resid(data.labels);
  for (double& r : resid) r -= ens.base_offset;

  for (int round = 0; round < cfg.rounds; ++round) {
    Tree t;
    std::vector<int> idx(data.num_rows);
    std::iota(idx.begin(), idx.end(), 0);
    detail::grow_tree(t, data, resid, idx, 0, cfg);
    for (std::size_t i = 0; i < data.num_rows; ++i)
      resid[i] -= predict_tree_margin(t, data.row(i));
    ens.trees.push_back(std::move(t));
  }
  validate_ensemble(ens);
  return ens;
}

}  // namespace arbor
