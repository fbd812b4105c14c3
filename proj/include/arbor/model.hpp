#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace arbor {

// Error taxonomy. The CLI maps parse/validation/dimension errors to exit
// code 2 and anything else to 3.
struct parse_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct validation_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct dimension_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr int kLeaf = -1;

inline bool is_missing(double v) { return std::isnan(v); }

inline double missing_value() {
  return std::numeric_limits<double>::quiet_NaN();
}

enum class Objective { kRaw, kLogistic };

inline double logistic(double margin) { return 1.0 / (1.0 + std::exp(-margin)); }

/// One decision tree in arrays-of-nodes form. Node 0 is the root and a node
/// is a leaf iff children_left == children_right == -1. `value` is read only
/// at leaves; `cover` is the training sample count flowing through a node
/// and weights every conditional expectation taken over the tree.
struct Tree {
  std::vector<int> children_left;
  std::vector<int> children_right;
  std::vector<int> children_default;
  std::vector<int> split_feature;
  std::vector<double> threshold;
  std::vector<double> value;
  std::vector<double> cover;
  std::vector<double> gain;  // optional per-split loss reduction; empty if absent

  int num_nodes() const { return static_cast<int>(children_left.size()); }
  bool is_leaf(int node) const { return children_left[node] == kLeaf; }
  bool has_gain() const { return !gain.empty(); }

  // Split rule: x[d] <= t goes left, ties at the threshold go left,
  // missing goes to the default child.
  int descend(int node, double x_value) const {
    if (is_missing(x_value)) return children_default[node];
    return x_value <= threshold[node] ? children_left[node] : children_right[node];
  }

  int leaf_for(std::span<const double> x) const {
    int node = 0;
    while (!is_leaf(node)) node = descend(node, x[split_feature[node]]);
    return node;
  }

  int max_depth() const {
    int deepest = 0;
    std::vector<std::pair<int, int>> stack{{0, 0}};
    while (!stack.empty()) {
      auto [node, depth] = stack.back();
      stack.pop_back();
      if (is_leaf(node)) {
        deepest = std::max(deepest, depth);
      } else {
        stack.push_back({children_left[node], depth + 1});
        stack.push_back({children_right[node], depth + 1});
      }
    }
    return deepest;
  }
};

/// A boosted/bagged ensemble: the model output is the sum of the leaf values
/// reached in every tree plus base_offset. The objective transform applies
/// only at the prediction API; explanations stay in margin space.
struct TreeEnsemble {
  std::vector<Tree> trees;
  int num_features = 0;
  double base_offset = 0.0;
  Objective objective = Objective::kRaw;
  std::vector<std::string> feature_names;  // empty or exactly num_features

  std::string feature_name(int i) const {
    if (i >= 0 && i < static_cast<int>(feature_names.size())) return feature_names[i];
    return "f" + std::to_string(i);
  }

  int max_depth() const {
    int d = 0;
    for (const Tree& t : trees) d = std::max(d, t.max_depth());
    return d;
  }
};

// --------------------------------------------------------------------------
// Validation

namespace detail {

inline void fail_node(int tree_index, int node, const std::string& what) {
  throw validation_error("trees[" + std::to_string(tree_index) + "] node " +
                         std::to_string(node) + ": " + what);
}

}  // namespace detail

inline void validate_tree(const Tree& t, int num_features, int tree_index) {
  const std::size_t n = t.children_left.size();
  if (n == 0) detail::fail_node(tree_index, 0, "tree has no nodes");
  if (t.children_right.size() != n || t.children_default.size() != n ||
      t.split_feature.size() != n || t.threshold.size() != n ||
      t.value.size() != n || t.cover.size() != n)
    throw validation_error("trees[" + std::to_string(tree_index) +
                           "]: node arrays have inconsistent lengths");
  if (!t.gain.empty() && t.gain.size() != n)
    throw validation_error("trees[" + std::to_string(tree_index) +
                           "]: gain array length mismatch");

  std::vector<char> seen(n, 0);
  std::vector<int> stack{0};
  seen[0] = 1;
  std::size_t visited = 0;
  while (!stack.empty()) {
    const int j = stack.back();
    stack.pop_back();
    ++visited;
    const bool left_leaf = t.children_left[j] == kLeaf;
    const bool right_leaf = t.children_right[j] == kLeaf;
    if (left_leaf != right_leaf)
      detail::fail_node(tree_index, j, "exactly one child is the leaf sentinel");
    if (!(t.cover[j] >= 0.0))
      detail::fail_node(tree_index, j, "cover is negative or NaN");
    if (left_leaf) {
      if (!std::isfinite(t.value[j]))
        detail::fail_node(tree_index, j, "leaf value is not finite");
      continue;
    }
    if (t.split_feature[j] < 0 || t.split_feature[j] >= num_features)
      detail::fail_node(tree_index, j,
                        "split_feature " + std::to_string(t.split_feature[j]) +
                            " out of range for num_features " + std::to_string(num_features));
    if (!std::isfinite(t.threshold[j]))
      detail::fail_node(tree_index, j, "threshold is not finite");
    if (!(t.cover[j] > 0.0))
      detail::fail_node(tree_index, j, "internal node cover must be positive");
    for (int c : {t.children_left[j], t.children_right[j]}) {
      if (c <= 0 || c >= static_cast<int>(n))
        detail::fail_node(tree_index, j, "child index " + std::to_string(c) + " out of range");
      if (seen[c])
        detail::fail_node(tree_index, j,
                          "node " + std::to_string(c) + " has more than one parent");
      seen[c] = 1;
      stack.push_back(c);
    }
    if (t.children_default[j] != t.children_left[j] &&
        t.children_default[j] != t.children_right[j])
      detail::fail_node(tree_index, j, "children_default is neither child");
    const double child_sum = t.cover[t.children_left[j]] + t.cover[t.children_right[j]];
    if (std::abs(child_sum - t.cover[j]) > 1e-6 * std::max(1.0, std::abs(t.cover[j])))
      detail::fail_node(tree_index, j,
                        "cover additivity violated: " + std::to_string(child_sum) +
                            " != " + std::to_string(t.cover[j]));
  }
  if (visited != n)
    throw validation_error("trees[" + std::to_string(tree_index) + "]: " +
                           std::to_string(n - visited) +
                           " node(s) unreachable from the root");
}

inline void validate_ensemble(const TreeEnsemble& ens) {
  if (ens.num_features < 1) throw validation_error("num_features must be >= 1");
  if (!ens.feature_names.empty() &&
      ens.feature_names.size() != static_cast<std::size_t>(ens.num_features))
    throw validation_error("feature_names length " +
                           std::to_string(ens.feature_names.size()) +
                           " != num_features " + std::to_string(ens.num_features));
  if (!std::isfinite(ens.base_offset)) throw validation_error("base_offset is not finite");
  for (std::size_t i = 0; i < ens.trees.size(); ++i)
    validate_tree(ens.trees[i], ens.num_features, static_cast<int>(i));
}

// --------------------------------------------------------------------------
// Prediction

inline double predict_tree_margin(const Tree& t, std::span<const double> x) {
  return t.value[t.leaf_for(x)];
}

/// Raw model output: sum of leaf values over trees plus base_offset.
inline double predict_margin(const TreeEnsemble& ens, std::span<const double> x) {
  if (x.size() != static_cast<std::size_t>(ens.num_features))
    throw dimension_error("feature row has length " + std::to_string(x.size()) +
                          " but the model expects " + std::to_string(ens.num_features));
  double out = ens.base_offset;
  for (const Tree& t : ens.trees) out += predict_tree_margin(t, x);
  return out;
}

/// Model output with the objective transform applied when requested.
inline double predict(const TreeEnsemble& ens, std::span<const double> x,
                      bool apply_objective = true) {
  const double margin = predict_margin(ens, x);
  if (apply_objective && ens.objective == Objective::kLogistic) return logistic(margin);
  return margin;
}

/// Cover-weighted mean of every node's subtree leaves; index 0 is the tree's
/// expected value. Used by the conditional-expectation walkers.
inline std::vector<double> node_expectations(const Tree& t) {
  const int n = t.num_nodes();
  std::vector<double> mean(n, 0.0);
  // children always have larger indexes than the root in a validated tree,
  // but not necessarily than their parent, so do an explicit post-order.
  std::vector<int> order;
  order.reserve(n);
  std::vector<int> stack{0};
  while (!stack.empty()) {
    int j = stack.back();
    stack.pop_back();
    order.push_back(j);
    if (!t.is_leaf(j)) {
      stack.push_back(t.children_left[j]);
      stack.push_back(t.children_right[j]);
    }
  }
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const int j = *it;
    if (t.is_leaf(j)) {
      mean[j] = t.value[j];
    } else {
      const int a = t.children_left[j], b = t.children_right[j];
      mean[j] = (mean[a] * t.cover[a] + mean[b] * t.cover[b]) / t.cover[j];
    }
  }
  return mean;
}

inline double tree_expected_value(const Tree& t) { return node_expectations(t)[0]; }

/// E[f(z)] under the cover distribution: the phi_0 base value shared by all
/// conditional-expectation explainers.
inline double expected_value(const TreeEnsemble& ens) {
  double out = ens.base_offset;
  for (const Tree& t : ens.trees) out += tree_expected_value(t);
  return out;
}

// --------------------------------------------------------------------------
// Model document (canonical JSON schema)

namespace detail {

using nlohmann::json;

inline const json& require_key(const json& obj, const std::string& key,
                               const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end()) throw parse_error(path + ": missing required key '" + key + "'");
  return *it;
}

inline std::vector<int> int_array(const json& arr, const std::string& path) {
  if (!arr.is_array()) throw parse_error(path + ": expected an array");
  std::vector<int> out;
  out.reserve(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const auto& v = arr[i];
    if (!v.is_number_integer() && !v.is_number_unsigned())
      throw parse_error(path + "[" + std::to_string(i) + "]: expected an integer");
    out.push_back(v.get<int>());
  }
  return out;
}

inline std::vector<double> double_array(const json& arr, const std::string& path) {
  if (!arr.is_array()) throw parse_error(path + ": expected an array");
  std::vector<double> out;
  out.reserve(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const auto& v = arr[i];
    if (!v.is_number())
      throw parse_error(path + "[" + std::to_string(i) + "]: expected a number");
    out.push_back(v.get<double>());
  }
  return out;
}

}  // namespace detail

/// Parses and validates a model document. Throws parse_error naming the
/// offending path on malformed input and validation_error on a structural
/// invariant violation.
inline TreeEnsemble parse_model(const std::string& text) {
  using nlohmann::json;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw parse_error(std::string("model document is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw parse_error("$: expected a JSON object");

  TreeEnsemble ens;
  const json& nf = detail::require_key(doc, "num_features", "$");
  if (!nf.is_number_integer()) throw parse_error("$.num_features: expected an integer");
  ens.num_features = nf.get<int>();

  if (auto it = doc.find("base_offset"); it != doc.end()) {
    if (!it->is_number()) throw parse_error("$.base_offset: expected a number");
    ens.base_offset = it->get<double>();
  }
  if (auto it = doc.find("objective"); it != doc.end()) {
    if (!it->is_string()) throw parse_error("$.objective: expected a string");
    const std::string obj = it->get<std::string>();
    if (obj == "raw")
      ens.objective = Objective::kRaw;
    else if (obj == "logistic")
      ens.objective = Objective::kLogistic;
    else
      throw parse_error("$.objective: unknown objective '" + obj + "'");
  }
  if (auto it = doc.find("feature_names"); it != doc.end()) {
    if (!it->is_array()) throw parse_error("$.feature_names: expected an array");
    for (std::size_t i = 0; i < it->size(); ++i) {
      if (!(*it)[i].is_string())
        throw parse_error("$.feature_names[" + std::to_string(i) + "]: expected a string");
      ens.feature_names.push_back((*it)[i].get<std::string>());
    }
  }

  const json& trees = detail::require_key(doc, "trees", "$");
  if (!trees.is_array()) throw parse_error("$.trees: expected an array");
  for (std::size_t i = 0; i < trees.size(); ++i) {
    const std::string path = "$.trees[" + std::to_string(i) + "]";
    const json& tj = trees[i];
    if (!tj.is_object()) throw parse_error(path + ": expected an object");
    Tree t;
    t.children_left = detail::int_array(detail::require_key(tj, "children_left", path),
                                        path + ".children_left");
    t.children_right = detail::int_array(detail::require_key(tj, "children_right", path),
                                         path + ".children_right");
    t.children_default = detail::int_array(detail::require_key(tj, "children_default", path),
                                           path + ".children_default");
    t.split_feature = detail::int_array(detail::require_key(tj, "split_feature", path),
                                        path + ".split_feature");
    t.threshold = detail::double_array(detail::require_key(tj, "threshold", path),
                                       path + ".threshold");
    t.value = detail::double_array(detail::require_key(tj, "value", path), path + ".value");
    t.cover = detail::double_array(detail::require_key(tj, "cover", path), path + ".cover");
    if (auto it = tj.find("gain"); it != tj.end())
      t.gain = detail::double_array(*it, path + ".gain");
    ens.trees.push_back(std::move(t));
  }

  validate_ensemble(ens);
  return ens;
}

inline std::string serialize_model(const TreeEnsemble& ens) {
  using nlohmann::json;
  json doc;
  doc["num_features"] = ens.num_features;
  doc["base_offset"] = ens.base_offset;
  doc["objective"] = ens.objective == Objective::kLogistic ? "logistic" : "raw";
  if (!ens.feature_names.empty()) doc["feature_names"] = ens.feature_names;
  doc["trees"] = json::array();
  for (const Tree& t : ens.trees) {
    json tj;
    tj["children_left"] = t.children_left;
    tj["children_right"] = t.children_right;
    tj["children_default"] = t.children_default;
    tj["split_feature"] = t.split_feature;
    tj["threshold"] = t.threshold;
    tj["value"] = t.value;
    tj["cover"] = t.cover;
    if (t.has_gain()) tj["gain"] = t.gain;
    doc["trees"].push_back(std::move(tj));
  }
  return doc.dump();
}

}  // namespace arbor
