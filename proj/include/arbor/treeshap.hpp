#pragma once

#include <algorithm>
#include <span>
#include <stdexcept>
#include <vector>

#include "arbor/explanation.hpp"
#include "arbor/model.hpp"

// Polynomial-time exact SHAP values for tree ensembles. The recursion keeps
// track of what proportion of all feature subsets of every size flow down
// each branch, growing the bookkeeping with EXTEND as it descends and
// inverting it with UNWIND at leaves and on repeated splits. O(TLD^2) time,
// O(D^2 + M) memory per call.

namespace arbor {

inline constexpr int kPathSentinel = -1;

/// One entry of the subset path: the split feature, the fraction of
/// "zero" (feature absent) and "one" (feature present) subsets flowing
/// through this branch, and the Shapley-weighted proportion of subsets of
/// each size (pweight of entry i covers subsets with i ones).
struct PathElement {
  int feature_index = kPathSentinel;
  double zero_fraction = 0.0;
  double one_fraction = 0.0;
  double pweight = 0.0;
};

// Appends an entry at index `length` and grows every subset-size weight.
// Normalisation is by the grown path length.
inline void extend_path(PathElement* path, int length, double zero_fraction,
                        double one_fraction, int feature_index) {
  path[length].feature_index = feature_index;
  path[length].zero_fraction = zero_fraction;
  path[length].one_fraction = one_fraction;
  path[length].pweight = length == 0 ? 1.0 : 0.0;
  for (int i = length - 1; i >= 0; --i) {
    path[i + 1].pweight += one_fraction * path[i].pweight * (i + 1) / double(length + 1);
    path[i].pweight = zero_fraction * path[i].pweight * (length - i) / double(length + 1);
  }
}

// Exact inverse of the extension that created entry `path_index`; commutes
// with extend, so entries can be unwound in any order.
inline void unwind_path(PathElement* path, int unique_depth, int path_index) {
  const double one_fraction = path[path_index].one_fraction;
  const double zero_fraction = path[path_index].zero_fraction;
  double next_one_portion = path[unique_depth].pweight;
  for (int i = unique_depth - 1; i >= 0; --i) {
    if (one_fraction != 0.0) {
      const double tmp = path[i].pweight;
      path[i].pweight = next_one_portion * (unique_depth + 1) / ((i + 1) * one_fraction);
      next_one_portion =
          tmp - path[i].pweight * zero_fraction * (unique_depth - i) / double(unique_depth + 1);
    } else if (zero_fraction != 0.0) {
      path[i].pweight = path[i].pweight * (unique_depth + 1) / (zero_fraction * (unique_depth - i));
    } else {
      throw std::domain_error(
          "unwind: path entry has zero one-fraction and zero zero-fraction");
    }
  }
  // shift the entry attributes down; pweights are indexed by subset size and
  // keep the values recomputed above
  for (int i = path_index; i < unique_depth; ++i) {
    path[i].feature_index = path[i + 1].feature_index;
    path[i].zero_fraction = path[i + 1].zero_fraction;
    path[i].one_fraction = path[i + 1].one_fraction;
  }
}

// Total permutation weight the path would have if entry `path_index` were
// unwound, without mutating the path.
inline double unwound_path_sum(const PathElement* path, int unique_depth, int path_index) {
  const double one_fraction = path[path_index].one_fraction;
  const double zero_fraction = path[path_index].zero_fraction;
  double next_one_portion = path[unique_depth].pweight;
  double total = 0.0;
  for (int i = unique_depth - 1; i >= 0; --i) {
    if (one_fraction != 0.0) {
      const double tmp = next_one_portion * (unique_depth + 1) / ((i + 1) * one_fraction);
      total += tmp;
      next_one_portion =
          path[i].pweight - tmp * zero_fraction * (unique_depth - i) / double(unique_depth + 1);
    } else if (zero_fraction != 0.0) {
      total += path[i].pweight * (unique_depth + 1) / (zero_fraction * (unique_depth - i));
    }
    // both fractions zero: no subsets flow here, pweight stays zero
  }
  return total;
}

/// Value-semantic subset path for tests and callers that want the EXTEND /
/// UNWIND operations directly; the traversal kernel below works on raw
/// buffers of the same entries.
class SubsetPath {
 public:
  SubsetPath() = default;

  int length() const { return static_cast<int>(entries_.size()); }
  const PathElement& entry(int i) const { return entries_.at(i); }
  const std::vector<PathElement>& entries() const { return entries_; }

  SubsetPath extend(double zero_fraction, double one_fraction, int feature_index) const {
    SubsetPath out = *this;
    out.entries_.emplace_back();
    extend_path(out.entries_.data(), length(), zero_fraction, one_fraction, feature_index);
    return out;
  }

  SubsetPath unwind(int path_index) const {
    if (path_index < 0 || path_index >= length())
      throw std::out_of_range("unwind: no path entry " + std::to_string(path_index));
    const PathElement& el = entries_[path_index];
    if (el.one_fraction == 0.0 && el.zero_fraction == 0.0)
      throw std::domain_error(
          "unwind: path entry has zero one-fraction and zero zero-fraction");
    SubsetPath out = *this;
    unwind_path(out.entries_.data(), length() - 1, path_index);
    out.entries_.pop_back();
    return out;
  }

 private:
  std::vector<PathElement> entries_;
};

namespace detail {

// condition: 0 plain SHAP; +1 fixes condition_feature "present" (its splits
// follow x's branch); -1 fixes it "absent" (its splits are cover-averaged).
// Either way the conditioned feature leaves the player set.
inline void treeshap_recurse(const Tree& t, std::span<const double> x, double* phi,
                             int node, PathElement* parent_path, int parent_len,
                             double zero_fraction, double one_fraction, int feature_index,
                             int condition, int condition_feature,
                             double condition_fraction) {
  if (condition_fraction == 0.0) return;

  PathElement* path = parent_path + parent_len;
  std::copy(parent_path, parent_path + parent_len, path);
  int len = parent_len;
  if (condition == 0 || feature_index != condition_feature) {
    extend_path(path, len, zero_fraction, one_fraction, feature_index);
    ++len;
  }

  if (t.is_leaf(node)) {
    for (int i = 1; i < len; ++i) {
      const double w = unwound_path_sum(path, len - 1, i);
      const PathElement& el = path[i];
      phi[el.feature_index] +=
          w * (el.one_fraction - el.zero_fraction) * t.value[node] * condition_fraction;
    }
    return;
  }

  const int d = t.split_feature[node];
  const int hot = t.descend(node, x[d]);
  const int cold =
      hot == t.children_left[node] ? t.children_right[node] : t.children_left[node];
  const double hot_zero = t.cover[hot] / t.cover[node];
  const double cold_zero = t.cover[cold] / t.cover[node];

  // a repeated split on d is undone and its fractions folded into this one
  double incoming_zero = 1.0, incoming_one = 1.0;
  int k = 0;
  while (k < len && path[k].feature_index != d) ++k;
  if (k < len) {
    incoming_zero = path[k].zero_fraction;
    incoming_one = path[k].one_fraction;
    unwind_path(path, len - 1, k);
    --len;
  }

  double hot_condition = condition_fraction, cold_condition = condition_fraction;
  if (condition > 0 && d == condition_feature) {
    cold_condition = 0.0;  // forced to x's branch
  } else if (condition < 0 && d == condition_feature) {
    hot_condition *= hot_zero;  // cover-averaged as if unobserved
    cold_condition *= cold_zero;
  }

  treeshap_recurse(t, x, phi, hot, path, len, incoming_zero * hot_zero, incoming_one, d,
                   condition, condition_feature, hot_condition);
  treeshap_recurse(t, x, phi, cold, path, len, incoming_zero * cold_zero, 0.0, d,
                   condition, condition_feature, cold_condition);
}

inline std::size_t path_buffer_size(int max_depth) {
  const std::size_t d = static_cast<std::size_t>(max_depth) + 2;
  return d * (d + 1) / 2 + 1;
}

}  // namespace detail

/// Accumulates the conditioned SHAP values of the whole ensemble into `phi`
/// (length num_features, not cleared). condition_feature is excluded from the
/// player set when condition is nonzero.
inline void tree_shap_conditional(const TreeEnsemble& ens, std::span<const double> x,
                                  int condition, int condition_feature,
                                  std::span<double> phi) {
  if (x.size() != static_cast<std::size_t>(ens.num_features))
    throw dimension_error("tree_shap: feature row length mismatch");
  std::vector<PathElement> buffer(detail::path_buffer_size(ens.max_depth()));
  for (const Tree& t : ens.trees)
    detail::treeshap_recurse(t, x, phi.data(), 0, buffer.data(), 0, 1.0, 1.0,
                             kPathSentinel, condition, condition_feature, 1.0);
}

/// Exact SHAP values by the subset-path recursion; identical to the
/// brute-force oracle wherever that oracle is feasible, with zero
/// estimation variance.
inline Explanation tree_shap(const TreeEnsemble& ens, std::span<const double> x) {
  Explanation e;
  e.method = Method::kTreeShap;
  e.base = expected_value(ens);
  e.values.assign(ens.num_features, 0.0);
  tree_shap_conditional(ens, x, 0, -1, e.values);
  return e;
}

}  // namespace arbor
