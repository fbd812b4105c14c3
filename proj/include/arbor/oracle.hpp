#pragma once

#include <bit>
#include <cstdint>
#include <span>
#include <vector>

#include "arbor/explanation.hpp"
#include "arbor/model.hpp"

// Reference implementations by explicit subset enumeration. Everything here
// is written to be obviously correct and serves as ground truth for the
// polynomial-time algorithms; cost is exponential in the feature count.

namespace arbor {

inline constexpr int kDefaultOracleCap = 16;

/// A subset of feature indices (unique, in range).
struct FeatureSubset {
  std::vector<int> indices;

  static FeatureSubset of(std::initializer_list<int> idx) { return FeatureSubset{idx}; }

  static FeatureSubset all(int num_features) {
    FeatureSubset s;
    for (int i = 0; i < num_features; ++i) s.indices.push_back(i);
    return s;
  }

  std::uint64_t mask(int num_features) const {
    std::uint64_t m = 0;
    for (int i : indices) {
      if (i < 0 || i >= num_features)
        throw validation_error("FeatureSubset: index " + std::to_string(i) +
                               " out of range for " + std::to_string(num_features) +
                               " features");
      if (m & (1ull << i))
        throw validation_error("FeatureSubset: duplicate index " + std::to_string(i));
      m |= 1ull << i;
    }
    return m;
  }
};

namespace detail {

// binomial(n, k) as a double; exact for every size reachable here
inline double binomial(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  k = std::min(k, n - k);
  double out = 1.0;
  for (int i = 1; i <= k; ++i) out = out * (n - k + i) / i;
  return out;
}

// Shapley ordering weight for a subset of size s out of m players:
// s!(m-s-1)!/m!
inline double shapley_weight(int s, int m) { return 1.0 / (m * binomial(m - 1, s)); }

// Shapley interaction weight: s!(m-s-2)!/(2(m-1)!)
inline double interaction_weight(int s, int m) {
  return 1.0 / (2.0 * (m - 1) * binomial(m - 2, s));
}

inline double expvalue_node(const Tree& t, std::span<const double> x, std::uint64_t mask,
                            int node) {
  if (t.is_leaf(node)) return t.value[node];
  const int d = t.split_feature[node];
  if (mask & (1ull << d)) return expvalue_node(t, x, mask, t.descend(node, x[d]));
  const int a = t.children_left[node], b = t.children_right[node];
  return (expvalue_node(t, x, mask, a) * t.cover[a] +
          expvalue_node(t, x, mask, b) * t.cover[b]) /
         t.cover[node];
}

inline void check_cap(int num_features, int cap, const char* op) {
  if (num_features > cap)
    throw validation_error(std::string(op) + ": model has " + std::to_string(num_features) +
                           " features but the exhaustive oracle is capped at " +
                           std::to_string(cap) +
                           " (cost grows as 2^M model sweeps; raise the cap explicitly "
                           "to force it)");
}

}  // namespace detail

/// Algorithm-style conditional expectation E[f(x) | x_S]: follow the decision
/// path when the split feature is conditioned on, otherwise cover-weight both
/// children. S = all features gives f(x); S empty gives E[f].
inline double exp_value(const TreeEnsemble& ens, std::span<const double> x,
                        const FeatureSubset& S) {
  if (x.size() != static_cast<std::size_t>(ens.num_features))
    throw dimension_error("exp_value: feature row length mismatch");
  if (ens.num_features > 63)
    throw validation_error("exp_value: subset conditioning supports at most 63 features");
  const std::uint64_t mask = S.mask(ens.num_features);
  double out = ens.base_offset;
  for (const Tree& t : ens.trees) out += detail::expvalue_node(t, x, mask, 0);
  return out;
}

namespace detail {

// f_x(S) for every S as a flat table indexed by feature mask.
inline std::vector<double> subset_value_table(const TreeEnsemble& ens,
                                              std::span<const double> x) {
  const int m = ens.num_features;
  std::vector<double> v(std::size_t(1) << m, ens.base_offset);
  for (const Tree& t : ens.trees)
    for (std::uint64_t mask = 0; mask < v.size(); ++mask)
      v[mask] += expvalue_node(t, x, mask, 0);
  return v;
}

inline std::vector<double> shapley_from_table(const std::vector<double>& v, int m) {
  std::vector<double> phi(m, 0.0);
  const std::uint64_t full = (std::uint64_t(1) << m) - 1;
  for (std::uint64_t s = 0; s <= full; ++s) {
    const int size = std::popcount(s);
    for (int i = 0; i < m; ++i) {
      if (s & (1ull << i)) continue;
      phi[i] += shapley_weight(size, m) * (v[s | (1ull << i)] - v[s]);
    }
  }
  return phi;
}

inline InteractionExplanation interactions_from_table(const std::vector<double>& v, int m) {
  InteractionExplanation out(m);
  const std::vector<double> phi = shapley_from_table(v, m);
  if (m >= 2) {
    for (std::uint64_t s = 0; s < v.size(); ++s) {
      const int size = std::popcount(s);
      const double w = interaction_weight(size, m);
      for (int i = 0; i < m; ++i) {
        if (s & (1ull << i)) continue;
        for (int j = i + 1; j < m; ++j) {
          if (s & (1ull << j)) continue;
          const std::uint64_t si = s | (1ull << i);
          const std::uint64_t sj = s | (1ull << j);
          const double grad = v[si | (1ull << j)] - v[si] - v[sj] + v[s];
          out.feature_at(i, j) += w * grad;
        }
      }
    }
    for (int i = 0; i < m; ++i)
      for (int j = i + 1; j < m; ++j) out.feature_at(j, i) = out.feature_at(i, j);
  }
  // diagonal per the main-effect definition, bias slot so the matrix sums to f(x)
  for (int i = 0; i < m; ++i) {
    double off = 0.0;
    for (int j = 0; j < m; ++j)
      if (j != i) off += out.feature_at(i, j);
    out.feature_at(i, i) = phi[i] - off;
  }
  out.at(0, 0) = v[0];
  return out;
}

}  // namespace detail

/// Exact Shapley values of the conditional-expectation game by subset
/// enumeration with multiplicative weights (equal to the all-orderings
/// average). Exponential in M; refuses above the cap.
inline Explanation shapley_exact(const TreeEnsemble& ens, std::span<const double> x,
                                 int cap = kDefaultOracleCap) {
  detail::check_cap(ens.num_features, cap, "shapley_exact");
  if (x.size() != static_cast<std::size_t>(ens.num_features))
    throw dimension_error("shapley_exact: feature row length mismatch");
  const std::vector<double> v = detail::subset_value_table(ens, x);
  Explanation e;
  e.method = Method::kBrute;
  e.base = v[0];
  e.values = detail::shapley_from_table(v, ens.num_features);
  return e;
}

/// Exact SHAP interaction matrix: off-diagonals by the Shapley interaction
/// index, diagonal as SHAP value minus off-diagonal row, [0][0] = f_x(empty).
inline InteractionExplanation interaction_exact(const TreeEnsemble& ens,
                                                std::span<const double> x,
                                                int cap = kDefaultOracleCap) {
  detail::check_cap(ens.num_features, cap, "interaction_exact");
  if (x.size() != static_cast<std::size_t>(ens.num_features))
    throw dimension_error("interaction_exact: feature row length mismatch");
  const std::vector<double> v = detail::subset_value_table(ens, x);
  return detail::interactions_from_table(v, ens.num_features);
}

/// Heuristic path-ordered attribution: walk each tree's decision path and
/// credit the change in cover-weighted expectation to the split feature.
/// Locally accurate but order-biased.
inline Explanation saabas(const TreeEnsemble& ens, std::span<const double> x) {
  if (x.size() != static_cast<std::size_t>(ens.num_features))
    throw dimension_error("saabas: feature row length mismatch");
  Explanation e;
  e.method = Method::kSaabas;
  e.base = ens.base_offset;
  e.values.assign(ens.num_features, 0.0);
  for (const Tree& t : ens.trees) {
    const std::vector<double> mean = node_expectations(t);
    e.base += mean[0];
    int node = 0;
    while (!t.is_leaf(node)) {
      const int next = t.descend(node, x[t.split_feature[node]]);
      e.values[t.split_feature[node]] += mean[next] - mean[node];
      node = next;
    }
  }
  return e;
}

// --------------------------------------------------------------------------
// Single-reference (independent features) oracles. The coalition game is
// v(S) = f(x on S, reference elsewhere) evaluated on composite inputs.

inline double composite_predict(const TreeEnsemble& ens, std::span<const double> x,
                                std::span<const double> ref, std::uint64_t mask) {
  std::vector<double> row(ref.begin(), ref.end());
  for (int i = 0; i < ens.num_features; ++i)
    if (mask & (1ull << i)) row[i] = x[i];
  return predict_margin(ens, row);
}

namespace detail {

inline std::vector<double> composite_value_table(const TreeEnsemble& ens,
                                                 std::span<const double> x,
                                                 std::span<const double> ref) {
  std::vector<double> v(std::size_t(1) << ens.num_features);
  std::vector<double> row(ref.begin(), ref.end());
  for (std::uint64_t mask = 0; mask < v.size(); ++mask) {
    for (int i = 0; i < ens.num_features; ++i)
      row[i] = (mask & (1ull << i)) ? x[i] : ref[i];
    v[mask] = predict_margin(ens, row);
  }
  return v;
}

}  // namespace detail

/// Exact Shapley values of the single-reference composite game; the ground
/// truth for the feature-independent fast path.
inline Explanation shapley_exact_single_ref(const TreeEnsemble& ens,
                                            std::span<const double> x,
                                            std::span<const double> ref,
                                            int cap = kDefaultOracleCap) {
  detail::check_cap(ens.num_features, cap, "shapley_exact_single_ref");
  const std::vector<double> v = detail::composite_value_table(ens, x, ref);
  Explanation e;
  e.method = Method::kBrute;
  e.base = v[0];
  e.values = detail::shapley_from_table(v, ens.num_features);
  return e;
}

/// Saabas in its single-reference form: path-ordered differences of the
/// composite game instead of cover-weighted node means.
inline Explanation saabas_single_ref(const TreeEnsemble& ens, std::span<const double> x,
                                     std::span<const double> ref) {
  Explanation e;
  e.method = Method::kSaabas;
  e.base = predict_margin(ens, ref);
  e.values.assign(ens.num_features, 0.0);
  for (const Tree& t : ens.trees) {
    std::vector<double> row(ref.begin(), ref.end());
    double prev = predict_tree_margin(t, row);
    int node = 0;
    while (!t.is_leaf(node)) {
      const int d = t.split_feature[node];
      const int next = t.descend(node, x[d]);
      row[d] = x[d];
      const double cur = predict_tree_margin(t, row);
      e.values[d] += cur - prev;
      prev = cur;
      node = next;
    }
  }
  return e;
}

}  // namespace arbor
