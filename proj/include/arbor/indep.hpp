#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "arbor/data.hpp"
#include "arbor/explanation.hpp"
#include "arbor/model.hpp"

// Exact Shapley values under feature independence: for each background
// reference the coalition game is v(S) = f(x on S, reference elsewhere), and
// every tree is traversed once along the hybrid foreground/background paths,
// O(TRL) overall. Also the loss-space explanations built on top of it.

namespace arbor {

/// Reference rows standing in for "absent" feature values.
struct BackgroundSet {
  std::size_t num_rows = 0;
  std::size_t num_cols = 0;
  std::vector<double> cells;    // row-major
  std::vector<double> weights;  // empty = uniform; else nonnegative, sums to 1

  std::span<const double> row(std::size_t i) const {
    return {cells.data() + i * num_cols, num_cols};
  }
  double weight(std::size_t i) const {
    return weights.empty() ? 1.0 / static_cast<double>(num_rows) : weights[i];
  }

  void validate() const {
    if (num_rows < 1) throw validation_error("background set must have at least one row");
    if (cells.size() != num_rows * num_cols)
      throw validation_error("background set cell count mismatch");
    if (!weights.empty()) {
      if (weights.size() != num_rows)
        throw validation_error("background weights length mismatch");
      double sum = 0.0;
      for (double w : weights) {
        if (!(w >= 0.0)) throw validation_error("background weights must be nonnegative");
        sum += w;
      }
      if (std::abs(sum - 1.0) > 1e-9)
        throw validation_error("background weights must sum to 1");
    }
  }

  static BackgroundSet from_dataset(const Dataset& ds) {
    BackgroundSet bg;
    bg.num_rows = ds.num_rows;
    bg.num_cols = ds.num_cols;
    bg.cells = ds.cells;
    bg.validate();
    return bg;
  }

  static BackgroundSet from_row(std::span<const double> row) {
    BackgroundSet bg;
    bg.num_rows = 1;
    bg.num_cols = row.size();
    bg.cells.assign(row.begin(), row.end());
    return bg;
  }
};

/// Shapley ordering weight for U matched features out of V players on a
/// path: U!(V-U-1)!/V!.
inline double calc_weight(int matched, int total_unique) {
  if (total_unique < 1 || matched < 0 || matched >= total_unique)
    throw std::domain_error("calc_weight: need 0 <= U < V, got U=" +
                            std::to_string(matched) + " V=" + std::to_string(total_unique));
  // U!(V-U-1)!/V! == 1/(V * C(V-1, U))
  double c = 1.0;
  const int n = total_unique - 1;
  const int k = std::min(matched, n - matched);
  for (int i = 1; i <= k; ++i) c = c * (n - k + i) / i;
  return 1.0 / (total_unique * c);
}

namespace detail {

// Positive/negative leaf contributions passed up the hybrid traversal.
// U = features matched to the foreground along the path, V = unique
// diverging features. The foreground-only leaf (U == V) carries the
// positive mass, the background-only leaf (U == 0) the negative mass.
inline std::pair<double, double> indep_recurse(const Tree& t, std::span<const double> x,
                                               std::span<const double> ref,
                                               std::vector<int>& x_side,
                                               std::vector<int>& ref_side, double* phi,
                                               int node, int matched, int unique) {
  if (t.is_leaf(node)) {
    if (unique == 0) return {0.0, 0.0};
    const double v = t.value[node];
    const double pos = matched > 0 ? calc_weight(matched - 1, unique) * v : 0.0;
    const double neg = matched < unique ? -calc_weight(matched, unique) * v : 0.0;
    return {pos, neg};
  }

  const int d = t.split_feature[node];
  const int x_child = t.descend(node, x[d]);
  const int ref_child = t.descend(node, ref[d]);

  if (x_child == ref_child)
    return indep_recurse(t, x, ref, x_side, ref_side, phi, x_child, matched, unique);
  if (x_side[d] > 0)
    return indep_recurse(t, x, ref, x_side, ref_side, phi, x_child, matched, unique);
  if (ref_side[d] > 0)
    return indep_recurse(t, x, ref, x_side, ref_side, phi, ref_child, matched, unique);

  ++x_side[d];
  const auto [pos_x, neg_x] =
      indep_recurse(t, x, ref, x_side, ref_side, phi, x_child, matched + 1, unique + 1);
  --x_side[d];
  ++ref_side[d];
  const auto [pos_ref, neg_ref] =
      indep_recurse(t, x, ref, x_side, ref_side, phi, ref_child, matched, unique + 1);
  --ref_side[d];

  phi[d] += pos_x + neg_ref;
  return {pos_x + pos_ref, neg_x + neg_ref};
}

}  // namespace detail

/// Exact Shapley values of the single-reference composite game; sums to
/// f(x) - f(ref) over the features.
inline std::vector<double> independent_tree_shap_single(const TreeEnsemble& ens,
                                                        std::span<const double> x,
                                                        std::span<const double> ref) {
  if (x.size() != static_cast<std::size_t>(ens.num_features) ||
      ref.size() != static_cast<std::size_t>(ens.num_features))
    throw dimension_error("independent_tree_shap: row length mismatch");
  std::vector<double> phi(ens.num_features, 0.0);
  std::vector<int> x_side(ens.num_features, 0), ref_side(ens.num_features, 0);
  for (const Tree& t : ens.trees)
    detail::indep_recurse(t, x, ref, x_side, ref_side, phi.data(), 0, 0, 0);
  return phi;
}

/// Averages the single-reference values over the background set; base is the
/// (weighted) mean background prediction so local accuracy holds exactly.
inline Explanation independent_tree_shap(const TreeEnsemble& ens, std::span<const double> x,
                                         const BackgroundSet& bg) {
  bg.validate();
  if (bg.num_cols != static_cast<std::size_t>(ens.num_features))
    throw dimension_error("independent_tree_shap: background column count mismatch");
  Explanation e;
  e.method = Method::kIndep;
  e.values.assign(ens.num_features, 0.0);
  for (std::size_t r = 0; r < bg.num_rows; ++r) {
    const double w = bg.weight(r);
    const std::vector<double> phi = independent_tree_shap_single(ens, x, bg.row(r));
    for (int i = 0; i < ens.num_features; ++i) e.values[i] += w * phi[i];
    e.base += w * predict_margin(ens, bg.row(r));
  }
  return e;
}

// --------------------------------------------------------------------------
// Loss-space explanations

struct LossSpec {
  enum class Kind { kSquaredError, kLogisticNll };
  Kind kind = Kind::kSquaredError;
  double label = 0.0;
};

inline double loss_value(const LossSpec& loss, double margin) {
  switch (loss.kind) {
    case LossSpec::Kind::kSquaredError: {
      const double d = margin - loss.label;
      return d * d;
    }
    case LossSpec::Kind::kLogisticNll: {
      if (loss.label != 0.0 && loss.label != 1.0)
        throw validation_error("logistic_nll requires labels in {0,1}");
      // log(1 + e^m) - y*m, evaluated stably
      const double softplus = margin > 0 ? margin + std::log1p(std::exp(-margin))
                                         : std::log1p(std::exp(margin));
      return softplus - loss.label * margin;
    }
  }
  throw validation_error("unsupported loss kind");
}

inline double loss_derivative(const LossSpec& loss, double margin) {
  switch (loss.kind) {
    case LossSpec::Kind::kSquaredError:
      return 2.0 * (margin - loss.label);
    case LossSpec::Kind::kLogisticNll:
      return logistic(margin) - loss.label;
  }
  throw validation_error("unsupported loss kind");
}

inline constexpr double kRescaleDenominatorFloor = 1e-6;

/// Margin attributions rescaled per reference by
/// (g(f(x)) - g(f(r))) / (f(x) - f(r)) so they sum to the loss difference
/// exactly; falls back to g'(f(x)) when the margins coincide. Base is the
/// mean background loss, so base + sum(phi) = g(f(x)).
inline Explanation explain_loss(const TreeEnsemble& ens, std::span<const double> x,
                                const LossSpec& loss, const BackgroundSet& bg) {
  bg.validate();
  if (bg.num_cols != static_cast<std::size_t>(ens.num_features))
    throw dimension_error("explain_loss: background column count mismatch");
  const double fx = predict_margin(ens, x);
  Explanation e;
  e.method = Method::kIndep;
  e.values.assign(ens.num_features, 0.0);
  for (std::size_t r = 0; r < bg.num_rows; ++r) {
    const double w = bg.weight(r);
    const double fr = predict_margin(ens, bg.row(r));
    const double delta = fx - fr;
    const double multiplier = std::abs(delta) < kRescaleDenominatorFloor
                                  ? loss_derivative(loss, fx)
                                  : (loss_value(loss, fx) - loss_value(loss, fr)) / delta;
    const std::vector<double> phi = independent_tree_shap_single(ens, x, bg.row(r));
    for (int i = 0; i < ens.num_features; ++i) e.values[i] += w * multiplier * phi[i];
    e.base += w * loss_value(loss, fr);
  }
  return e;
}

}  // namespace arbor
