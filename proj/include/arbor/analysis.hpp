#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "arbor/data.hpp"
#include "arbor/explanation.hpp"
#include "arbor/indep.hpp"
#include "arbor/interactions.hpp"
#include "arbor/model.hpp"
#include "arbor/oracle.hpp"
#include "arbor/parallel.hpp"
#include "arbor/stats.hpp"
#include "arbor/treeshap.hpp"

// Global analyses assembled from many local explanations. Everything here
// consumes an ExplanationMatrix (or model/data for the two global baselines)
// and is deterministic: rerunning on the same matrix is bit-identical.

namespace arbor {

/// Explains every row of a dataset with the given per-row explainer and
/// stacks the results.
inline ExplanationMatrix explain_rows(const Dataset& data,
                                      const std::function<Explanation(std::span<const double>)>& fn,
                                      Method method, int threads = 1) {
  ExplanationMatrix out;
  out.num_rows = data.num_rows;
  out.num_features = data.num_cols;
  out.method = method;
  out.values.assign(data.num_rows * data.num_cols, 0.0);
  out.bases.assign(data.num_rows, 0.0);
  out.feature_values = data.cells;
  out.labels = data.labels;
  out.timestamps = data.timestamps;
  parallel_for(data.num_rows, threads, [&](std::size_t i) {
    const Explanation e = fn(data.row(i));
    out.bases[i] = e.base;
    std::copy(e.values.begin(), e.values.end(), out.values.begin() + i * data.num_cols);
  });
  return out;
}

// --------------------------------------------------------------------------
// Importance and summaries

struct ImportanceEntry {
  int feature = 0;
  double value = 0.0;
};

/// Mean |phi| per feature, descending (ties broken by feature index).
inline std::vector<ImportanceEntry> global_importance(const ExplanationMatrix& e) {
  if (e.num_rows == 0) throw validation_error("global_importance: empty matrix");
  std::vector<ImportanceEntry> out(e.num_features);
  for (std::size_t j = 0; j < e.num_features; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < e.num_rows; ++i) s += std::abs(e.value(i, j));
    out[j] = {static_cast<int>(j), s / static_cast<double>(e.num_rows)};
  }
  std::stable_sort(out.begin(), out.end(), [](const ImportanceEntry& a, const ImportanceEntry& b) {
    return a.value > b.value;
  });
  return out;
}

struct SummaryDot {
  int feature = 0;
  int sample = 0;
  double attribution = 0.0;
  double normalized_value = 0.0;  // percentile of the feature value, NaN for missing
};

/// One dot per (feature, sample): the attribution against the
/// percentile-normalized feature value, features ordered by global
/// importance.
inline std::vector<SummaryDot> summary_data(const ExplanationMatrix& e) {
  const std::vector<ImportanceEntry> order = global_importance(e);
  std::vector<SummaryDot> dots;
  dots.reserve(e.num_rows * e.num_features);
  std::vector<double> col(e.num_rows);
  for (const ImportanceEntry& entry : order) {
    const std::size_t j = static_cast<std::size_t>(entry.feature);
    for (std::size_t i = 0; i < e.num_rows; ++i) col[i] = e.input(i, j);
    const std::vector<double> pct = percentile_ranks(col);
    for (std::size_t i = 0; i < e.num_rows; ++i)
      dots.push_back({entry.feature, static_cast<int>(i), e.value(i, j), pct[i]});
  }
  return dots;
}

// --------------------------------------------------------------------------
// Dependence data

namespace detail {

inline std::vector<int> quantile_bins(const ExplanationMatrix& e, std::size_t col,
                                      int bins) {
  std::vector<double> values(e.num_rows);
  for (std::size_t s = 0; s < e.num_rows; ++s) values[s] = e.input(s, col);
  const std::vector<double> pct = percentile_ranks(values);
  std::vector<int> out(e.num_rows, -1);
  for (std::size_t s = 0; s < e.num_rows; ++s)
    if (!is_missing(pct[s])) out[s] = std::min(bins - 1, static_cast<int>(pct[s] * bins));
  return out;
}

// How much of phi_i's vertical dispersion (its variance inside bins of x_i)
// is explained by also binning on x_k. This is the interaction signal a
// dependence plot shows as color-separated bands.
inline double dispersion_explained_by(const ExplanationMatrix& e, std::size_t i,
                                      std::size_t k, int bins = 10) {
  const std::vector<int> bin_i = quantile_bins(e, i, bins);
  const std::vector<int> bin_k = quantile_bins(e, k, bins);
  std::vector<RunningStat> within_i(bins);
  std::vector<RunningStat> joint(bins * bins);
  double total_m2 = 0.0;
  RunningStat all;
  for (std::size_t s = 0; s < e.num_rows; ++s) {
    if (bin_i[s] < 0 || bin_k[s] < 0) continue;
    const double phi = e.value(s, i);
    all.push(phi);
    within_i[bin_i[s]].push(phi);
    joint[bin_i[s] * bins + bin_k[s]].push(phi);
  }
  if (all.n < 2 || all.m2 == 0.0) return 0.0;
  double m2_i = 0.0, m2_joint = 0.0;
  for (const RunningStat& b : within_i) m2_i += b.m2;
  for (const RunningStat& b : joint) m2_joint += b.m2;
  total_m2 = all.m2;
  return (m2_i - m2_joint) / total_m2;
}

}  // namespace detail

struct DependencePoint {
  double x_value = 0.0;
  double attribution = 0.0;
  double color_value = 0.0;
};

struct DependenceData {
  int feature = 0;
  int color_feature = 0;
  std::vector<DependencePoint> points;
};

/// (x_i, phi_i, x_k) per sample. When `color_feature` is negative the color
/// feature is picked as the one whose bins explain the most variance of
/// phi_i (a heuristic stand-in for the strongest interaction partner).
inline DependenceData dependence_data(const ExplanationMatrix& e, int feature,
                                      int color_feature = -1) {
  if (feature < 0 || static_cast<std::size_t>(feature) >= e.num_features)
    throw validation_error("dependence_data: feature index out of range");
  if (color_feature >= static_cast<int>(e.num_features))
    throw validation_error("dependence_data: color feature index out of range");
  DependenceData out;
  out.feature = feature;
  if (color_feature >= 0) {
    out.color_feature = color_feature;
  } else {
    out.color_feature = feature;
    double best = -1.0;
    for (std::size_t k = 0; k < e.num_features; ++k) {
      if (k == static_cast<std::size_t>(feature)) continue;
      const double r2 = detail::dispersion_explained_by(e, feature, k);
      if (r2 > best) {
        best = r2;
        out.color_feature = static_cast<int>(k);
      }
    }
  }
  out.points.reserve(e.num_rows);
  for (std::size_t s = 0; s < e.num_rows; ++s)
    out.points.push_back({e.input(s, feature), e.value(s, feature),
                          e.input(s, out.color_feature)});
  return out;
}

struct InteractionSplit {
  std::vector<double> main_plus_rest;  // phi_i with the (i,k) interaction removed
  std::vector<double> interaction;     // the (i,k) interaction series
};

/// Splits feature i's attribution series so that
/// main_plus_rest + interaction == phi_i pointwise.
inline InteractionSplit interaction_dependence_split(
    const std::vector<InteractionExplanation>& matrices, int i, int k) {
  InteractionSplit out;
  out.main_plus_rest.reserve(matrices.size());
  out.interaction.reserve(matrices.size());
  for (const InteractionExplanation& m : matrices) {
    if (i < 0 || i >= m.num_features || k < 0 || k >= m.num_features)
      throw validation_error("interaction_dependence_split: feature index out of range");
    const double phi_i = m.row_sum(i);
    const double inter = i == k ? 0.0 : m.feature_at(i, k);
    out.interaction.push_back(inter);
    out.main_plus_rest.push_back(phi_i - inter);
  }
  return out;
}

// --------------------------------------------------------------------------
// Loss monitoring

/// Ordered per-record loss attributions plus the overall loss, with trailing
/// rolling means over `window` records.
struct MonitoringSeries {
  std::vector<double> timestamps;
  std::size_t num_features = 0;
  std::vector<double> attributions;  // num_records x num_features, raw per record
  std::vector<double> losses;        // overall loss per record
  std::vector<double> bases;         // mean background loss per record (labels differ)
  int window = 1;

  std::size_t num_records() const { return timestamps.size(); }
  double attribution(std::size_t t, std::size_t f) const {
    return attributions[t * num_features + f];
  }

  std::vector<double> rolling(std::span<const double> series) const {
    std::vector<double> out(series.size());
    double acc = 0.0;
    for (std::size_t t = 0; t < series.size(); ++t) {
      acc += series[t];
      if (t >= static_cast<std::size_t>(window)) acc -= series[t - window];
      const std::size_t n = std::min<std::size_t>(t + 1, window);
      out[t] = acc / static_cast<double>(n);
    }
    return out;
  }

  std::vector<double> rolling_feature(std::size_t f) const {
    std::vector<double> col(num_records());
    for (std::size_t t = 0; t < num_records(); ++t) col[t] = attribution(t, f);
    return rolling(col);
  }

  std::vector<double> rolling_loss() const { return rolling(losses); }
  std::vector<double> rolling_base() const { return rolling(bases); }
};

/// Explains the loss of every record in an ordered stream and keeps the raw
/// attributions for rolling views and drift tests.
inline MonitoringSeries monitoring_series(const TreeEnsemble& ens, const Dataset& stream,
                                          LossSpec::Kind loss_kind, const BackgroundSet& bg,
                                          int window, int threads = 1) {
  if (!stream.has_labels()) throw validation_error("monitoring_series: stream has no labels");
  if (window < 1) throw validation_error("monitoring_series: window must be >= 1");
  for (std::size_t t = 1; t < stream.timestamps.size(); ++t)
    if (stream.timestamps[t] < stream.timestamps[t - 1])
      throw validation_error("monitoring_series: timestamps must be nondecreasing");

  MonitoringSeries out;
  out.num_features = stream.num_cols;
  out.window = window;
  out.timestamps = stream.has_timestamps() ? stream.timestamps : std::vector<double>();
  if (out.timestamps.empty()) {
    out.timestamps.resize(stream.num_rows);
    std::iota(out.timestamps.begin(), out.timestamps.end(), 0.0);
  }
  out.attributions.assign(stream.num_rows * stream.num_cols, 0.0);
  out.losses.assign(stream.num_rows, 0.0);
  out.bases.assign(stream.num_rows, 0.0);

  parallel_for(stream.num_rows, threads, [&](std::size_t t) {
    LossSpec loss{loss_kind, stream.labels[t]};
    const Explanation e = explain_loss(ens, stream.row(t), loss, bg);
    std::copy(e.values.begin(), e.values.end(),
              out.attributions.begin() + t * stream.num_cols);
    out.losses[t] = loss_value(loss, predict_margin(ens, stream.row(t)));
    out.bases[t] = e.base;
  });
  return out;
}

/// Welch two-sample t-test between a feature's raw loss attributions in two
/// index windows [begin, end).
inline double drift_test(const MonitoringSeries& series, int feature,
                         std::pair<std::size_t, std::size_t> early,
                         std::pair<std::size_t, std::size_t> late) {
  if (feature < 0 || static_cast<std::size_t>(feature) >= series.num_features)
    throw validation_error("drift_test: feature index out of range");
  auto slice = [&](std::pair<std::size_t, std::size_t> w) {
    if (w.first >= w.second || w.second > series.num_records())
      throw validation_error("drift_test: empty or out-of-range window");
    std::vector<double> out;
    out.reserve(w.second - w.first);
    for (std::size_t t = w.first; t < w.second; ++t)
      out.push_back(series.attribution(t, feature));
    return out;
  };
  const std::vector<double> a = slice(early);
  const std::vector<double> b = slice(late);
  return welch_t_test_p(a, b);
}

// --------------------------------------------------------------------------
// Supervised clustering (complete linkage, Euclidean distance on raw
// attribution rows)

struct ClusterResult {
  struct Merge {
    int left = 0;   // cluster ids: leaves 0..N-1, merge k creates id N+k
    int right = 0;
    double distance = 0.0;
    int size = 0;
  };
  std::vector<int> leaf_order;
  std::vector<Merge> merges;
};

inline ClusterResult supervised_cluster(const ExplanationMatrix& e) {
  const std::size_t n = e.num_rows;
  if (n < 2) throw validation_error("supervised_cluster: need at least two rows");

  std::vector<double> dist(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (std::size_t f = 0; f < e.num_features; ++f) {
        const double d = e.value(i, f) - e.value(j, f);
        s += d * d;
      }
      dist[i * n + j] = dist[j * n + i] = std::sqrt(s);
    }

  struct Cluster {
    bool active = true;
    int id = 0;  // scipy-style id
    std::vector<int> members;  // in leaf order
    int min_member = 0;
  };
  std::vector<Cluster> clusters(n);
  for (std::size_t i = 0; i < n; ++i)
    clusters[i] = {true, static_cast<int>(i), {static_cast<int>(i)}, static_cast<int>(i)};

  ClusterResult out;
  int next_id = static_cast<int>(n);
  for (std::size_t step = 0; step + 1 < n; ++step) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t bi = 0, bj = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!clusters[i].active) continue;
      for (std::size_t j = i + 1; j < n; ++j) {
        if (!clusters[j].active) continue;
        if (dist[i * n + j] < best) {
          best = dist[i * n + j];
          bi = i;
          bj = j;
        }
      }
    }
    // complete linkage: distance to the merged cluster is the max
    for (std::size_t k = 0; k < n; ++k) {
      if (!clusters[k].active || k == bi || k == bj) continue;
      dist[bi * n + k] = dist[k * n + bi] = std::max(dist[bi * n + k], dist[bj * n + k]);
    }
    ClusterResult::Merge merge;
    merge.left = clusters[bi].id;
    merge.right = clusters[bj].id;
    merge.distance = best;
    merge.size = static_cast<int>(clusters[bi].members.size() + clusters[bj].members.size());
    out.merges.push_back(merge);

    // the cluster whose smallest original index is smaller comes first
    Cluster& a = clusters[bi];
    Cluster& b = clusters[bj];
    if (b.min_member < a.min_member) std::swap(a.members, b.members);
    a.members.insert(a.members.end(), b.members.begin(), b.members.end());
    a.min_member = std::min(a.min_member, b.min_member);
    a.id = next_id++;
    b.active = false;
  }
  for (const Cluster& c : clusters)
    if (c.active) out.leaf_order = c.members;
  return out;
}

// --------------------------------------------------------------------------
// Explanation-space PCA

struct PcaResult {
  int components = 0;
  std::vector<double> coordinates;         // N x k
  std::vector<double> loadings;            // M x k
  std::vector<double> explained_variance;  // k eigenvalues, descending
  double total_variance = 0.0;
};

/// Mean-centered principal components of the attribution matrix via the
/// M x M covariance eigendecomposition, or the N x N Gram matrix when there
/// are fewer samples than features. Sign convention: the largest-magnitude
/// loading of every component is positive.
inline PcaResult explanation_pca(const ExplanationMatrix& e, int k) {
  const std::size_t n = e.num_rows, m = e.num_features;
  if (k < 1 || static_cast<std::size_t>(k) > std::min(n, m))
    throw validation_error("explanation_pca: k must be in [1, min(N, M)]");

  Eigen::MatrixXd x(n, m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) x(i, j) = e.value(i, j);
  const Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;
  const double denom = n > 1 ? static_cast<double>(n - 1) : 1.0;

  PcaResult out;
  out.components = k;
  out.coordinates.assign(n * k, 0.0);
  out.loadings.assign(m * k, 0.0);
  out.explained_variance.assign(k, 0.0);

  Eigen::MatrixXd loadings(m, k);
  Eigen::VectorXd eigvals(k);
  if (m <= n) {
    const Eigen::MatrixXd cov = x.transpose() * x / denom;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    out.total_variance = cov.trace();
    for (int c = 0; c < k; ++c) {
      const int src = static_cast<int>(m) - 1 - c;  // eigenvalues come ascending
      eigvals(c) = solver.eigenvalues()(src);
      loadings.col(c) = solver.eigenvectors().col(src);
    }
  } else {
    const Eigen::MatrixXd gram = x * x.transpose() / denom;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram);
    out.total_variance = gram.trace();
    for (int c = 0; c < k; ++c) {
      const int src = static_cast<int>(n) - 1 - c;
      eigvals(c) = solver.eigenvalues()(src);
      Eigen::VectorXd v = x.transpose() * solver.eigenvectors().col(src);
      const double norm = v.norm();
      loadings.col(c) = norm > 0 ? Eigen::VectorXd(v / norm) : v;
    }
  }
  for (int c = 0; c < k; ++c) {
    int arg = 0;
    for (int j = 1; j < static_cast<int>(m); ++j)
      if (std::abs(loadings(j, c)) > std::abs(loadings(arg, c))) arg = j;
    if (loadings(arg, c) < 0) loadings.col(c) = -loadings.col(c);
  }
  const Eigen::MatrixXd coords = x * loadings;
  for (std::size_t i = 0; i < n; ++i)
    for (int c = 0; c < k; ++c) out.coordinates[i * k + c] = coords(i, c);
  for (std::size_t j = 0; j < m; ++j)
    for (int c = 0; c < k; ++c) out.loadings[j * k + c] = loadings(j, c);
  for (int c = 0; c < k; ++c) out.explained_variance[c] = std::max(0.0, eigvals(c));
  return out;
}

// --------------------------------------------------------------------------
// Global baselines

/// Per-feature sum of split gains. Requires the model to carry gain.
inline std::vector<double> gain_importance(const TreeEnsemble& ens) {
  for (const Tree& t : ens.trees)
    if (!t.has_gain())
      throw validation_error(
          "gain_importance: model carries no per-split gain (unsupported)");
  std::vector<double> out(ens.num_features, 0.0);
  for (const Tree& t : ens.trees)
    for (int j = 0; j < t.num_nodes(); ++j)
      if (!t.is_leaf(j)) out[t.split_feature[j]] += t.gain[j];
  return out;
}

enum class PerfMetric { kR2, kRocAuc };

/// Drop in the model's accuracy metric when one column is permuted, averaged
/// over seeded permutations.
inline std::vector<double> permutation_importance(const TreeEnsemble& ens,
                                                  const Dataset& data, PerfMetric metric,
                                                  std::uint64_t seed, int repeats = 10) {
  if (!data.has_labels())
    throw validation_error("permutation_importance: dataset has no labels");
  auto score = [&](const std::vector<double>& preds) {
    return metric == PerfMetric::kR2 ? r_squared(preds, data.labels)
                                     : roc_auc(preds, data.labels);
  };
  std::vector<double> preds(data.num_rows);
  for (std::size_t i = 0; i < data.num_rows; ++i) preds[i] = predict_margin(ens, data.row(i));
  const double baseline = score(preds);

  std::vector<double> out(data.num_cols, 0.0);
  std::vector<double> row(data.num_cols);
  for (std::size_t f = 0; f < data.num_cols; ++f) {
    double drop = 0.0;
    for (int rep = 0; rep < repeats; ++rep) {
      std::mt19937_64 rng(seed + 0x9e3779b9ull * f + rep);
      std::vector<std::size_t> perm(data.num_rows);
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
      for (std::size_t i = 0; i < data.num_rows; ++i) {
        const auto r = data.row(i);
        std::copy(r.begin(), r.end(), row.begin());
        row[f] = data.at(perm[i], f);
        preds[i] = predict_margin(ens, row);
      }
      drop += baseline - score(preds);
    }
    out[f] = drop / repeats;
  }
  return out;
}

}  // namespace arbor
