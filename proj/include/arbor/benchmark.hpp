#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "arbor/agnostic.hpp"
#include "arbor/analysis.hpp"
#include "arbor/data.hpp"
#include "arbor/explanation.hpp"
#include "arbor/indep.hpp"
#include "arbor/model.hpp"
#include "arbor/oracle.hpp"
#include "arbor/parallel.hpp"
#include "arbor/stats.hpp"
#include "arbor/train.hpp"
#include "arbor/treeshap.hpp"

// The local-explanation benchmark: three ways of hiding features, eighteen
// keep/remove ordering metrics plus local accuracy, runtime and consistency
// guarantees (21 in total), the user-study scenario fixtures and the
// feature-selection power experiment.

namespace arbor {

// --------------------------------------------------------------------------
// Maskers

enum class Masker { kMean, kResample, kImpute };

inline const char* masker_name(Masker m) {
  switch (m) {
    case Masker::kMean: return "mask";
    case Masker::kResample: return "resample";
    case Masker::kImpute: return "impute";
  }
  return "unknown";
}

/// Column means and covariance of the training data, precomputed for the
/// maskers. Covariance uses complete rows.
struct TrainStats {
  std::vector<double> means;
  Eigen::MatrixXd covariance;
  const Dataset* train = nullptr;

  static TrainStats compute(const Dataset& train) {
    TrainStats s;
    s.train = &train;
    const std::size_t m = train.num_cols;
    s.means.assign(m, 0.0);
    std::vector<std::size_t> counts(m, 0);
    for (std::size_t i = 0; i < train.num_rows; ++i)
      for (std::size_t j = 0; j < m; ++j)
        if (!is_missing(train.at(i, j))) {
          s.means[j] += train.at(i, j);
          ++counts[j];
        }
    for (std::size_t j = 0; j < m; ++j)
      if (counts[j] > 0) s.means[j] /= static_cast<double>(counts[j]);

    s.covariance = Eigen::MatrixXd::Zero(m, m);
    std::size_t complete = 0;
    for (std::size_t i = 0; i < train.num_rows; ++i) {
      bool ok = true;
      for (std::size_t j = 0; j < m && ok; ++j) ok = !is_missing(train.at(i, j));
      if (!ok) continue;
      ++complete;
      for (std::size_t a = 0; a < m; ++a)
        for (std::size_t b = 0; b < m; ++b)
          s.covariance(a, b) +=
              (train.at(i, a) - s.means[a]) * (train.at(i, b) - s.means[b]);
    }
    if (complete > 1) s.covariance /= static_cast<double>(complete - 1);
    return s;
  }
};

/// Replaces the hidden features of x per the masker: the column mean, 100
/// rows resampled from the training data (averaged downstream), or the
/// conditional multivariate-normal estimate from the training covariance.
inline std::vector<std::vector<double>> mask_row(std::span<const double> x,
                                                 const FeatureSubset& hidden, Masker masker,
                                                 const TrainStats& stats,
                                                 std::mt19937_64& rng,
                                                 int resample_count = 100) {
  const std::size_t m = x.size();
  std::vector<char> is_hidden(m, 0);
  for (int i : hidden.indices) {
    if (i < 0 || static_cast<std::size_t>(i) >= m)
      throw validation_error("mask_row: hidden index out of range");
    is_hidden[i] = 1;
  }

  if (masker == Masker::kResample) {
    const Dataset& train = *stats.train;
    std::uniform_int_distribution<std::size_t> pick(0, train.num_rows - 1);
    std::vector<std::vector<double>> rows(resample_count,
                                          std::vector<double>(x.begin(), x.end()));
    for (auto& row : rows) {
      const std::size_t r = pick(rng);
      for (std::size_t j = 0; j < m; ++j)
        if (is_hidden[j]) row[j] = train.at(r, j);
    }
    return rows;
  }

  std::vector<double> row(x.begin(), x.end());
  if (masker == Masker::kMean) {
    for (std::size_t j = 0; j < m; ++j)
      if (is_hidden[j]) row[j] = stats.means[j];
    return {row};
  }

  // impute: mu_h + Sigma_ho Sigma_oo^{-1} (x_o - mu_o); missing observed
  // cells are treated as hidden
  std::vector<int> h, o;
  for (std::size_t j = 0; j < m; ++j) {
    if (is_hidden[j] || is_missing(x[j]))
      h.push_back(static_cast<int>(j));
    else
      o.push_back(static_cast<int>(j));
  }
  if (h.empty()) return {row};
  if (o.empty()) {
    for (int j : h) row[j] = stats.means[j];
    return {row};
  }
  Eigen::MatrixXd sigma_oo(o.size(), o.size());
  Eigen::MatrixXd sigma_ho(h.size(), o.size());
  Eigen::VectorXd centered(o.size());
  for (std::size_t a = 0; a < o.size(); ++a) {
    centered(a) = x[o[a]] - stats.means[o[a]];
    for (std::size_t b = 0; b < o.size(); ++b) sigma_oo(a, b) = stats.covariance(o[a], o[b]);
    for (std::size_t b = 0; b < h.size(); ++b) sigma_ho(b, a) = stats.covariance(h[b], o[a]);
  }
  Eigen::VectorXd solved = sigma_oo.ldlt().solve(centered);
  if (!solved.allFinite() ||
      (sigma_oo * solved - centered).norm() > 1e-6 * (centered.norm() + 1.0)) {
    std::cerr << "mask_row: singular observed covariance, applying ridge 1e-6*I\n";
    const Eigen::MatrixXd ridged =
        sigma_oo + 1e-6 * Eigen::MatrixXd::Identity(o.size(), o.size());
    solved = ridged.ldlt().solve(centered);
  }
  const Eigen::VectorXd imputed = sigma_ho * solved;
  for (std::size_t b = 0; b < h.size(); ++b) row[h[b]] = stats.means[h[b]] + imputed(b);
  return {row};
}

// --------------------------------------------------------------------------
// Metric specs

struct MetricSpec {
  enum class Family { kOrdering, kLocalAccuracy, kRuntime, kConsistency };
  enum class Mode { kKeep, kRemove };
  enum class Direction { kPositive, kNegative, kAbsolute };

  Family family = Family::kOrdering;
  Mode mode = Mode::kKeep;
  Direction direction = Direction::kPositive;
  Masker masker = Masker::kMean;
  int fractions = 11;        // evenly spaced in [0, 1]
  int resample_count = 100;

  std::string id() const {
    switch (family) {
      case Family::kLocalAccuracy: return "local_accuracy";
      case Family::kRuntime: return "runtime";
      case Family::kConsistency: return "consistency";
      case Family::kOrdering: break;
    }
    std::string s = mode == Mode::kKeep ? "keep_" : "remove_";
    s += direction == Direction::kPositive ? "positive"
         : direction == Direction::kNegative ? "negative"
                                             : "absolute";
    s += "_";
    s += masker_name(masker);
    return s;
  }

  // orientation used by the tile normalization
  bool higher_is_better() const {
    switch (family) {
      case Family::kLocalAccuracy:
      case Family::kConsistency: return true;
      case Family::kRuntime: return false;
      case Family::kOrdering: break;
    }
    if (direction == Direction::kAbsolute) return mode == Mode::kKeep;
    const bool positive = direction == Direction::kPositive;
    return mode == Mode::kKeep ? positive : !positive;
  }

  /// The full 21-metric roster: 3 modes x 2 directions x 3 maskers ordering
  /// metrics plus local accuracy, runtime and the consistency guarantee.
  static std::vector<MetricSpec> all_metrics() {
    std::vector<MetricSpec> out;
    out.push_back({Family::kRuntime});
    out.push_back({Family::kLocalAccuracy});
    out.push_back({Family::kConsistency});
    for (Mode mode : {Mode::kKeep, Mode::kRemove})
      for (Direction dir : {Direction::kPositive, Direction::kNegative, Direction::kAbsolute})
        for (Masker masker : {Masker::kMean, Masker::kResample, Masker::kImpute})
          out.push_back({Family::kOrdering, mode, dir, masker});
    return out;
  }
};

struct MetricResult {
  std::string metric;
  std::string explainer;
  std::string model;
  double score = 0.0;
  std::vector<std::pair<double, double>> curve;  // (fraction, value) for ordering metrics
};

/// A named per-row explanation producer, the unit the benchmark compares.
struct BenchExplainer {
  std::string name;
  Method method = Method::kTreeShap;
  std::function<Explanation(std::span<const double>)> explain;
};

// --------------------------------------------------------------------------
// Ordering metrics

namespace detail {

inline bool labels_are_binary(std::span<const double> labels) {
  for (double y : labels)
    if (y != 0.0 && y != 1.0) return false;
  return true;
}

}  // namespace detail

/// Core of the 18 keep/remove metrics, with the attributions already in
/// hand. Per sample the features are ranked by signed or absolute
/// attribution and the top fraction kept (everything else masked) or removed
/// (masked). Positive/negative metrics score the mean model output,
/// absolute metrics the model accuracy (ROC AUC for binary labels, R^2
/// otherwise); the score is the area under the fraction curve.
inline MetricResult ordering_metric_with(const MetricSpec& spec, const TreeEnsemble& model,
                                         const std::string& explainer_name,
                                         const ExplanationMatrix& attributions,
                                         const Dataset& eval_set, const TrainStats& train,
                                         std::uint64_t seed) {
  if (spec.family != MetricSpec::Family::kOrdering)
    throw validation_error("ordering_metric: spec is not an ordering metric");
  if (eval_set.num_rows == 0) throw validation_error("ordering_metric: empty eval set");
  const bool absolute = spec.direction == MetricSpec::Direction::kAbsolute;
  if (absolute && !eval_set.has_labels())
    throw validation_error("ordering_metric: absolute metrics need labels");

  const std::size_t n = eval_set.num_rows;
  const int m = static_cast<int>(eval_set.num_cols);
  const bool classification = absolute && detail::labels_are_binary(eval_set.labels);

  // per sample: feature order by the metric's direction
  std::vector<std::vector<int>> order(n);
  std::vector<int> eligible(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto phi = attributions.row(i);
    order[i].resize(m);
    std::iota(order[i].begin(), order[i].end(), 0);
    switch (spec.direction) {
      case MetricSpec::Direction::kPositive:
        std::stable_sort(order[i].begin(), order[i].end(),
                         [&](int a, int b) { return phi[a] > phi[b]; });
        eligible[i] = static_cast<int>(std::count_if(phi.begin(), phi.end(),
                                                     [](double v) { return v > 0.0; }));
        break;
      case MetricSpec::Direction::kNegative:
        std::stable_sort(order[i].begin(), order[i].end(),
                         [&](int a, int b) { return phi[a] < phi[b]; });
        eligible[i] = static_cast<int>(std::count_if(phi.begin(), phi.end(),
                                                     [](double v) { return v < 0.0; }));
        break;
      case MetricSpec::Direction::kAbsolute:
        std::stable_sort(order[i].begin(), order[i].end(), [&](int a, int b) {
          return std::abs(phi[a]) > std::abs(phi[b]);
        });
        eligible[i] = m;
        break;
    }
  }

  MetricResult result;
  result.metric = spec.id();
  result.explainer = explainer_name;
  for (int fi = 0; fi < spec.fractions; ++fi) {
    const double q = static_cast<double>(fi) / (spec.fractions - 1);
    const int take = static_cast<int>(std::lround(q * m));
    std::mt19937_64 rng(seed + 1000003ull * fi);
    std::vector<double> outputs(n);
    for (std::size_t i = 0; i < n; ++i) {
      const int selected = std::min(take, eligible[i]);
      FeatureSubset hidden;
      if (spec.mode == MetricSpec::Mode::kKeep) {
        for (int r = selected; r < m; ++r) hidden.indices.push_back(order[i][r]);
      } else {
        for (int r = 0; r < selected; ++r) hidden.indices.push_back(order[i][r]);
      }
      const auto rows =
          mask_row(eval_set.row(i), hidden, spec.masker, train, rng, spec.resample_count);
      double out = 0.0;
      for (const auto& row : rows) out += predict_margin(model, row);
      outputs[i] = out / static_cast<double>(rows.size());
    }
    double value;
    if (absolute)
      value = classification ? roc_auc(outputs, eval_set.labels)
                             : r_squared(outputs, eval_set.labels);
    else
      value = mean_of(outputs);
    result.curve.emplace_back(q, value);
  }
  for (std::size_t fi = 0; fi + 1 < result.curve.size(); ++fi)
    result.score += 0.5 * (result.curve[fi].second + result.curve[fi + 1].second) *
                    (result.curve[fi + 1].first - result.curve[fi].first);
  return result;
}

inline MetricResult ordering_metric(const MetricSpec& spec, const TreeEnsemble& model,
                                    const BenchExplainer& explainer, const Dataset& eval_set,
                                    const TrainStats& train, std::uint64_t seed,
                                    int threads = 1) {
  const ExplanationMatrix attributions =
      explain_rows(eval_set, explainer.explain, explainer.method, threads);
  return ordering_metric_with(spec, model, explainer.name, attributions, eval_set, train,
                              seed);
}

// --------------------------------------------------------------------------
// Local accuracy

/// Cutoff ladder mapping the normalized RMS deviation sigma to a score.
inline double local_accuracy_ladder(double sigma) {
  if (sigma < 1e-6) return 1.00;
  if (sigma < 0.01) return 0.90;
  if (sigma < 0.05) return 0.75;
  if (sigma < 0.10) return 0.60;
  if (sigma < 0.20) return 0.40;
  if (sigma < 0.30) return 0.30;
  if (sigma < 0.50) return 0.20;
  if (sigma < 0.70) return 0.10;
  return 0.0;
}

struct LocalAccuracyResult {
  double score = 0.0;
  double sigma = 0.0;
};

inline LocalAccuracyResult local_accuracy_from(const ExplanationMatrix& attributions,
                                               const TreeEnsemble& model,
                                               const Dataset& eval_set) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < eval_set.num_rows; ++i) {
    const double f = predict_margin(model, eval_set.row(i));
    double recon = attributions.bases[i];
    for (std::size_t j = 0; j < attributions.num_features; ++j)
      recon += attributions.value(i, j);
    num += (f - recon) * (f - recon);
    den += f * f;
  }
  LocalAccuracyResult out;
  if (den == 0.0) {
    if (num != 0.0)
      throw validation_error("local_accuracy_score: zero-output model with nonzero residual");
    out.sigma = 0.0;
  } else {
    out.sigma = std::sqrt(num / den);
  }
  out.score = local_accuracy_ladder(out.sigma);
  return out;
}

inline LocalAccuracyResult local_accuracy_score(const BenchExplainer& explainer,
                                                const TreeEnsemble& model,
                                                const Dataset& eval_set, int threads = 1) {
  const ExplanationMatrix attributions =
      explain_rows(eval_set, explainer.explain, explainer.method, threads);
  return local_accuracy_from(attributions, model, eval_set);
}

// --------------------------------------------------------------------------
// Runtime

struct RuntimeResult {
  double seconds = 0.0;        // init + scaled per-prediction time
  double init_seconds = 0.0;   // unscaled
  double per_thousand = 0.0;   // per-prediction time over 100 rows, x10
};

/// Time to explain 1,000 predictions: measured on 100 and scaled by 10, with
/// the explainer's initialization measured separately (unscaled).
inline RuntimeResult runtime_metric(const std::function<BenchExplainer()>& factory,
                                    const Dataset& eval_set) {
  if (eval_set.num_rows < 100)
    throw validation_error("runtime_metric: need at least 100 samples");
  RuntimeResult out;
  const auto t0 = std::chrono::steady_clock::now();
  const BenchExplainer explainer = factory();
  const auto t1 = std::chrono::steady_clock::now();
  double acc = 0.0;
  for (std::size_t i = 0; i < 100; ++i) acc += explainer.explain(eval_set.row(i)).base;
  const auto t2 = std::chrono::steady_clock::now();
  volatile double sink = acc;
  (void)sink;
  out.init_seconds = std::chrono::duration<double>(t1 - t0).count();
  out.per_thousand = std::chrono::duration<double>(t2 - t1).count() * 10.0;
  out.seconds = out.init_seconds + out.per_thousand;
  return out;
}

// --------------------------------------------------------------------------
// Consistency guarantees

enum class ConsistencyGuarantee { kExact, kSamplingLimit, kNone };

inline ConsistencyGuarantee consistency_rating(Method m) {
  switch (m) {
    case Method::kTreeShap:
    case Method::kIndep:
    case Method::kBrute: return ConsistencyGuarantee::kExact;
    case Method::kSampling:
    case Method::kKernel: return ConsistencyGuarantee::kSamplingLimit;
    case Method::kSaabas:
    case Method::kGain:
    case Method::kPermutation: return ConsistencyGuarantee::kNone;
  }
  throw validation_error("consistency_rating: unknown method");
}

inline ConsistencyGuarantee consistency_rating(const std::string& name) {
  for (Method m : {Method::kTreeShap, Method::kSaabas, Method::kBrute, Method::kIndep,
                   Method::kSampling, Method::kKernel, Method::kGain, Method::kPermutation})
    if (name == method_name(m)) return consistency_rating(m);
  throw validation_error("consistency_rating: unknown method '" + name + "'");
}

inline double consistency_score(ConsistencyGuarantee g) {
  switch (g) {
    case ConsistencyGuarantee::kExact: return 1.0;
    case ConsistencyGuarantee::kSamplingLimit: return 0.5;
    case ConsistencyGuarantee::kNone: return 0.0;
  }
  return 0.0;
}

}  // namespace arbor

#include "arbor/benchmark_suites.hpp"
