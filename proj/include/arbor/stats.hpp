#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "arbor/model.hpp"

namespace arbor {

/// Welford online mean/variance.
struct RunningStat {
  std::size_t n = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void push(double x) {
    ++n;
    const double d = x - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (x - mean);
  }
  double variance() const { return n > 1 ? m2 / static_cast<double>(n - 1) : 0.0; }
  double stddev() const { return std::sqrt(variance()); }
};

inline double mean_of(std::span<const double> xs) {
  if (xs.empty()) return 0.0;
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

inline double sample_variance(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean_of(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return s / static_cast<double>(xs.size() - 1);
}

/// Two-sided Welch two-sample t-test. Degenerate variances take the
/// exact-equality fast path: p = 1 when the means coincide, 0 otherwise.
inline double welch_t_test_p(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty())
    throw validation_error("welch_t_test_p: both samples must be nonempty");
  const double ma = mean_of(a), mb = mean_of(b);
  const double va = sample_variance(a), vb = sample_variance(b);
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  const double se2 = va / na + vb / nb;
  if (se2 <= 0.0) return ma == mb ? 1.0 : 0.0;
  const double t = (ma - mb) / std::sqrt(se2);
  const double df =
      se2 * se2 / (va * va / (na * na * (na - 1)) + vb * vb / (nb * nb * (nb - 1)));
  boost::math::students_t dist(std::max(df, 1.0));
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

/// One-sided paired t-test that mean(a - b) > 0.
inline double paired_t_test_p_greater(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2)
    throw validation_error("paired_t_test: need two aligned samples of size >= 2");
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  const double m = mean_of(d);
  const double v = sample_variance(d);
  if (v <= 0.0) return m > 0.0 ? 0.0 : 1.0;
  const double t = m / std::sqrt(v / static_cast<double>(d.size()));
  boost::math::students_t dist(static_cast<double>(d.size() - 1));
  return boost::math::cdf(boost::math::complement(dist, t));
}

/// Rank-based ROC AUC with midranks for ties. Labels must contain both
/// classes.
inline double roc_auc(std::span<const double> scores, std::span<const double> labels) {
  const std::size_t n = scores.size();
  if (labels.size() != n) throw validation_error("roc_auc: size mismatch");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t i, std::size_t j) { return scores[i] < scores[j]; });
  double rank_sum_pos = 0.0;
  std::size_t n_pos = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + j - 1) + 1.0;
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]] > 0.5) {
        rank_sum_pos += midrank;
        ++n_pos;
      }
    i = j;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0)
    throw validation_error("roc_auc: eval labels are a single class");
  return (rank_sum_pos - 0.5 * n_pos * (n_pos + 1)) /
         (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

inline double r_squared(std::span<const double> pred, std::span<const double> y) {
  if (pred.size() != y.size() || y.empty())
    throw validation_error("r_squared: size mismatch");
  const double my = mean_of(y);
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    ss_res += (y[i] - pred[i]) * (y[i] - pred[i]);
    ss_tot += (y[i] - my) * (y[i] - my);
  }
  if (ss_tot == 0.0) return ss_res == 0.0 ? 1.0 : 0.0;
  return 1.0 - ss_res / ss_tot;
}

/// Fractional ranks in [0, 1] (midranks for ties); NaN cells keep NaN.
inline std::vector<double> percentile_ranks(std::span<const double> xs) {
  const std::size_t n = xs.size();
  std::vector<std::size_t> order;
  order.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    if (!is_missing(xs[i])) order.push_back(i);
  std::sort(order.begin(), order.end(),
            [&](std::size_t i, std::size_t j) { return xs[i] < xs[j]; });
  std::vector<double> out(n, missing_value());
  const double denom = order.size() > 1 ? static_cast<double>(order.size() - 1) : 1.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && xs[order[j]] == xs[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + j - 1);
    for (std::size_t k = i; k < j; ++k) out[order[k]] = midrank / denom;
    i = j;
  }
  return out;
}

}  // namespace arbor
