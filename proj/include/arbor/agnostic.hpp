#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <functional>
#include <iostream>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "arbor/explanation.hpp"
#include "arbor/indep.hpp"
#include "arbor/model.hpp"
#include "arbor/oracle.hpp"
#include "arbor/stats.hpp"
#include "arbor/treeshap.hpp"

// Model-agnostic Shapley estimators: permutation sampling with adaptive
// variance allocation, and kernel-weighted least squares over sampled
// coalitions. Both treat the model as a black-box row -> output callback and
// hide features with composite inputs drawn from a background set.

namespace arbor {

using ModelFn = std::function<double(std::span<const double>)>;

inline ModelFn model_callback(const TreeEnsemble& ens) {
  return [&ens](std::span<const double> row) { return predict_margin(ens, row); };
}

struct EstimatorConfig {
  std::uint64_t n_evaluations = 2048;
  int min_samples_per_feature = 16;     // sampling only
  std::optional<double> l1_penalty;     // kernel only; off by default
  std::uint64_t seed = 0;
};

namespace detail {

inline std::size_t pick_reference(const BackgroundSet& bg, std::mt19937_64& rng) {
  if (bg.num_rows == 1) return 0;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  if (bg.weights.empty())
    return std::min<std::size_t>(bg.num_rows - 1,
                                 static_cast<std::size_t>(unit(rng) * bg.num_rows));
  double u = unit(rng), acc = 0.0;
  for (std::size_t r = 0; r < bg.num_rows; ++r) {
    acc += bg.weights[r];
    if (u <= acc) return r;
  }
  return bg.num_rows - 1;
}

inline double factorial(int n) {
  double f = 1.0;
  for (int i = 2; i <= n; ++i) f *= i;
  return f;
}

}  // namespace detail

/// Unbiased permutation-sampling estimate: each draw evaluates one marginal
/// contribution v(S u {i}) - v(S) with S the predecessors of i in a random
/// ordering. After the minimum pass the remaining draws go to features in
/// proportion to their observed standard deviation. When the budget covers
/// all M! orderings the estimator enumerates them and is exact.
inline Explanation sampling_shap(const ModelFn& model, std::span<const double> x,
                                 const BackgroundSet& bg, const EstimatorConfig& cfg) {
  bg.validate();
  const int m = static_cast<int>(x.size());
  if (bg.num_cols != x.size())
    throw dimension_error("sampling_shap: background column count mismatch");
  if (m < 1) throw validation_error("sampling_shap: empty feature row");

  Explanation e;
  e.method = Method::kSampling;
  e.values.assign(m, 0.0);
  for (std::size_t r = 0; r < bg.num_rows; ++r)
    e.base += bg.weight(r) * model(bg.row(r));

  // exact limit case: all orderings, chained evaluations
  if (m <= 8) {
    const double cost = bg.num_rows * (m + 1) * detail::factorial(m);
    if (cost <= static_cast<double>(cfg.n_evaluations)) {
      std::vector<int> perm(m);
      std::iota(perm.begin(), perm.end(), 0);
      const double inv_orderings = 1.0 / detail::factorial(m);
      std::vector<double> row(m);
      do {
        for (std::size_t r = 0; r < bg.num_rows; ++r) {
          const double w = bg.weight(r) * inv_orderings;
          std::copy(bg.row(r).begin(), bg.row(r).end(), row.begin());
          double prev = model(row);
          for (int d : perm) {
            row[d] = x[d];
            const double cur = model(row);
            e.values[d] += w * (cur - prev);
            prev = cur;
          }
        }
      } while (std::next_permutation(perm.begin(), perm.end()));
      return e;
    }
  }

  const std::uint64_t total_draws = cfg.n_evaluations / 2;
  const std::uint64_t min_draws =
      static_cast<std::uint64_t>(m) * static_cast<std::uint64_t>(cfg.min_samples_per_feature);
  if (total_draws < min_draws)
    throw validation_error(
        "sampling_shap: insufficient budget, need at least 2*M*min_samples_per_feature = " +
        std::to_string(2 * min_draws) + " evaluations");

  std::mt19937_64 rng(cfg.seed);
  std::vector<int> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> row(m);
  std::vector<RunningStat> stats(m);

  auto draw_one = [&](int feature) {
    const std::size_t r = detail::pick_reference(bg, rng);
    std::shuffle(order.begin(), order.end(), rng);
    std::copy(bg.row(r).begin(), bg.row(r).end(), row.begin());
    for (int d : order) {
      if (d == feature) break;
      row[d] = x[d];
    }
    const double without = model(row);
    row[feature] = x[feature];
    const double with = model(row);
    stats[feature].push(with - without);
  };

  for (int i = 0; i < m; ++i)
    for (int k = 0; k < cfg.min_samples_per_feature; ++k) draw_one(i);

  // spend the rest where the variance is: extra draws proportional to the
  // per-feature std observed in the minimum pass
  std::uint64_t extra = total_draws - min_draws;
  std::vector<double> sd(m);
  double sd_sum = 0.0;
  for (int i = 0; i < m; ++i) sd_sum += sd[i] = stats[i].stddev();
  std::vector<std::uint64_t> alloc(m, 0);
  if (sd_sum > 0.0) {
    std::uint64_t assigned = 0;
    for (int i = 0; i < m; ++i) {
      alloc[i] = static_cast<std::uint64_t>(static_cast<double>(extra) * sd[i] / sd_sum);
      assigned += alloc[i];
    }
    std::vector<int> by_sd(m);
    std::iota(by_sd.begin(), by_sd.end(), 0);
    std::sort(by_sd.begin(), by_sd.end(), [&](int a, int b) { return sd[a] > sd[b]; });
    for (std::uint64_t k = 0; assigned < extra; ++k, ++assigned) ++alloc[by_sd[k % m]];
  } else {
    for (std::uint64_t k = 0; k < extra; ++k) ++alloc[k % m];
  }
  for (int i = 0; i < m; ++i)
    for (std::uint64_t k = 0; k < alloc[i]; ++k) draw_one(i);

  for (int i = 0; i < m; ++i) e.values[i] = stats[i].mean;
  return e;
}

// --------------------------------------------------------------------------
// Kernel estimator

namespace detail {

struct Coalition {
  std::vector<char> z;
  double weight;
};

// Shapley kernel weight of one coalition of size s among m features.
inline double kernel_weight(int m, int s) {
  return (m - 1.0) / (binomial(m, s) * s * (m - s));
}

inline void enumerate_size(int m, int s, std::vector<Coalition>& out, double w) {
  std::vector<int> comb(s);
  std::iota(comb.begin(), comb.end(), 0);
  while (true) {
    Coalition c;
    c.z.assign(m, 0);
    for (int i : comb) c.z[i] = 1;
    c.weight = w;
    out.push_back(std::move(c));
    int i = s - 1;
    while (i >= 0 && comb[i] == m - s + i) --i;
    if (i < 0) break;
    ++comb[i];
    for (int j = i + 1; j < s; ++j) comb[j] = comb[j - 1] + 1;
  }
}

}  // namespace detail

/// Weighted least squares over sampled coalitions with Shapley kernel
/// weights, constrained so the attributions sum to f(x) - base exactly.
/// Complete coalition sizes are enumerated while the budget allows (small and
/// large sizes first, where the kernel mass is), the remainder sampled.
/// Exact at full enumeration.
inline Explanation kernel_shap(const ModelFn& model, std::span<const double> x,
                               const BackgroundSet& bg, const EstimatorConfig& cfg) {
  bg.validate();
  const int m = static_cast<int>(x.size());
  if (bg.num_cols != x.size())
    throw dimension_error("kernel_shap: background column count mismatch");

  Explanation e;
  e.method = Method::kKernel;
  e.values.assign(m, 0.0);
  for (std::size_t r = 0; r < bg.num_rows; ++r)
    e.base += bg.weight(r) * model(bg.row(r));
  const double fx = model(x);
  const double delta = fx - e.base;

  if (m == 1) {
    e.values[0] = delta;
    return e;
  }

  std::uint64_t n_coalitions = cfg.n_evaluations / std::max<std::size_t>(1, bg.num_rows);
  if (n_coalitions < static_cast<std::uint64_t>(m) + 2)
    throw validation_error("kernel_shap: budget must cover at least M + 2 coalitions");

  // fill complete size levels first; kernel mass per size is
  // (m-1)/(s(m-s)) so the extremes carry the most weight
  std::vector<detail::Coalition> coalitions;
  std::vector<int> open_sizes;
  std::uint64_t remaining = n_coalitions;
  for (int s = 1; s <= m / 2; ++s) {
    const int hi = m - s;
    double count = detail::binomial(m, s);
    if (hi != s) count += detail::binomial(m, hi);
    if (count <= static_cast<double>(remaining)) {
      detail::enumerate_size(m, s, coalitions, detail::kernel_weight(m, s));
      if (hi != s) detail::enumerate_size(m, hi, coalitions, detail::kernel_weight(m, hi));
      remaining -= static_cast<std::uint64_t>(count);
    } else {
      open_sizes.push_back(s);
      if (hi != s) open_sizes.push_back(hi);
    }
  }
  if (!open_sizes.empty() && remaining > 0) {
    double open_mass = 0.0;
    std::vector<double> size_mass;
    for (int s : open_sizes) {
      size_mass.push_back((m - 1.0) / (static_cast<double>(s) * (m - s)));
      open_mass += size_mass.back();
    }
    std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double per_sample_weight = open_mass / static_cast<double>(remaining);
    std::vector<int> pool(m);
    std::iota(pool.begin(), pool.end(), 0);
    for (std::uint64_t k = 0; k < remaining; ++k) {
      double u = unit(rng) * open_mass, acc = 0.0;
      int s = open_sizes.back();
      for (std::size_t si = 0; si < open_sizes.size(); ++si) {
        acc += size_mass[si];
        if (u <= acc) {
          s = open_sizes[si];
          break;
        }
      }
      std::shuffle(pool.begin(), pool.end(), rng);
      detail::Coalition c;
      c.z.assign(m, 0);
      for (int i = 0; i < s; ++i) c.z[pool[i]] = 1;
      c.weight = per_sample_weight;
      coalitions.push_back(std::move(c));
    }
  }

  // evaluate the game on every coalition
  std::vector<double> vz(coalitions.size());
  std::vector<double> row(m);
  for (std::size_t c = 0; c < coalitions.size(); ++c) {
    double v = 0.0;
    for (std::size_t r = 0; r < bg.num_rows; ++r) {
      const auto ref = bg.row(r);
      for (int i = 0; i < m; ++i) row[i] = coalitions[c].z[i] ? x[i] : ref[i];
      v += bg.weight(r) * model(row);
    }
    vz[c] = v;
  }

  // eliminate the sum constraint by substituting the last feature
  const int p = m - 1;
  Eigen::MatrixXd a(coalitions.size(), p);
  Eigen::VectorXd y(coalitions.size());
  Eigen::VectorXd w(coalitions.size());
  for (std::size_t c = 0; c < coalitions.size(); ++c) {
    const double zm = coalitions[c].z[p] ? 1.0 : 0.0;
    for (int i = 0; i < p; ++i) a(c, i) = (coalitions[c].z[i] ? 1.0 : 0.0) - zm;
    y(c) = vz[c] - e.base - zm * delta;
    w(c) = coalitions[c].weight;
  }
  Eigen::MatrixXd awa = a.transpose() * w.asDiagonal() * a;
  Eigen::VectorXd awy = a.transpose() * w.asDiagonal() * y;

  Eigen::LDLT<Eigen::MatrixXd> ldlt(awa);
  Eigen::VectorXd beta = ldlt.solve(awy);
  if (ldlt.info() != Eigen::Success || !beta.allFinite() || ldlt.rcond() < 1e-10) {
    std::cerr << "kernel_shap: singular coalition design, applying ridge regularization\n";
    const double ridge = 1e-6 * std::max(1.0, awa.trace() / p);
    beta = Eigen::VectorXd(
        (awa + ridge * Eigen::MatrixXd::Identity(p, p)).ldlt().solve(awy));
  }

  if (cfg.l1_penalty && *cfg.l1_penalty > 0.0) {
    // coordinate-descent lasso pre-pass for feature selection, then an
    // unpenalized refit on the surviving support
    const double lambda = *cfg.l1_penalty;
    Eigen::VectorXd b = beta;
    for (int sweep = 0; sweep < 200; ++sweep) {
      double moved = 0.0;
      for (int i = 0; i < p; ++i) {
        const double denom = awa(i, i);
        if (denom <= 0.0) continue;
        const double rho = awy(i) - awa.row(i).dot(b) + awa(i, i) * b(i);
        const double old = b(i);
        const double soft = std::abs(rho) <= lambda ? 0.0
                            : (rho > 0 ? (rho - lambda) / denom : (rho + lambda) / denom);
        b(i) = soft;
        moved = std::max(moved, std::abs(b(i) - old));
      }
      if (moved < 1e-10) break;
    }
    std::vector<int> support;
    for (int i = 0; i < p; ++i)
      if (std::abs(b(i)) > 1e-12) support.push_back(i);
    beta.setZero();
    if (!support.empty()) {
      Eigen::MatrixXd awa_s(support.size(), support.size());
      Eigen::VectorXd awy_s(support.size());
      for (std::size_t i = 0; i < support.size(); ++i) {
        awy_s(i) = awy(support[i]);
        for (std::size_t j = 0; j < support.size(); ++j)
          awa_s(i, j) = awa(support[i], support[j]);
      }
      Eigen::VectorXd beta_s = awa_s.ldlt().solve(awy_s);
      for (std::size_t i = 0; i < support.size(); ++i) beta(support[i]) = beta_s(i);
    }
  }

  double sum = 0.0;
  for (int i = 0; i < p; ++i) sum += e.values[i] = beta(i);
  e.values[p] = delta - sum;
  return e;
}

// --------------------------------------------------------------------------
// Convergence reports (estimation error and spread vs budget)

enum class EstimatorKind { kSampling, kKernel, kTreeShap };

inline const char* estimator_name(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::kSampling: return "sampling";
    case EstimatorKind::kKernel: return "kernel";
    case EstimatorKind::kTreeShap: return "treeshap";
  }
  return "unknown";
}

struct ConvergenceCell {
  std::string estimator;
  std::uint64_t budget = 0;
  std::vector<double> mean_phi;  // per feature over repetitions
  std::vector<double> std_phi;
  double mean_abs_error = 0.0;  // vs the exact independent-reference solution
  double max_abs_error = 0.0;
  double mean_std = 0.0;
  double max_std = 0.0;
  double normalized_std = 0.0;  // mean over features of std/|mean|
  std::uint64_t model_evals = 0;
  double wall_seconds = 0.0;
};

struct ConvergenceReport {
  std::vector<double> truth;
  std::vector<ConvergenceCell> cells;
};

/// Runs the estimator at every budget `repetitions` times and reports the
/// deviation from the exact independent-reference solution plus the spread
/// across repetitions.
inline ConvergenceReport convergence_report(EstimatorKind kind, const TreeEnsemble& ens,
                                            std::span<const double> x,
                                            const BackgroundSet& bg,
                                            std::span<const std::uint64_t> budgets,
                                            int repetitions, std::uint64_t seed) {
  if (repetitions < 2)
    throw validation_error("convergence_report: repetitions must be >= 2 for a std");
  for (std::size_t i = 1; i < budgets.size(); ++i)
    if (budgets[i] <= budgets[i - 1])
      throw validation_error("convergence_report: budgets must be ascending");

  ConvergenceReport report;
  report.truth = independent_tree_shap(ens, x, bg).values;
  const int m = ens.num_features;

  for (std::size_t bi = 0; bi < budgets.size(); ++bi) {
    ConvergenceCell cell;
    cell.estimator = estimator_name(kind);
    cell.budget = budgets[bi];

    std::uint64_t evals = 0;
    const ModelFn counted = [&](std::span<const double> row) {
      ++evals;
      return predict_margin(ens, row);
    };

    std::vector<RunningStat> per_feature(m);
    double err_sum = 0.0, err_max = 0.0;
    std::size_t err_n = 0;
    const auto t0 = std::chrono::steady_clock::now();
    for (int rep = 0; rep < repetitions; ++rep) {
      EstimatorConfig cfg;
      cfg.n_evaluations = budgets[bi];
      cfg.seed = seed + 1000003ull * rep + 7919ull * bi;
      Explanation est;
      switch (kind) {
        case EstimatorKind::kSampling: est = sampling_shap(counted, x, bg, cfg); break;
        case EstimatorKind::kKernel: est = kernel_shap(counted, x, bg, cfg); break;
        case EstimatorKind::kTreeShap: est = tree_shap(ens, x); break;
      }
      for (int i = 0; i < m; ++i) {
        per_feature[i].push(est.values[i]);
        const double err = std::abs(est.values[i] - report.truth[i]);
        err_sum += err;
        err_max = std::max(err_max, err);
        ++err_n;
      }
    }
    cell.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    cell.model_evals = evals;
    cell.mean_abs_error = err_sum / static_cast<double>(err_n);
    cell.max_abs_error = err_max;
    cell.mean_phi.resize(m);
    cell.std_phi.resize(m);
    double norm_sum = 0.0;
    int norm_n = 0;
    for (int i = 0; i < m; ++i) {
      cell.mean_phi[i] = per_feature[i].mean;
      cell.std_phi[i] = per_feature[i].stddev();
      cell.mean_std += cell.std_phi[i] / m;
      cell.max_std = std::max(cell.max_std, cell.std_phi[i]);
      if (std::abs(cell.mean_phi[i]) > 1e-12) {
        norm_sum += cell.std_phi[i] / std::abs(cell.mean_phi[i]);
        ++norm_n;
      }
    }
    cell.normalized_std = norm_n > 0 ? norm_sum / norm_n : 0.0;
    report.cells.push_back(std::move(cell));
  }
  return report;
}

}  // namespace arbor
