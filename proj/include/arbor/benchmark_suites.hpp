#pragma once

#include <algorithm>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "arbor/benchmark.hpp"

// The assembled suites: the full metric tile over a roster of explainers,
// the user-study scenario fixtures and the feature-selection power
// experiment.

namespace arbor {

// --------------------------------------------------------------------------
// Explainer roster

struct RosterConfig {
  std::uint64_t seed = 0;
  std::uint64_t sampling_budget = 4096;
  std::uint64_t kernel_budget = 1024;
  int background_size = 30;  // references for the independent explainer
  int oracle_cap = kDefaultOracleCap;
  bool include_brute = false;
  bool include_global = true;  // gain + permutation stand-ins
};

/// The tree-applicable explainer roster plus the two global baselines used
/// as local stand-ins. The factories let the runtime metric time
/// initialization separately.
inline std::vector<std::function<BenchExplainer()>> standard_explainer_factories(
    const TreeEnsemble& ens, const Dataset& train, const RosterConfig& cfg) {
  std::vector<std::function<BenchExplainer()>> out;

  out.push_back([&ens] {
    return BenchExplainer{"treeshap", Method::kTreeShap,
                          [&ens](std::span<const double> x) { return tree_shap(ens, x); }};
  });
  out.push_back([&ens] {
    return BenchExplainer{"saabas", Method::kSaabas,
                          [&ens](std::span<const double> x) { return saabas(ens, x); }};
  });
  out.push_back([&ens, &train, cfg] {
    // background: a seeded subsample of the training rows
    BackgroundSet bg;
    bg.num_cols = train.num_cols;
    std::mt19937_64 rng(cfg.seed + 17);
    std::vector<std::size_t> idx(train.num_rows);
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    const std::size_t take =
        std::min<std::size_t>(cfg.background_size, train.num_rows);
    for (std::size_t r = 0; r < take; ++r) {
      const auto row = train.row(idx[r]);
      bg.cells.insert(bg.cells.end(), row.begin(), row.end());
    }
    bg.num_rows = take;
    return BenchExplainer{"indep", Method::kIndep,
                          [&ens, bg](std::span<const double> x) {
                            return independent_tree_shap(ens, x, bg);
                          }};
  });
  out.push_back([&ens, &train, cfg] {
    BackgroundSet bg;
    bg.num_cols = train.num_cols;
    bg.num_rows = 1;
    bg.cells = TrainStats::compute(train).means;  // single mean-row reference
    EstimatorConfig est;
    est.n_evaluations = cfg.sampling_budget;
    est.seed = cfg.seed + 101;
    const ModelFn fn = model_callback(ens);
    return BenchExplainer{"sampling", Method::kSampling,
                          [fn, bg, est](std::span<const double> x) {
                            return sampling_shap(fn, x, bg, est);
                          }};
  });
  out.push_back([&ens, &train, cfg] {
    BackgroundSet bg;
    bg.num_cols = train.num_cols;
    bg.num_rows = 1;
    bg.cells = TrainStats::compute(train).means;
    EstimatorConfig est;
    est.n_evaluations = cfg.kernel_budget;
    est.seed = cfg.seed + 211;
    const ModelFn fn = model_callback(ens);
    return BenchExplainer{"kernel", Method::kKernel,
                          [fn, bg, est](std::span<const double> x) {
                            return kernel_shap(fn, x, bg, est);
                          }};
  });
  if (cfg.include_brute) {
    const int cap = cfg.oracle_cap;
    out.push_back([&ens, cap] {
      return BenchExplainer{"brute", Method::kBrute,
                            [&ens, cap](std::span<const double> x) {
                              return shapley_exact(ens, x, cap);
                            }};
    });
  }
  if (cfg.include_global) {
    out.push_back([&ens] {
      // a global importance vector standing in as the same local
      // explanation for every sample
      const std::vector<double> g = gain_importance(ens);
      return BenchExplainer{"gain", Method::kGain,
                            [g](std::span<const double>) {
                              Explanation e;
                              e.method = Method::kGain;
                              e.values = g;
                              return e;
                            }};
    });
    out.push_back([&ens, &train, cfg] {
      const bool binary = detail::labels_are_binary(train.labels);
      const std::vector<double> p = permutation_importance(
          ens, train, binary ? PerfMetric::kRocAuc : PerfMetric::kR2, cfg.seed + 307);
      return BenchExplainer{"permutation", Method::kPermutation,
                            [p](std::span<const double>) {
                              Explanation e;
                              e.method = Method::kPermutation;
                              e.values = p;
                              return e;
                            }};
    });
  }
  return out;
}

// --------------------------------------------------------------------------
// Full suite

struct BenchSuiteResult {
  std::vector<std::string> explainers;
  std::vector<MetricResult> results;  // one per (explainer, metric)
};

/// Runs all 21 metrics for every explainer over one model. Randomness is
/// seeded per (explainer, metric) cell so results do not depend on the
/// thread count.
inline BenchSuiteResult run_benchmark_suite(const TreeEnsemble& model, const Dataset& train,
                                            const Dataset& eval_set, const RosterConfig& cfg,
                                            const std::string& model_name = "model",
                                            int threads = 1) {
  const TrainStats stats = TrainStats::compute(train);
  const std::vector<MetricSpec> metrics = MetricSpec::all_metrics();
  const auto factories = standard_explainer_factories(model, train, cfg);

  BenchSuiteResult suite;
  std::vector<MetricResult> all;
  for (std::size_t ei = 0; ei < factories.size(); ++ei) {
    // runtime first: it times initialization plus 100 fresh explanations
    const RuntimeResult rt = runtime_metric(factories[ei], eval_set);
    const BenchExplainer explainer = factories[ei]();
    suite.explainers.push_back(explainer.name);

    const ExplanationMatrix attributions =
        explain_rows(eval_set, explainer.explain, explainer.method, threads);

    // metric cells are independent jobs over the shared attribution matrix;
    // each is seeded on its own so the thread count cannot change results
    std::vector<MetricResult> cells(metrics.size());
    parallel_for(metrics.size(), threads, [&](std::size_t mi) {
      const MetricSpec& spec = metrics[mi];
      MetricResult r;
      switch (spec.family) {
        case MetricSpec::Family::kRuntime:
          r.metric = spec.id();
          r.score = rt.seconds;
          break;
        case MetricSpec::Family::kLocalAccuracy:
          r.metric = spec.id();
          r.score = local_accuracy_from(attributions, model, eval_set).score;
          break;
        case MetricSpec::Family::kConsistency:
          r.metric = spec.id();
          r.score = consistency_score(consistency_rating(explainer.method));
          break;
        case MetricSpec::Family::kOrdering:
          r = ordering_metric_with(spec, model, explainer.name, attributions, eval_set,
                                   stats, cfg.seed + 7919ull * (ei * 100 + mi));
          break;
      }
      r.explainer = explainer.name;
      r.model = model_name;
      cells[mi] = std::move(r);
    });
    for (MetricResult& r : cells) all.push_back(std::move(r));
  }
  suite.results = std::move(all);
  return suite;
}

/// Mean score per (explainer, metric) across several suite runs (models
/// retrained on fresh splits); curves are not carried over.
inline BenchSuiteResult average_suites(const std::vector<BenchSuiteResult>& runs) {
  if (runs.empty()) throw validation_error("average_suites: no runs");
  BenchSuiteResult out;
  out.explainers = runs.front().explainers;
  out.results = runs.front().results;
  for (MetricResult& r : out.results) r.curve.clear();
  for (std::size_t k = 1; k < runs.size(); ++k) {
    if (runs[k].results.size() != out.results.size())
      throw validation_error("average_suites: mismatched runs");
    for (std::size_t i = 0; i < out.results.size(); ++i)
      out.results[i].score += runs[k].results[i].score;
  }
  for (MetricResult& r : out.results) r.score /= static_cast<double>(runs.size());
  return out;
}

struct TileCell {
  std::string explainer;
  std::string metric;
  double score = 0.0;
  double normalized = 0.0;  // min-max within the metric column, 1 = best
};

/// Min-max normalizes every metric column across explainers with the
/// metric's better-direction on top, ready for heatmap tiles.
inline std::vector<TileCell> normalize_tiles(const BenchSuiteResult& suite) {
  std::map<std::string, bool> orientation;
  for (const MetricSpec& spec : MetricSpec::all_metrics())
    orientation[spec.id()] = spec.higher_is_better();

  std::vector<TileCell> tiles;
  std::map<std::string, std::pair<double, double>> range;
  for (const MetricResult& r : suite.results) {
    auto it = range.find(r.metric);
    if (it == range.end())
      range[r.metric] = {r.score, r.score};
    else {
      it->second.first = std::min(it->second.first, r.score);
      it->second.second = std::max(it->second.second, r.score);
    }
  }
  for (const MetricResult& r : suite.results) {
    const auto [lo, hi] = range[r.metric];
    double norm = hi > lo ? (r.score - lo) / (hi - lo) : 1.0;
    if (!orientation[r.metric]) norm = hi > lo ? 1.0 - norm : 1.0;
    tiles.push_back({r.explainer, r.metric, r.score, norm});
  }
  return tiles;
}

/// Mean normalized score per explainer, descending: the aggregate ranking.
inline std::vector<std::pair<std::string, double>> aggregate_ranking(
    const std::vector<TileCell>& tiles) {
  std::map<std::string, std::pair<double, int>> acc;
  for (const TileCell& t : tiles) {
    acc[t.explainer].first += t.normalized;
    acc[t.explainer].second += 1;
  }
  std::vector<std::pair<std::string, double>> out;
  for (const auto& [name, sums] : acc) out.emplace_back(name, sums.first / sums.second);
  std::sort(out.begin(), out.end(),
            [](const auto& a, const auto& b) { return a.second > b.second; });
  return out;
}

// --------------------------------------------------------------------------
// User-study scenario fixtures

enum class ScenarioModel { kAnd, kOr, kXor, kSum };

inline const char* scenario_model_name(ScenarioModel m) {
  switch (m) {
    case ScenarioModel::kAnd: return "and";
    case ScenarioModel::kOr: return "or";
    case ScenarioModel::kXor: return "xor";
    case ScenarioModel::kSum: return "sum";
  }
  return "unknown";
}

/// The sickness-score fixtures: a depth-two tree over two binary features
/// (fever, cough) with a +2 linear effect each and a +6 nonlinear effect per
/// model kind; headache is a third feature no model uses.
inline TreeEnsemble user_study_model(ScenarioModel kind) {
  auto score = [&](int fever, int cough) {
    double v = 2.0 * fever + 2.0 * cough;
    switch (kind) {
      case ScenarioModel::kAnd: v += (fever && cough) ? 6.0 : 0.0; break;
      case ScenarioModel::kOr: v += (fever || cough) ? 6.0 : 0.0; break;
      case ScenarioModel::kXor: v += (fever != cough) ? 6.0 : 0.0; break;
      case ScenarioModel::kSum: break;
    }
    return v;
  };
  Tree t;
  t.children_left = {1, 3, 5, kLeaf, kLeaf, kLeaf, kLeaf};
  t.children_right = {2, 4, 6, kLeaf, kLeaf, kLeaf, kLeaf};
  t.children_default = {1, 3, 5, kLeaf, kLeaf, kLeaf, kLeaf};
  t.split_feature = {0, 1, 1, 0, 0, 0, 0};
  t.threshold = {0.5, 0.5, 0.5, 0, 0, 0, 0};
  t.value = {0, 0, 0, score(0, 0), score(0, 1), score(1, 0), score(1, 1)};
  t.cover = {4, 2, 2, 1, 1, 1, 1};
  TreeEnsemble ens;
  ens.num_features = 3;
  ens.feature_names = {"fever", "cough", "headache"};
  ens.trees.push_back(std::move(t));
  validate_ensemble(ens);
  return ens;
}

struct UserStudyScenario {
  ScenarioModel model = ScenarioModel::kAnd;
  std::string name;                // e.g. "and_TT"
  std::vector<double> sample;      // (fever, cough, headache)
  std::vector<double> consensus;   // exact Shapley vs the healthy background
};

inline std::vector<double> user_study_background() { return {0.0, 0.0, 0.0}; }

/// The 12 scenarios (4 models x 3 samples, headache always true) with the
/// consensus allocation taken as the exact Shapley values against the
/// all-false healthy reference.
inline std::vector<UserStudyScenario> user_study_scenarios() {
  const std::vector<double> healthy = user_study_background();
  std::vector<UserStudyScenario> out;
  for (ScenarioModel kind : {ScenarioModel::kAnd, ScenarioModel::kOr, ScenarioModel::kXor,
                             ScenarioModel::kSum}) {
    const TreeEnsemble model = user_study_model(kind);
    const std::vector<std::pair<std::string, std::vector<double>>> samples = {
        {"FF", {0.0, 0.0, 1.0}}, {"FT", {0.0, 1.0, 1.0}}, {"TT", {1.0, 1.0, 1.0}}};
    for (const auto& [tag, x] : samples) {
      UserStudyScenario s;
      s.model = kind;
      s.name = std::string(scenario_model_name(kind)) + "_" + tag;
      s.sample = x;
      s.consensus = shapley_exact_single_ref(model, x, healthy).values;
      out.push_back(std::move(s));
    }
  }
  return out;
}

struct UserStudyResult {
  std::vector<std::string> explainers;
  std::vector<std::string> scenarios;
  std::vector<std::vector<double>> disagreement;  // [scenario][explainer] sum |phi - consensus|
};

/// Every explainer scores each scenario by the sum of absolute differences
/// from the consensus. All explainers take their conditional expectations
/// against the healthy all-false reference.
inline UserStudyResult user_study_suite(std::uint64_t seed = 0) {
  UserStudyResult out;
  out.explainers = {"treeshap_indep", "brute", "sampling", "kernel", "saabas"};
  const std::vector<double> healthy = user_study_background();
  const BackgroundSet bg = BackgroundSet::from_row(healthy);

  for (const UserStudyScenario& scenario : user_study_scenarios()) {
    const TreeEnsemble model = user_study_model(scenario.model);
    const ModelFn fn = model_callback(model);
    EstimatorConfig est;
    est.n_evaluations = 4096;
    est.seed = seed;

    std::vector<Explanation> explanations;
    explanations.push_back(independent_tree_shap(model, scenario.sample, bg));
    explanations.push_back(shapley_exact_single_ref(model, scenario.sample, healthy));
    explanations.push_back(sampling_shap(fn, scenario.sample, bg, est));
    explanations.push_back(kernel_shap(fn, scenario.sample, bg, est));
    explanations.push_back(saabas_single_ref(model, scenario.sample, healthy));

    std::vector<double> row;
    for (const Explanation& e : explanations) {
      double d = 0.0;
      for (std::size_t i = 0; i < e.values.size(); ++i)
        d += std::abs(e.values[i] - scenario.consensus[i]);
      row.push_back(d);
    }
    out.scenarios.push_back(scenario.name);
    out.disagreement.push_back(std::move(row));
  }
  return out;
}

// --------------------------------------------------------------------------
// Feature-selection power

struct FeatureSelectionConfig {
  int n_features = 200;
  int n_true = 18;  // grouped in threes into 3rd-order interactions
  enum class Interaction { kProduct, kMin };
  Interaction interaction = Interaction::kMin;
  int trees = 10;
  int n_datasets = 100;
  std::uint64_t seed = 0;
  int samples_per_dataset = 150;
  int eval_samples = 0;  // held-out rows for the rankings; 0 = rank on the training rows
  int depth = 5;
  double learning_rate = 0.5;
  double noise = 0.3;
  int background_size = 20;
  int permutation_repeats = 10;
};

struct FeatureSelectionResult {
  std::vector<std::string> methods;            // shap, shap_loss, gain, permutation
  std::vector<std::vector<double>> recovery;   // [method][dataset]
  std::vector<double> mean_recovery;           // per method
  double p_shap_vs_gain = 1.0;
  double p_shap_vs_perm = 1.0;
  double p_loss_vs_gain = 1.0;
  double p_loss_vs_perm = 1.0;
};

namespace detail {

inline double top_n_recovery(const std::vector<double>& importance,
                             const std::vector<char>& is_true, int n_true) {
  std::vector<int> order(importance.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return importance[a] > importance[b]; });
  int hits = 0;
  for (int r = 0; r < n_true; ++r) hits += is_true[order[r]] ? 1 : 0;
  return static_cast<double>(hits) / n_true;
}

}  // namespace detail

/// Simulated independent features with labels from 3rd-order interactions of
/// the true features; each ranking method recovers as many true features as
/// it can in the top n_true, averaged over datasets, with paired one-sided
/// t-tests of the SHAP rankings against gain and permutation.
inline FeatureSelectionResult feature_selection_power(const FeatureSelectionConfig& cfg,
                                                      int threads = 1) {
  if (cfg.n_true < 1 || cfg.n_true > cfg.n_features)
    throw validation_error("feature_selection_power: n_true out of range");
  FeatureSelectionResult out;
  out.methods = {"shap", "shap_loss", "gain", "permutation"};
  out.recovery.assign(4, std::vector<double>(cfg.n_datasets, 0.0));

  parallel_for(cfg.n_datasets, threads, [&](std::size_t d) {
    std::mt19937_64 rng(cfg.seed + 0x51ed2701ull * (d + 1));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    std::vector<int> features(cfg.n_features);
    std::iota(features.begin(), features.end(), 0);
    std::shuffle(features.begin(), features.end(), rng);
    std::vector<char> is_true(cfg.n_features, 0);
    for (int j = 0; j < cfg.n_true; ++j) is_true[features[j]] = 1;

    // groups of three true features make one 3rd-order term; any leftover
    // features contribute additively. Terms are standardized so every term
    // carries the same signal strength.
    auto make_data = [&](int rows) {
      Dataset data;
      data.num_rows = rows;
      data.num_cols = cfg.n_features;
      for (int j = 0; j < cfg.n_features; ++j)
        data.column_names.push_back("f" + std::to_string(j));
      data.cells.resize(data.num_rows * data.num_cols);
      for (double& c : data.cells) c = unit(rng);
      std::vector<double> y(data.num_rows, 0.0);
      auto add_term = [&](const std::function<double(std::size_t)>& term) {
        RunningStat st;
        std::vector<double> vals(data.num_rows);
        for (std::size_t i = 0; i < data.num_rows; ++i) st.push(vals[i] = term(i));
        const double sd = st.stddev() > 0 ? st.stddev() : 1.0;
        for (std::size_t i = 0; i < data.num_rows; ++i) y[i] += (vals[i] - st.mean) / sd;
      };
      int j = 0;
      for (; j + 2 < cfg.n_true; j += 3) {
        const int a = features[j], b = features[j + 1], c = features[j + 2];
        if (cfg.interaction == FeatureSelectionConfig::Interaction::kProduct)
          add_term(
              [&](std::size_t i) { return data.at(i, a) * data.at(i, b) * data.at(i, c); });
        else
          add_term([&](std::size_t i) {
            return std::min({data.at(i, a), data.at(i, b), data.at(i, c)});
          });
      }
      for (; j < cfg.n_true; ++j) {
        const int a = features[j];
        add_term([&](std::size_t i) { return data.at(i, a); });
      }
      data.labels = y;
      for (double& v : data.labels) v += cfg.noise * gauss(rng);
      return data;
    };
    const Dataset train = make_data(cfg.samples_per_dataset);
    const Dataset eval = cfg.eval_samples > 0 ? make_data(cfg.eval_samples) : train;

    BoostConfig boost;
    boost.rounds = cfg.trees;
    boost.depth = cfg.depth;
    boost.learning_rate = cfg.trees == 1 ? 1.0 : cfg.learning_rate;
    const TreeEnsemble model = fit_boosted_trees(train, boost);

    // mean |SHAP| ranking over the data the model explains
    std::vector<double> shap_mag(cfg.n_features, 0.0);
    for (std::size_t i = 0; i < eval.num_rows; ++i) {
      const Explanation e = tree_shap(model, eval.row(i));
      for (int f = 0; f < cfg.n_features; ++f) shap_mag[f] += std::abs(e.values[f]);
    }

    // mean SHAP-of-loss ranking on held-out rows (most negative = most
    // helpful; features the trees only overfit stop looking helpful here)
    BackgroundSet bg;
    bg.num_cols = train.num_cols;
    bg.num_rows = std::min<std::size_t>(cfg.background_size, train.num_rows);
    for (std::size_t r = 0; r < bg.num_rows; ++r) {
      const auto row = train.row(r);
      bg.cells.insert(bg.cells.end(), row.begin(), row.end());
    }
    std::vector<double> loss_mean(cfg.n_features, 0.0);
    for (std::size_t i = 0; i < eval.num_rows; ++i) {
      const Explanation e = explain_loss(
          model, eval.row(i), {LossSpec::Kind::kSquaredError, eval.labels[i]}, bg);
      for (int f = 0; f < cfg.n_features; ++f) loss_mean[f] += e.values[f];
    }
    for (double& v : loss_mean) v = -v;  // helpful features reduce the loss

    const std::vector<double> gain = gain_importance(model);
    // permutation importance in its classic held-out form
    const std::vector<double> perm = permutation_importance(
        model, eval, PerfMetric::kR2, cfg.seed + d, cfg.permutation_repeats);

    out.recovery[0][d] = detail::top_n_recovery(shap_mag, is_true, cfg.n_true);
    out.recovery[1][d] = detail::top_n_recovery(loss_mean, is_true, cfg.n_true);
    out.recovery[2][d] = detail::top_n_recovery(gain, is_true, cfg.n_true);
    out.recovery[3][d] = detail::top_n_recovery(perm, is_true, cfg.n_true);
  });

  for (int m = 0; m < 4; ++m) out.mean_recovery.push_back(mean_of(out.recovery[m]));
  if (cfg.n_datasets >= 2) {
    out.p_shap_vs_gain = paired_t_test_p_greater(out.recovery[0], out.recovery[2]);
    out.p_shap_vs_perm = paired_t_test_p_greater(out.recovery[0], out.recovery[3]);
    out.p_loss_vs_gain = paired_t_test_p_greater(out.recovery[1], out.recovery[2]);
    out.p_loss_vs_perm = paired_t_test_p_greater(out.recovery[1], out.recovery[3]);
  }
  return out;
}

}  // namespace arbor
