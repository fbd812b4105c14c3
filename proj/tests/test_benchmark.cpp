#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "arbor/benchmark.hpp"
#include "fixtures.hpp"

using namespace arbor;
using Catch::Approx;

namespace {

Dataset uniform_dataset(int n, int m, std::uint64_t seed, bool labels_binary = false,
                        const TreeEnsemble* label_model = nullptr) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Dataset ds;
  ds.num_rows = n;
  ds.num_cols = m;
  for (int j = 0; j < m; ++j) ds.column_names.push_back("f" + std::to_string(j));
  ds.cells.resize(std::size_t(n) * m);
  for (double& c : ds.cells) c = unit(rng);
  if (label_model) {
    for (int i = 0; i < n; ++i) {
      const double margin = predict_margin(*label_model, ds.row(i));
      ds.labels.push_back(labels_binary ? (margin > 0 ? 1.0 : 0.0) : margin);
    }
  }
  return ds;
}

}  // namespace

TEST_CASE("maskers hide features the three spec'd ways", "[benchmark]") {
  Dataset train = uniform_dataset(400, 3, 1);
  const TrainStats stats = TrainStats::compute(train);
  std::mt19937_64 rng(2);
  const std::vector<double> x{0.9, 0.1, 0.5};

  SECTION("empty hidden set returns x unchanged") {
    const auto rows = mask_row(x, {}, Masker::kMean, stats, rng);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0] == x);
  }
  SECTION("mean masker with everything hidden returns the column means") {
    const auto rows = mask_row(x, FeatureSubset::of({0, 1, 2}), Masker::kMean, stats, rng);
    REQUIRE(rows.size() == 1);
    for (int j = 0; j < 3; ++j) CHECK(rows[0][j] == Approx(stats.means[j]));
  }
  SECTION("resample returns 100 rows drawing hidden cells from training rows") {
    const auto rows = mask_row(x, FeatureSubset::of({1}), Masker::kResample, stats, rng);
    REQUIRE(rows.size() == 100);
    for (const auto& row : rows) {
      CHECK(row[0] == x[0]);
      CHECK(row[2] == x[2]);
    }
  }
  SECTION("impute under diagonal covariance reduces to mean masking") {
    TrainStats diag = stats;
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(3, 3);
    for (int j = 0; j < 3; ++j) c(j, j) = stats.covariance(j, j);
    diag.covariance = c;
    const auto imputed = mask_row(x, FeatureSubset::of({0, 2}), Masker::kImpute, diag, rng);
    const auto meaned = mask_row(x, FeatureSubset::of({0, 2}), Masker::kMean, stats, rng);
    for (int j = 0; j < 3; ++j)
      CHECK(imputed[0][j] == Approx(meaned[0][j]).margin(1e-10));
  }
  SECTION("impute follows the conditional-normal estimate") {
    // strongly correlated pair: imputing f1 from f0 must move with x0
    std::mt19937_64 gen(3);
    std::normal_distribution<double> noise(0.0, 0.05);
    Dataset corr;
    corr.num_rows = 500;
    corr.num_cols = 2;
    corr.column_names = {"a", "b"};
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int i = 0; i < 500; ++i) {
      const double a = unit(gen);
      corr.cells.push_back(a);
      corr.cells.push_back(a + noise(gen));
    }
    const TrainStats cstats = TrainStats::compute(corr);
    const std::vector<double> probe{0.9, 0.0};
    const auto rows = mask_row(probe, FeatureSubset::of({1}), Masker::kImpute, cstats, rng);
    CHECK(rows[0][1] == Approx(0.9).margin(0.05));
  }
}

TEST_CASE("exactly 21 metrics enumerate", "[benchmark]") {
  const std::vector<MetricSpec> all = MetricSpec::all_metrics();
  CHECK(all.size() == 21);
  int ordering = 0;
  for (const MetricSpec& spec : all)
    if (spec.family == MetricSpec::Family::kOrdering) ++ordering;
  CHECK(ordering == 18);
  // ids are unique
  std::vector<std::string> ids;
  for (const MetricSpec& spec : all) ids.push_back(spec.id());
  std::sort(ids.begin(), ids.end());
  CHECK(std::adjacent_find(ids.begin(), ids.end()) == ids.end());
  CHECK(std::find(ids.begin(), ids.end(), "keep_positive_mask") != ids.end());
  CHECK(std::find(ids.begin(), ids.end(), "remove_absolute_impute") != ids.end());
}

TEST_CASE("keep-positive curves rise for exact attributions on additive models",
          "[benchmark]") {
  const TreeEnsemble ens = fixtures::additive_stumps(
      {0.5, 0.5, 0.5, 0.5}, {-2.0, -1.0, 0.0, 1.0}, {-1.0, 2.0, 3.0, 2.0});
  Dataset train = uniform_dataset(300, 4, 5);
  Dataset eval = uniform_dataset(100, 4, 6);
  const TrainStats stats = TrainStats::compute(train);

  const BenchExplainer exact{"treeshap", Method::kTreeShap,
                             [&ens](std::span<const double> x) { return tree_shap(ens, x); }};
  MetricSpec spec;
  spec.mode = MetricSpec::Mode::kKeep;
  spec.direction = MetricSpec::Direction::kPositive;
  spec.masker = Masker::kMean;
  const MetricResult keep = ordering_metric(spec, ens, exact, eval, stats, 3);
  REQUIRE(keep.curve.size() == 11);
  for (std::size_t i = 0; i + 1 < keep.curve.size(); ++i)
    CHECK(keep.curve[i + 1].second >= keep.curve[i].second - 1e-9);

  // a random explainer should produce a much flatter curve
  const BenchExplainer random{"noise", Method::kSampling, [](std::span<const double> x) {
                                std::mt19937_64 rng(std::hash<double>()(x[0]));
                                std::normal_distribution<double> g(0.0, 1.0);
                                Explanation e;
                                e.values.resize(x.size());
                                for (double& v : e.values) v = g(rng);
                                return e;
                              }};
  const MetricResult rand = ordering_metric(spec, ens, random, eval, stats, 3);
  const auto range = [](const MetricResult& r) {
    double lo = 1e300, hi = -1e300;
    for (auto [q, v] : r.curve) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    return hi - lo;
  };
  CHECK(range(rand) < 0.6 * range(keep));

  // removing the positives mirrors keeping them: the output falls
  spec.mode = MetricSpec::Mode::kRemove;
  const MetricResult remove = ordering_metric(spec, ens, exact, eval, stats, 3);
  CHECK(remove.curve.front().second > remove.curve.back().second);
  for (std::size_t i = 0; i + 1 < remove.curve.size(); ++i)
    CHECK(remove.curve[i + 1].second <= remove.curve[i].second + 1e-9);
}

TEST_CASE("the local accuracy ladder maps sigma to scores", "[benchmark]") {
  CHECK(local_accuracy_ladder(0.0) == 1.00);
  CHECK(local_accuracy_ladder(5e-7) == 1.00);
  CHECK(local_accuracy_ladder(0.005) == 0.90);
  CHECK(local_accuracy_ladder(0.04) == 0.75);
  CHECK(local_accuracy_ladder(0.07) == 0.60);
  CHECK(local_accuracy_ladder(0.15) == 0.40);
  CHECK(local_accuracy_ladder(0.25) == 0.30);
  CHECK(local_accuracy_ladder(0.40) == 0.20);
  CHECK(local_accuracy_ladder(0.65) == 0.10);
  CHECK(local_accuracy_ladder(0.90) == 0.00);
}

TEST_CASE("local accuracy scores measured explainers", "[benchmark]") {
  RandomModelSpec mspec;
  mspec.trees = 10;
  mspec.features = 5;
  mspec.max_depth = 3;
  mspec.seed = 17;
  const TreeEnsemble ens = generate_random_ensemble(mspec);
  Dataset eval = uniform_dataset(100, 5, 21);

  const BenchExplainer exact{"treeshap", Method::kTreeShap,
                             [&ens](std::span<const double> x) { return tree_shap(ens, x); }};
  const LocalAccuracyResult perfect = local_accuracy_score(exact, ens, eval);
  CHECK(perfect.sigma < 1e-6);
  CHECK(perfect.score == 1.00);

  // perturb phi_0 by c*f(x) so sigma lands exactly on a ladder rung
  auto perturbed = [&](double c) {
    return BenchExplainer{"biased", Method::kSampling,
                          [&ens, c](std::span<const double> x) {
                            Explanation e = tree_shap(ens, x);
                            e.values[0] += c * predict_margin(ens, x);
                            return e;
                          }};
  };
  CHECK(local_accuracy_score(perturbed(0.04), ens, eval).score == 0.75);
  CHECK(local_accuracy_score(perturbed(0.65), ens, eval).score == 0.10);
}

TEST_CASE("zero-output models score perfect when residuals vanish", "[benchmark]") {
  const TreeEnsemble zero = fixtures::additive_stumps({0.5}, {0.0}, {0.0});
  Dataset eval = uniform_dataset(100, 1, 31);
  const BenchExplainer exact{"treeshap", Method::kTreeShap,
                             [&zero](std::span<const double> x) { return tree_shap(zero, x); }};
  CHECK(local_accuracy_score(exact, zero, eval).score == 1.00);

  const BenchExplainer broken{"broken", Method::kSampling, [](std::span<const double> x) {
                                Explanation e;
                                e.values.assign(x.size(), 1.0);
                                return e;
                              }};
  CHECK_THROWS_AS(local_accuracy_score(broken, zero, eval), validation_error);
}

TEST_CASE("runtime metric scales 100 predictions and bounds a stump", "[benchmark]") {
  const TreeEnsemble stump = fixtures::additive_stumps({0.5}, {0.0}, {1.0});
  Dataset eval = uniform_dataset(120, 1, 41);
  const RuntimeResult rt = runtime_metric(
      [&stump] {
        return BenchExplainer{"treeshap", Method::kTreeShap,
                              [&stump](std::span<const double> x) {
                                return tree_shap(stump, x);
                              }};
      },
      eval);
  CHECK(rt.per_thousand < 1e-3);  // sub-millisecond per 1,000 on a stump
  CHECK(rt.seconds >= rt.init_seconds);

  Dataset tiny = uniform_dataset(10, 1, 41);
  CHECK_THROWS_AS(runtime_metric(
                      [&stump] {
                        return BenchExplainer{"t", Method::kTreeShap,
                                              [&stump](std::span<const double> x) {
                                                return tree_shap(stump, x);
                                              }};
                      },
                      tiny),
                  validation_error);
}

TEST_CASE("runtime is stable across repeated measurements", "[benchmark]") {
  RandomModelSpec mspec;
  mspec.trees = 60;
  mspec.features = 8;
  mspec.max_depth = 5;
  mspec.seed = 3;
  const TreeEnsemble ens = generate_random_ensemble(mspec);
  Dataset eval = uniform_dataset(100, 8, 51);
  auto factory = [&ens] {
    return BenchExplainer{"treeshap", Method::kTreeShap,
                          [&ens](std::span<const double> x) { return tree_shap(ens, x); }};
  };
  // best-of-3 on both sides to shed scheduler noise
  double a = 1e300, b = 1e300;
  for (int i = 0; i < 3; ++i) a = std::min(a, runtime_metric(factory, eval).per_thousand);
  for (int i = 0; i < 3; ++i) b = std::min(b, runtime_metric(factory, eval).per_thousand);
  CHECK(std::max(a, b) / std::min(a, b) < 2.0);
}

TEST_CASE("consistency ratings follow the static table", "[benchmark]") {
  CHECK(consistency_rating(Method::kTreeShap) == ConsistencyGuarantee::kExact);
  CHECK(consistency_rating(Method::kIndep) == ConsistencyGuarantee::kExact);
  CHECK(consistency_rating(Method::kBrute) == ConsistencyGuarantee::kExact);
  CHECK(consistency_rating(Method::kSampling) == ConsistencyGuarantee::kSamplingLimit);
  CHECK(consistency_rating(Method::kKernel) == ConsistencyGuarantee::kSamplingLimit);
  CHECK(consistency_rating(Method::kSaabas) == ConsistencyGuarantee::kNone);
  CHECK(consistency_rating(Method::kGain) == ConsistencyGuarantee::kNone);
  CHECK(consistency_rating(Method::kPermutation) == ConsistencyGuarantee::kNone);
  CHECK(consistency_rating("treeshap") == ConsistencyGuarantee::kExact);
  CHECK_THROWS_AS(consistency_rating("astrology"), validation_error);
}

TEST_CASE("user study consensus values match the derived allocations", "[benchmark]") {
  const std::vector<UserStudyScenario> scenarios = user_study_scenarios();
  REQUIRE(scenarios.size() == 12);
  auto find = [&](const std::string& name) {
    for (const auto& s : scenarios)
      if (s.name == name) return s;
    FAIL("missing scenario " + name);
    return scenarios[0];
  };
  const auto and_tt = find("and_TT");
  CHECK(and_tt.consensus[0] == Approx(5.0));
  CHECK(and_tt.consensus[1] == Approx(5.0));
  CHECK(and_tt.consensus[2] == Approx(0.0));
  const auto xor_tt = find("xor_TT");
  CHECK(xor_tt.consensus[0] == Approx(2.0));
  CHECK(xor_tt.consensus[1] == Approx(2.0));
  const auto sum_ft = find("sum_FT");
  CHECK(sum_ft.consensus[0] == Approx(0.0));
  CHECK(sum_ft.consensus[1] == Approx(2.0));
  const auto or_tt = find("or_TT");
  CHECK(or_tt.consensus[0] == Approx(5.0));
  CHECK(or_tt.consensus[1] == Approx(5.0));
  const auto and_ff = find("and_FF");
  for (double v : and_ff.consensus) CHECK(v == Approx(0.0));
}

TEST_CASE("Shapley methods agree with consensus, saabas fails nonlinear cases",
          "[benchmark]") {
  const UserStudyResult r = user_study_suite(0);
  REQUIRE(r.scenarios.size() == 12);
  REQUIRE(r.explainers.size() == 5);
  const std::size_t saabas_col = 4;
  double saabas_worst = 0.0;
  for (std::size_t s = 0; s < 12; ++s) {
    for (std::size_t e = 0; e < 4; ++e)  // every Shapley-based method
      CHECK(r.disagreement[s][e] <= 1e-8);
    saabas_worst = std::max(saabas_worst, r.disagreement[s][saabas_col]);
  }
  CHECK(saabas_worst > 0.1);
  // saabas agrees on the purely additive model
  for (std::size_t s = 0; s < 12; ++s)
    if (r.scenarios[s].rfind("sum_", 0) == 0)
      CHECK(r.disagreement[s][saabas_col] <= 1e-8);
}

TEST_CASE("feature selection recovers a single additive driver everywhere",
          "[benchmark]") {
  FeatureSelectionConfig cfg;
  cfg.n_features = 30;
  cfg.n_true = 1;
  cfg.trees = 1;
  cfg.depth = 2;
  cfg.n_datasets = 4;
  cfg.samples_per_dataset = 200;
  cfg.noise = 0.1;
  cfg.permutation_repeats = 4;
  cfg.seed = 5;
  const FeatureSelectionResult r = feature_selection_power(cfg, 2);
  for (int m = 0; m < 4; ++m) {
    CHECK(r.mean_recovery[m] == Approx(1.0));
    for (double v : r.recovery[m]) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
}
