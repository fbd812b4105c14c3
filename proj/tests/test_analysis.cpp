#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "arbor/analysis.hpp"
#include "arbor/train.hpp"
#include "fixtures.hpp"

using namespace arbor;
using Catch::Approx;

namespace {

Dataset uniform_rows(int n, int m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Dataset ds;
  ds.num_rows = n;
  ds.num_cols = m;
  for (int j = 0; j < m; ++j) ds.column_names.push_back("f" + std::to_string(j));
  ds.cells.resize(std::size_t(n) * m);
  for (double& c : ds.cells) c = unit(rng);
  return ds;
}

Dataset binary_rows(int n, int m, std::uint64_t seed) {
  Dataset ds = uniform_rows(n, m, seed);
  for (double& c : ds.cells) c = c > 0.5 ? 1.0 : 0.0;
  return ds;
}

ExplanationMatrix explain_with_treeshap(const TreeEnsemble& ens, const Dataset& ds) {
  return explain_rows(
      ds, [&](std::span<const double> x) { return tree_shap(ens, x); },
      Method::kTreeShap, 2);
}

}  // namespace

namespace {

// all four binary corners in equal proportion, third feature random
Dataset balanced_corners(int per_corner, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Dataset ds;
  ds.num_cols = 3;
  ds.column_names = {"fever", "cough", "unused"};
  for (int corner = 0; corner < 4; ++corner)
    for (int i = 0; i < per_corner; ++i) {
      ds.cells.push_back(corner & 1);
      ds.cells.push_back((corner >> 1) & 1);
      ds.cells.push_back(unit(rng));
    }
  ds.num_rows = 4 * per_corner;
  return ds;
}

}  // namespace

TEST_CASE("global importance ranks mean magnitudes", "[analysis]") {
  const TreeEnsemble ens = fixtures::model_a();
  TreeEnsemble padded = ens;
  padded.num_features = 3;  // one unused feature
  padded.feature_names = {"fever", "cough", "unused"};
  const Dataset ds = balanced_corners(50, 1);
  const ExplanationMatrix e = explain_with_treeshap(padded, ds);
  const std::vector<ImportanceEntry> imp = global_importance(e);
  REQUIRE(imp.size() == 3);
  CHECK(imp[2].feature == 2);
  CHECK(imp[2].value == Approx(0.0).margin(1e-12));
  // fever and cough play symmetric roles under the balanced sample set
  CHECK(imp[0].value == Approx(imp[1].value).margin(1e-9));

  // importance is invariant to sample permutation
  Dataset shuffled = ds;
  std::mt19937_64 rng(7);
  std::vector<std::size_t> perm(ds.num_rows);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  for (std::size_t i = 0; i < ds.num_rows; ++i)
    for (std::size_t j = 0; j < ds.num_cols; ++j)
      shuffled.at(i, j) = ds.at(perm[i], j);
  const ExplanationMatrix e2 = explain_with_treeshap(padded, shuffled);
  const std::vector<ImportanceEntry> imp2 = global_importance(e2);
  for (int k = 0; k < 3; ++k) {
    CHECK(imp2[k].feature == imp[k].feature);
    CHECK(imp2[k].value == Approx(imp[k].value).margin(1e-9));
  }
}

TEST_CASE("summary dots expose interaction dispersion", "[analysis]") {
  const Dataset ds = binary_rows(300, 2, 3);

  SECTION("additive model: one attribution per feature value") {
    const TreeEnsemble add = fixtures::additive_stumps({0.5, 0.5}, {0.0, -1.0}, {2.0, 1.0});
    const ExplanationMatrix e = explain_with_treeshap(add, ds);
    const std::vector<SummaryDot> dots = summary_data(e);
    CHECK(dots.size() == 600);
    // per feature, dots at the same feature value share one attribution
    for (int f = 0; f < 2; ++f) {
      double lo_att = 1e300, hi_att = -1e300;
      for (const SummaryDot& d : dots)
        if (d.feature == f && ds.at(d.sample, f) == 1.0) {
          lo_att = std::min(lo_att, d.attribution);
          hi_att = std::max(hi_att, d.attribution);
        }
      CHECK(hi_att - lo_att < 1e-12);
    }
  }
  SECTION("AND model: vertical dispersion at fixed feature value") {
    const TreeEnsemble ens = fixtures::model_a();
    const ExplanationMatrix e = explain_with_treeshap(ens, ds);
    const std::vector<SummaryDot> dots = summary_data(e);
    double lo = 1e300, hi = -1e300;
    for (const SummaryDot& d : dots)
      if (d.feature == 0 && ds.at(d.sample, 0) == 1.0) {
        lo = std::min(lo, d.attribution);
        hi = std::max(hi, d.attribution);
      }
    CHECK(hi - lo > 1.0);  // cough modulates fever's credit
  }
}

TEST_CASE("dependence data auto-colors by the interaction partner", "[analysis]") {
  Dataset ds = binary_rows(400, 3, 11);
  TreeEnsemble ens = fixtures::model_a();
  ens.num_features = 3;
  ens.feature_names.clear();
  const ExplanationMatrix e = explain_with_treeshap(ens, ds);

  const DependenceData dep = dependence_data(e, 0);
  CHECK(dep.points.size() == 400);
  CHECK(dep.color_feature == 1);  // cough explains fever's dispersion

  // conditional variance given the partner is ~0 for the AND model
  RunningStat on, off;
  for (const DependencePoint& p : dep.points)
    if (p.x_value == 1.0) (p.color_value == 1.0 ? on : off).push(p.attribution);
  CHECK(on.variance() == Approx(0.0).margin(1e-12));
  CHECK(off.variance() == Approx(0.0).margin(1e-12));

  SECTION("additive models have no vertical dispersion at all") {
    const TreeEnsemble add =
        fixtures::additive_stumps({0.5, 0.5, 0.5}, {0.0, -1.0, 1.0}, {2.0, 1.0, 3.0});
    const ExplanationMatrix ea = explain_with_treeshap(add, ds);
    const DependenceData da = dependence_data(ea, 0, 2);
    RunningStat grp;
    for (const DependencePoint& p : da.points)
      if (p.x_value == 1.0) grp.push(p.attribution);
    CHECK(grp.variance() == Approx(0.0).margin(1e-12));
    CHECK(da.color_feature == 2);
  }
  CHECK_THROWS_AS(dependence_data(e, 9), validation_error);
}

TEST_CASE("interaction split decomposes the dependence series", "[analysis]") {
  const Dataset ds = binary_rows(120, 2, 13);
  const TreeEnsemble ens = fixtures::model_a();
  std::vector<InteractionExplanation> mats;
  for (std::size_t i = 0; i < ds.num_rows; ++i)
    mats.push_back(shap_interaction_values(ens, ds.row(i)));
  const ExplanationMatrix e = explain_with_treeshap(ens, ds);

  const InteractionSplit split = interaction_dependence_split(mats, 0, 1);
  for (std::size_t i = 0; i < ds.num_rows; ++i) {
    CHECK(split.main_plus_rest[i] + split.interaction[i] ==
          Approx(e.value(i, 0)).margin(1e-8));
    // the cover-based game sees interaction at every corner: +10 when the
    // two features agree, -10 when they differ
    const bool agree = ds.at(i, 0) == ds.at(i, 1);
    CHECK(split.interaction[i] == Approx(agree ? 10.0 : -10.0).margin(1e-8));
  }

  SECTION("additive models split into main plus zero") {
    const TreeEnsemble add = fixtures::additive_stumps({0.5, 0.5}, {0.0, -1.0}, {2.0, 1.0});
    std::vector<InteractionExplanation> amats;
    for (std::size_t i = 0; i < ds.num_rows; ++i)
      amats.push_back(shap_interaction_values(add, ds.row(i)));
    const InteractionSplit asplit = interaction_dependence_split(amats, 0, 1);
    for (double v : asplit.interaction) CHECK(v == Approx(0.0).margin(1e-10));
  }
}

namespace {

// stream whose labels always follow the true generating process but whose
// observed swap-feature column flips encoding at swap_at
struct SwapStream {
  Dataset stream;
  TreeEnsemble model;
  BackgroundSet bg;
};

SwapStream make_swap_stream(int n_train, int n_stream, int swap_at, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 5.0);
  const int m = 4;
  auto gen_row = [&](Dataset& ds, bool swapped) {
    const double strong = unit(rng);
    const double swap_true = unit(rng) > 0.5 ? 1.0 : 0.0;
    const double other = unit(rng);
    const double extra = unit(rng);
    ds.cells.push_back(strong);
    ds.cells.push_back(swapped ? 1.0 - swap_true : swap_true);
    ds.cells.push_back(other);
    ds.cells.push_back(extra);
    ds.labels.push_back(8.0 * strong + 1.0 * swap_true + noise(rng));
  };
  Dataset train;
  train.num_cols = m;
  train.column_names = {"strong", "swap", "other", "extra"};
  for (int i = 0; i < n_train; ++i) gen_row(train, false);
  train.num_rows = n_train;
  const TreeEnsemble model = fit_boosted_trees(train, {80, 2, 0.15, 0, 4});

  Dataset stream;
  stream.num_cols = m;
  stream.column_names = train.column_names;
  for (int i = 0; i < n_stream; ++i) gen_row(stream, i >= swap_at);
  stream.num_rows = n_stream;
  stream.timestamps.resize(n_stream);
  std::iota(stream.timestamps.begin(), stream.timestamps.end(), 0.0);

  BackgroundSet bg;
  bg.num_cols = m;
  bg.num_rows = 25;
  for (int r = 0; r < 25; ++r) {
    const auto row = train.row(r);
    bg.cells.insert(bg.cells.end(), row.begin(), row.end());
  }
  return {std::move(stream), model, std::move(bg)};
}

}  // namespace

TEST_CASE("monitoring surfaces a feature swap invisible in the rolling loss",
          "[analysis]") {
  const int n = 4000, swap_at = 2000, window = 300;
  SwapStream s = make_swap_stream(4000, n, swap_at, 17);
  const MonitoringSeries series =
      monitoring_series(s.model, s.stream, LossSpec::Kind::kSquaredError, s.bg, window, 2);

  // the swapped feature's loss attribution flips sign across the swap
  double early = 0.0, late = 0.0;
  for (int t = 0; t < swap_at; ++t) early += series.attribution(t, 1) / swap_at;
  for (int t = swap_at; t < n; ++t) late += series.attribution(t, 1) / (n - swap_at);
  CHECK(early < 0.0);
  CHECK(late > 0.0);

  const double p = drift_test(series, 1, {0, swap_at}, {swap_at, std::size_t(n)});
  CHECK(p < 1e-6);

  // while the overall rolling loss barely moves
  const std::vector<double> loss = series.rolling_loss();
  double before = 0.0, after = 0.0;
  for (int t = swap_at - window; t < swap_at; ++t) before += loss[t] / window;
  for (int t = n - window; t < n; ++t) after += loss[t] / window;
  CHECK(std::abs(after - before) / before < 0.10);

  // windowed sum identity: rolling base + sum of feature series == rolling loss
  std::vector<double> summed = series.rolling_base();
  for (int f = 0; f < 4; ++f) {
    const std::vector<double> r = series.rolling_feature(f);
    for (int t = 0; t < n; ++t) summed[t] += r[t];
  }
  for (int t = 0; t < n; t += 97)
    CHECK(summed[t] == Approx(loss[t]).margin(1e-6 * (1.0 + std::abs(loss[t]))));
}

TEST_CASE("stationary streams stay flat and drift tests behave", "[analysis]") {
  SwapStream s = make_swap_stream(500, 600, 600, 23);  // swap never happens
  const MonitoringSeries series =
      monitoring_series(s.model, s.stream, LossSpec::Kind::kSquaredError, s.bg, 150, 2);
  // early/late windows are statistically indistinguishable
  const double p = drift_test(series, 1, {0, 250}, {350, 600});
  CHECK(p > 1e-4);
  CHECK(p <= 1.0);

  // identical windows take the exact-equality fast path
  CHECK(drift_test(series, 1, {0, 250}, {0, 250}) == 1.0);
  CHECK_THROWS_AS(drift_test(series, 1, {0, 0}, {0, 250}), validation_error);
  CHECK_THROWS_AS(drift_test(series, 9, {0, 250}, {0, 250}), validation_error);

  Dataset no_labels = s.stream;
  no_labels.labels.clear();
  CHECK_THROWS_AS(monitoring_series(s.model, no_labels, LossSpec::Kind::kSquaredError,
                                    s.bg, 100),
                  validation_error);
}

TEST_CASE("supervised clustering separates planted explanation blobs", "[analysis]") {
  // two blobs in explanation space: samples with both AND features on vs off
  const TreeEnsemble ens = fixtures::model_a();
  Dataset ds;
  ds.num_cols = 2;
  ds.column_names = {"fever", "cough"};
  for (int i = 0; i < 12; ++i) {
    ds.cells.push_back(1.0);
    ds.cells.push_back(1.0);
  }
  for (int i = 0; i < 12; ++i) {
    ds.cells.push_back(0.0);
    ds.cells.push_back(0.0);
  }
  ds.num_rows = 24;
  const ExplanationMatrix e = explain_with_treeshap(ens, ds);
  const ClusterResult r = supervised_cluster(e);
  REQUIRE(r.leaf_order.size() == 24);
  REQUIRE(r.merges.size() == 23);

  // the final merge joins the two blobs: the leaf order keeps them contiguous
  std::vector<int> sorted_order = r.leaf_order;
  bool contiguous = true;
  for (int k = 0; k < 12; ++k) contiguous &= r.leaf_order[k] < 12 || r.leaf_order[k] >= 12;
  const bool first_is_low = r.leaf_order[0] < 12;
  for (int k = 0; k < 12; ++k)
    contiguous &= first_is_low ? r.leaf_order[k] < 12 : r.leaf_order[k] >= 12;
  CHECK(contiguous);
  // duplicates merge first at distance zero
  CHECK(r.merges.front().distance == 0.0);
  // the last merge is the only one at a large distance
  CHECK(r.merges.back().distance > 1.0);
  // leaf order is a permutation of 0..N-1
  std::sort(sorted_order.begin(), sorted_order.end());
  for (int i = 0; i < 24; ++i) CHECK(sorted_order[i] == i);

  ExplanationMatrix single;
  single.num_rows = 1;
  single.num_features = 2;
  single.values = {1.0, 2.0};
  CHECK_THROWS_AS(supervised_cluster(single), validation_error);
}

TEST_CASE("explanation pca finds the dominant directions", "[analysis]") {
  SECTION("rank-1 matrices concentrate all variance in one component") {
    ExplanationMatrix e;
    e.num_rows = 40;
    e.num_features = 5;
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::vector<double> direction{1.0, -2.0, 0.5, 0.0, 3.0};
    for (int i = 0; i < 40; ++i) {
      const double a = unit(rng);
      for (double d : direction) e.values.push_back(a * d);
    }
    const PcaResult r = explanation_pca(e, 2);
    CHECK(r.explained_variance[0] / r.total_variance > 0.999);
  }
  SECTION("two independent additive drivers give two components") {
    const TreeEnsemble ens =
        fixtures::additive_stumps({0.5, 0.5}, {0.0, 0.0}, {2.0, 3.0});
    TreeEnsemble padded = ens;
    padded.num_features = 4;
    const Dataset ds = binary_rows(200, 4, 29);
    const ExplanationMatrix e = explain_with_treeshap(padded, ds);
    const PcaResult r = explanation_pca(e, 3);
    CHECK((r.explained_variance[0] + r.explained_variance[1]) / r.total_variance >
          0.999);
    // each leading component loads on exactly one driver feature
    for (int c = 0; c < 2; ++c) {
      int arg = 0;
      for (int j = 1; j < 4; ++j)
        if (std::abs(r.loadings[j * 3 + c]) > std::abs(r.loadings[arg * 3 + c])) arg = j;
      CHECK((arg == 0 || arg == 1));
      CHECK(r.loadings[arg * 3 + c] > 0.0);  // sign convention
    }
  }
  SECTION("reconstruction error decreases monotonically in k") {
    RandomModelSpec spec;
    spec.trees = 10;
    spec.features = 6;
    spec.max_depth = 3;
    spec.seed = 31;
    const TreeEnsemble ens = generate_random_ensemble(spec);
    const Dataset ds = uniform_rows(80, 6, 37);
    const ExplanationMatrix e = explain_with_treeshap(ens, ds);
    double prev = 1e300;
    for (int k = 1; k <= 6; ++k) {
      const PcaResult r = explanation_pca(e, k);
      // residual variance = total - explained
      double explained = 0.0;
      for (double v : r.explained_variance) explained += v;
      const double residual = r.total_variance - explained;
      CHECK(residual <= prev + 1e-9);
      prev = residual;
    }
  }
  SECTION("coordinates permute with the samples") {
    ExplanationMatrix e;
    e.num_rows = 30;
    e.num_features = 3;
    std::mt19937_64 rng(41);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    e.values.resize(90);
    for (double& v : e.values) v = unit(rng);
    const PcaResult r = explanation_pca(e, 2);
    ExplanationMatrix rev = e;
    for (std::size_t i = 0; i < 30; ++i)
      for (std::size_t j = 0; j < 3; ++j) rev.values[i * 3 + j] = e.value(29 - i, j);
    const PcaResult rr = explanation_pca(rev, 2);
    for (std::size_t i = 0; i < 30; ++i)
      for (int c = 0; c < 2; ++c)
        CHECK(rr.coordinates[i * 2 + c] ==
              Approx(r.coordinates[(29 - i) * 2 + c]).margin(1e-9));
  }
  SECTION("k out of range is an error, gram trick handles N < M") {
    ExplanationMatrix e;
    e.num_rows = 4;
    e.num_features = 9;
    std::mt19937_64 rng(43);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    e.values.resize(36);
    for (double& v : e.values) v = unit(rng);
    CHECK_THROWS_AS(explanation_pca(e, 5), validation_error);
    const PcaResult r = explanation_pca(e, 3);
    CHECK(r.explained_variance[0] >= r.explained_variance[1]);
    CHECK(r.explained_variance[1] >= r.explained_variance[2]);
  }
}

TEST_CASE("gain importance reads recorded splits", "[analysis]") {
  SECTION("a single split carries its own gain") {
    Dataset ds = uniform_rows(100, 2, 47);
    ds.labels.resize(100);
    for (std::size_t i = 0; i < 100; ++i) ds.labels[i] = ds.at(i, 0) > 0.5 ? 1.0 : 0.0;
    const TreeEnsemble ens = fit_boosted_trees(ds, {1, 1, 1.0, 0, 1});
    const std::vector<double> g = gain_importance(ens);
    REQUIRE(ens.trees[0].num_nodes() == 3);
    CHECK(g[0] == Approx(ens.trees[0].gain[0]));
    CHECK(g[1] == 0.0);
  }
  SECTION("AND-style data gives both features positive gain") {
    Dataset ds = binary_rows(300, 2, 53);
    ds.labels.resize(300);
    for (std::size_t i = 0; i < 300; ++i)
      ds.labels[i] = ds.at(i, 0) * ds.at(i, 1) * 10.0;
    const TreeEnsemble ens = fit_boosted_trees(ds, {10, 2, 0.4, 0, 1});
    const std::vector<double> g = gain_importance(ens);
    CHECK(g[0] > 0.0);
    CHECK(g[1] > 0.0);
  }
  SECTION("models without gain are unsupported") {
    const TreeEnsemble ens = fixtures::model_a();
    CHECK_THROWS_AS(gain_importance(ens), validation_error);
  }
}

TEST_CASE("permutation importance isolates the predictive feature", "[analysis]") {
  Dataset ds = uniform_rows(250, 3, 59);
  ds.labels.resize(250);
  for (std::size_t i = 0; i < 250; ++i) ds.labels[i] = 4.0 * ds.at(i, 0);
  const TreeEnsemble ens = fit_boosted_trees(ds, {40, 2, 0.3, 0, 1});
  const std::vector<double> imp =
      permutation_importance(ens, ds, PerfMetric::kR2, 11, 6);
  CHECK(imp[0] > 10.0 * std::max(std::abs(imp[1]), std::abs(imp[2])));
  CHECK(std::abs(imp[1]) < 0.05);
  CHECK(std::abs(imp[2]) < 0.05);
  const std::vector<double> again =
      permutation_importance(ens, ds, PerfMetric::kR2, 11, 6);
  CHECK(imp == again);

  Dataset no_labels = uniform_rows(50, 3, 61);
  CHECK_THROWS_AS(permutation_importance(ens, no_labels, PerfMetric::kR2, 1),
                  validation_error);
}

TEST_CASE("reruns on the same matrix are bit-identical", "[analysis]") {
  RandomModelSpec spec;
  spec.trees = 8;
  spec.features = 5;
  spec.max_depth = 3;
  spec.seed = 67;
  const TreeEnsemble ens = generate_random_ensemble(spec);
  const Dataset ds = uniform_rows(60, 5, 71);
  const ExplanationMatrix e = explain_with_treeshap(ens, ds);

  const auto imp1 = global_importance(e), imp2 = global_importance(e);
  for (std::size_t k = 0; k < imp1.size(); ++k) {
    CHECK(imp1[k].feature == imp2[k].feature);
    CHECK(imp1[k].value == imp2[k].value);
  }
  const PcaResult p1 = explanation_pca(e, 2), p2 = explanation_pca(e, 2);
  CHECK(p1.coordinates == p2.coordinates);
  const ClusterResult c1 = supervised_cluster(e), c2 = supervised_cluster(e);
  CHECK(c1.leaf_order == c2.leaf_order);
}
