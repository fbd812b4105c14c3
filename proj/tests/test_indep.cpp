#include <catch2/catch_amalgamated.hpp>

#include <chrono>
#include <random>

#include "arbor/indep.hpp"
#include "arbor/oracle.hpp"
#include "arbor/train.hpp"
#include "fixtures.hpp"

using namespace arbor;
using Catch::Approx;

TEST_CASE("calc_weight evaluates the ordering weight", "[indep]") {
  CHECK(calc_weight(0, 1) == Approx(1.0));
  CHECK(calc_weight(1, 3) == Approx(1.0 / 6.0));
  CHECK(calc_weight(0, 2) == Approx(0.5));
  CHECK(calc_weight(2, 3) == Approx(1.0 / 3.0));
  CHECK_THROWS_AS(calc_weight(3, 3), std::domain_error);
  CHECK_THROWS_AS(calc_weight(-1, 2), std::domain_error);
  CHECK_THROWS_AS(calc_weight(0, 0), std::domain_error);
}

TEST_CASE("background sets validate their invariants", "[indep]") {
  BackgroundSet bg;
  bg.num_cols = 2;
  CHECK_THROWS_AS(bg.validate(), validation_error);  // no rows
  bg.num_rows = 2;
  bg.cells = {0, 0, 1, 1};
  CHECK_NOTHROW(bg.validate());
  bg.weights = {0.7, 0.2};
  CHECK_THROWS_AS(bg.validate(), validation_error);  // weights don't sum to 1
  bg.weights = {0.7, 0.3};
  CHECK_NOTHROW(bg.validate());
  bg.weights = {1.3, -0.3};
  CHECK_THROWS_AS(bg.validate(), validation_error);
}

TEST_CASE("x as its own reference yields all-zero attributions", "[indep]") {
  const TreeEnsemble ens = fixtures::model_a();
  const std::vector<double> x{1.0, 1.0};
  const Explanation e = independent_tree_shap(ens, x, BackgroundSet::from_row(x));
  CHECK(e.values[0] == 0.0);
  CHECK(e.values[1] == 0.0);
  CHECK(e.base == Approx(predict_margin(ens, x)));
}

TEST_CASE("a reference differing in one feature is a single-player game", "[indep]") {
  const TreeEnsemble ens = fixtures::model_a();
  const std::vector<double> x{1.0, 1.0};
  const std::vector<double> ref{1.0, 0.0};  // only cough differs
  const Explanation e = independent_tree_shap(ens, x, BackgroundSet::from_row(ref));
  CHECK(e.values[0] == Approx(0.0));
  CHECK(e.values[1] == Approx(predict_margin(ens, x) - predict_margin(ens, ref)));
}

TEST_CASE("independent tree shap matches the composite-game oracle", "[indep]") {
  std::mt19937_64 rng(31);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    RandomModelSpec spec;
    spec.trees = 1 + static_cast<int>(rng() % 20);
    spec.features = 1 + static_cast<int>(rng() % 12);
    spec.max_depth = 1 + static_cast<int>(rng() % 5);
    spec.seed = rng();
    const TreeEnsemble ens = generate_random_ensemble(spec);
    const std::vector<double> x = fixtures::random_row(spec.features, rng, 0.1);
    const std::vector<double> ref = fixtures::random_row(spec.features, rng, 0.1);
    const std::vector<double> fast = independent_tree_shap_single(ens, x, ref);
    const Explanation slow = shapley_exact_single_ref(ens, x, ref);
    for (int i = 0; i < spec.features; ++i)
      worst = std::max(worst, std::abs(fast[i] - slow.values[i]));
  }
  CHECK(worst <= 1e-8);
}

TEST_CASE("single-reference local accuracy holds per reference", "[indep]") {
  std::mt19937_64 rng(37);
  RandomModelSpec spec;
  spec.trees = 12;
  spec.features = 8;
  spec.max_depth = 4;
  spec.seed = 5;
  TreeEnsemble ens = generate_random_ensemble(spec);
  ens.base_offset = 1.5;
  for (int trial = 0; trial < 40; ++trial) {
    const std::vector<double> x = fixtures::random_row(8, rng, 0.1);
    const std::vector<double> ref = fixtures::random_row(8, rng, 0.1);
    const std::vector<double> phi = independent_tree_shap_single(ens, x, ref);
    double total = 0.0;
    for (double v : phi) total += v;
    CHECK(total ==
          Approx(predict_margin(ens, x) - predict_margin(ens, ref)).margin(1e-8));
  }
}

TEST_CASE("background averaging is linear in the references", "[indep]") {
  std::mt19937_64 rng(41);
  RandomModelSpec spec;
  spec.trees = 6;
  spec.features = 5;
  spec.max_depth = 3;
  spec.seed = 8;
  const TreeEnsemble ens = generate_random_ensemble(spec);
  const std::vector<double> x = fixtures::random_row(5, rng);

  BackgroundSet bg;
  bg.num_cols = 5;
  bg.num_rows = 4;
  for (int r = 0; r < 4; ++r) {
    const auto row = fixtures::random_row(5, rng);
    bg.cells.insert(bg.cells.end(), row.begin(), row.end());
  }
  bg.weights = {0.4, 0.3, 0.2, 0.1};

  const Explanation whole = independent_tree_shap(ens, x, bg);
  std::vector<double> manual(5, 0.0);
  double base = 0.0;
  for (std::size_t r = 0; r < bg.num_rows; ++r) {
    const std::vector<double> phi = independent_tree_shap_single(ens, x, bg.row(r));
    for (int i = 0; i < 5; ++i) manual[i] += bg.weights[r] * phi[i];
    base += bg.weights[r] * predict_margin(ens, bg.row(r));
  }
  for (int i = 0; i < 5; ++i) CHECK(whole.values[i] == Approx(manual[i]).margin(1e-12));
  CHECK(whole.base == Approx(base).margin(1e-12));
  CHECK(whole.total() == Approx(predict_margin(ens, x)).margin(1e-8));
}

TEST_CASE("empty background is an error", "[indep]") {
  const TreeEnsemble ens = fixtures::model_a();
  BackgroundSet bg;
  bg.num_cols = 2;
  CHECK_THROWS_AS(independent_tree_shap(ens, std::vector<double>{1.0, 1.0}, bg),
                  validation_error);
}

TEST_CASE("loss transforms evaluate and differentiate", "[indep]") {
  LossSpec sq{LossSpec::Kind::kSquaredError, 2.0};
  CHECK(loss_value(sq, 5.0) == Approx(9.0));
  CHECK(loss_derivative(sq, 5.0) == Approx(6.0));
  LossSpec nll{LossSpec::Kind::kLogisticNll, 1.0};
  CHECK(loss_value(nll, 0.0) == Approx(std::log(2.0)));
  CHECK(loss_derivative(nll, 0.0) == Approx(-0.5));
  LossSpec bad{LossSpec::Kind::kLogisticNll, 0.5};
  CHECK_THROWS_AS(loss_value(bad, 0.0), validation_error);
}

TEST_CASE("loss attributions telescope to the exact loss", "[indep]") {
  std::mt19937_64 rng(43);
  RandomModelSpec spec;
  spec.trees = 10;
  spec.features = 6;
  spec.max_depth = 4;
  spec.seed = 13;
  const TreeEnsemble ens = generate_random_ensemble(spec);

  BackgroundSet bg;
  bg.num_cols = 6;
  bg.num_rows = 8;
  for (int r = 0; r < 8; ++r) {
    const auto row = fixtures::random_row(6, rng);
    bg.cells.insert(bg.cells.end(), row.begin(), row.end());
  }
  for (int trial = 0; trial < 25; ++trial) {
    const std::vector<double> x = fixtures::random_row(6, rng);
    const LossSpec loss{LossSpec::Kind::kSquaredError, 0.3};
    const Explanation e = explain_loss(ens, x, loss, bg);
    CHECK(e.total() == Approx(loss_value(loss, predict_margin(ens, x))).margin(1e-8));
  }
}

TEST_CASE("helpful features get negative loss attributions", "[indep]") {
  // a stump predicting x0 exactly; explaining a perfect prediction against a
  // poor reference must push the loss down
  const TreeEnsemble ens = fixtures::additive_stumps({0.5}, {0.0}, {1.0});
  const std::vector<double> x{0.9};   // f(x) = 1
  const std::vector<double> ref{0.1}; // f(ref) = 0
  const LossSpec loss{LossSpec::Kind::kSquaredError, 1.0};  // label matches f(x)
  const Explanation e = explain_loss(ens, x, loss, BackgroundSet::from_row(ref));
  CHECK(e.base == Approx(1.0));        // loss at the reference
  CHECK(e.values[0] == Approx(-1.0));  // the feature removes all of it
  CHECK(e.total() == Approx(0.0).margin(1e-12));
}

TEST_CASE("identical margins fall back to the analytic derivative", "[indep]") {
  const TreeEnsemble ens = fixtures::additive_stumps({0.5}, {1.0}, {1.0});  // constant
  const std::vector<double> x{0.9};
  const std::vector<double> ref{0.1};
  const LossSpec loss{LossSpec::Kind::kSquaredError, 0.0};
  const Explanation e = explain_loss(ens, x, loss, BackgroundSet::from_row(ref));
  // phi is zero, so scaled attributions are zero and base carries the loss
  CHECK(e.values[0] == Approx(0.0));
  CHECK(e.total() == Approx(loss_value(loss, 1.0)));
}

TEST_CASE("unsupported loss kinds are rejected", "[indep]") {
  const TreeEnsemble ens = fixtures::model_a();
  LossSpec loss;
  loss.kind = static_cast<LossSpec::Kind>(99);
  loss.label = 0.0;
  CHECK_THROWS_AS(
      explain_loss(ens, std::vector<double>{1.0, 1.0}, loss,
                   BackgroundSet::from_row(std::vector<double>{0.0, 0.0})),
      validation_error);
}

TEST_CASE("runtime grows roughly linearly in the reference count", "[indep]") {
  RandomModelSpec spec;
  spec.trees = 150;
  spec.features = 20;
  spec.max_depth = 6;
  spec.seed = 3;
  const TreeEnsemble ens = generate_random_ensemble(spec);
  std::mt19937_64 rng(55);
  const std::vector<double> x = fixtures::random_row(20, rng);

  auto make_bg = [&](std::size_t rows) {
    BackgroundSet bg;
    bg.num_cols = 20;
    bg.num_rows = rows;
    std::mt19937_64 local(99);
    for (std::size_t r = 0; r < rows; ++r) {
      const auto row = fixtures::random_row(20, local);
      bg.cells.insert(bg.cells.end(), row.begin(), row.end());
    }
    return bg;
  };
  const BackgroundSet small = make_bg(100), large = make_bg(200);

  auto time_it = [&](const BackgroundSet& bg) {
    double best = 1e300;
    for (int rep = 0; rep < 3; ++rep) {
      const auto t0 = std::chrono::steady_clock::now();
      volatile double sink = independent_tree_shap(ens, x, bg).base;
      (void)sink;
      best = std::min(
          best,
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    return best;
  };
  // warm up, then compare
  time_it(small);
  const double t_small = time_it(small);
  const double t_large = time_it(large);
  CHECK(t_large / t_small < 2.75);
}
