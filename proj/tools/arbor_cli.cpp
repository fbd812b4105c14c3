// arbor: explain tree-ensemble predictions with exact Shapley attributions,
// benchmark explainers, and build global analyses from many local
// explanations. All outputs are CSV (or JSON with --json).

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "arbor/agnostic.hpp"
#include "arbor/analysis.hpp"
#include "arbor/benchmark.hpp"
#include "arbor/data.hpp"
#include "arbor/indep.hpp"
#include "arbor/interactions.hpp"
#include "arbor/model.hpp"
#include "arbor/oracle.hpp"
#include "arbor/parallel.hpp"
#include "arbor/stats.hpp"
#include "arbor/train.hpp"
#include "arbor/treeshap.hpp"

namespace {

using namespace arbor;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;

std::uint64_t env_seed() {
  if (const char* s = std::getenv("ARBOR_SEED")) {
    try {
      return std::stoull(s);
    } catch (...) {
      throw validation_error("ARBOR_SEED is not a nonnegative integer");
    }
  }
  return 0;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw parse_error("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw validation_error("cannot write '" + path + "'");
  out << content;
}

std::ostream& open_output(std::ofstream& file, const std::string& path) {
  if (path.empty() || path == "-") return std::cout;
  file.open(path);
  if (!file) throw validation_error("cannot write '" + path + "'");
  return file;
}

TreeEnsemble load_model(const std::string& path) { return parse_model(read_file(path)); }

// shared options most subcommands need
struct CommonOpts {
  std::string model_path;
  std::string data_path;
  std::string label_column;
  std::string time_column;
  std::string output = "-";
  std::uint64_t seed = env_seed();
  int threads = default_threads();
  bool json = false;
};

void add_common(CLI::App* cmd, CommonOpts& o, bool needs_model = true,
                bool needs_data = true) {
  if (needs_model)
    cmd->add_option("-m,--model", o.model_path, "model JSON file")->required();
  if (needs_data)
    cmd->add_option("-d,--data", o.data_path, "dataset CSV file")->required();
  cmd->add_option("--label", o.label_column, "label column name in the dataset");
  cmd->add_option("--time", o.time_column, "timestamp column name in the dataset");
  cmd->add_option("-o,--output", o.output, "output path ('-' = stdout)");
  cmd->add_option("--seed", o.seed, "random seed (default: ARBOR_SEED or 0)");
  cmd->add_option("--threads", o.threads, "parallel fan-out width");
  cmd->add_flag("--json", o.json, "emit JSON instead of CSV");
}

Dataset load_data(const CommonOpts& o) {
  Dataset ds = read_csv_file(o.data_path);
  if (!o.label_column.empty()) ds.labels = ds.take_column(o.label_column);
  if (!o.time_column.empty()) ds.timestamps = ds.take_column(o.time_column);
  return ds;
}

BackgroundSet load_background(const std::string& path, const TreeEnsemble& ens) {
  const Dataset ds = read_csv_file(path);
  if (ds.num_cols != static_cast<std::size_t>(ens.num_features))
    throw validation_error("background CSV has " + std::to_string(ds.num_cols) +
                           " columns but the model expects " +
                           std::to_string(ens.num_features));
  return BackgroundSet::from_dataset(ds);
}

std::vector<std::string> phi_header(const TreeEnsemble& ens) {
  std::vector<std::string> names{"sample", "base"};
  for (int i = 0; i < ens.num_features; ++i) names.push_back("phi_" + ens.feature_name(i));
  return names;
}

// Accumulates one tabular result and renders it as CSV (header mandatory) or
// as a JSON array of objects, so every command supports both formats.
class Table {
 public:
  explicit Table(std::vector<std::string> columns) : columns_(std::move(columns)) {}

  Table& row() {
    cells_.emplace_back();
    return *this;
  }
  Table& cell(double v) {
    cells_.back().push_back(format_double(v));
    numeric_.push_back(true);
    return *this;
  }
  Table& cell(const std::string& v) {
    cells_.back().push_back(v);
    numeric_.push_back(false);
    return *this;
  }

  void write(std::ostream& out, bool as_json) const {
    if (!as_json) {
      write_csv_header(out, columns_);
      for (const auto& r : cells_) {
        for (std::size_t j = 0; j < r.size(); ++j) {
          if (j) out << ',';
          out << r[j];
        }
        out << '\n';
      }
      return;
    }
    nlohmann::json doc = nlohmann::json::array();
    std::size_t flat = 0;
    for (const auto& r : cells_) {
      nlohmann::json obj;
      for (std::size_t j = 0; j < r.size(); ++j, ++flat) {
        if (numeric_[flat])
          obj[columns_[j]] = r[j].empty() ? nlohmann::json() : nlohmann::json::parse(r[j]);
        else
          obj[columns_[j]] = r[j];
      }
      doc.push_back(std::move(obj));
    }
    out << doc.dump(2) << '\n';
  }

  void write_to(const std::string& path, bool as_json) const {
    std::ofstream file;
    write(open_output(file, path), as_json);
  }

 private:
  std::vector<std::string> columns_;
  std::vector<std::vector<std::string>> cells_;
  std::vector<bool> numeric_;
};

void write_explanations(std::ostream& out, const TreeEnsemble& ens,
                        const ExplanationMatrix& e, bool as_json) {
  Table table(phi_header(ens));
  for (std::size_t i = 0; i < e.num_rows; ++i) {
    table.row().cell(static_cast<double>(i)).cell(e.bases[i]);
    for (std::size_t j = 0; j < e.num_features; ++j) table.cell(e.value(i, j));
  }
  table.write(out, as_json);
}

// ---------------------------------------------------------------------------
// subcommand payloads

struct ExplainOpts {
  CommonOpts common;
  std::string method = "treeshap";
  std::string background_path;
  std::uint64_t budget = 4096;
  int references = 200;
  int min_samples = 16;
  int oracle_cap = kDefaultOracleCap;
  double l1 = 0.0;
};

int run_explain(const ExplainOpts& o) {
  const TreeEnsemble ens = load_model(o.common.model_path);
  const Dataset ds = load_data(o.common);
  if (ds.num_cols != static_cast<std::size_t>(ens.num_features))
    throw validation_error("dataset has " + std::to_string(ds.num_cols) +
                           " feature columns but the model expects " +
                           std::to_string(ens.num_features));

  std::optional<BackgroundSet> bg;
  if (!o.background_path.empty()) bg = load_background(o.background_path, ens);
  auto need_bg = [&]() -> const BackgroundSet& {
    if (!bg)
      throw validation_error("method '" + o.method + "' needs --background <csv>");
    if (static_cast<int>(bg->num_rows) > o.references) {
      bg->num_rows = static_cast<std::size_t>(o.references);
      bg->cells.resize(bg->num_rows * bg->num_cols);
      if (!bg->weights.empty()) {
        bg->weights.clear();  // truncated set falls back to uniform
      }
    }
    return *bg;
  };

  EstimatorConfig est;
  est.n_evaluations = o.budget;
  est.min_samples_per_feature = o.min_samples;
  est.seed = o.common.seed;
  if (o.l1 > 0.0) est.l1_penalty = o.l1;

  std::function<Explanation(std::span<const double>)> fn;
  Method method;
  if (o.method == "treeshap") {
    method = Method::kTreeShap;
    fn = [&](std::span<const double> x) { return tree_shap(ens, x); };
  } else if (o.method == "saabas") {
    method = Method::kSaabas;
    fn = [&](std::span<const double> x) { return saabas(ens, x); };
  } else if (o.method == "brute") {
    method = Method::kBrute;
    fn = [&](std::span<const double> x) { return shapley_exact(ens, x, o.oracle_cap); };
  } else if (o.method == "indep") {
    method = Method::kIndep;
    const BackgroundSet& b = need_bg();
    fn = [&ens, &b](std::span<const double> x) { return independent_tree_shap(ens, x, b); };
  } else if (o.method == "sampling") {
    method = Method::kSampling;
    const BackgroundSet& b = need_bg();
    const ModelFn model = model_callback(ens);
    fn = [model, &b, est](std::span<const double> x) {
      return sampling_shap(model, x, b, est);
    };
  } else if (o.method == "kernel") {
    method = Method::kKernel;
    const BackgroundSet& b = need_bg();
    const ModelFn model = model_callback(ens);
    fn = [model, &b, est](std::span<const double> x) {
      return kernel_shap(model, x, b, est);
    };
  } else {
    throw validation_error("unknown method '" + o.method + "'");
  }

  const ExplanationMatrix e = explain_rows(ds, fn, method, o.common.threads);
  std::ofstream file;
  write_explanations(open_output(file, o.common.output), ens, e, o.common.json);
  return kExitOk;
}

struct PredictOpts {
  CommonOpts common;
  bool margin = false;
};

int run_predict(const PredictOpts& o) {
  const TreeEnsemble ens = load_model(o.common.model_path);
  const Dataset ds = load_data(o.common);
  Table table({"sample", "prediction"});
  for (std::size_t i = 0; i < ds.num_rows; ++i) {
    const double v = o.margin ? predict_margin(ens, ds.row(i)) : predict(ens, ds.row(i));
    table.row().cell(static_cast<double>(i)).cell(v);
  }
  table.write_to(o.common.output, o.common.json);
  return kExitOk;
}

struct InteractionsOpts {
  CommonOpts common;
  int max_rows = 16;
};

int run_interactions(const InteractionsOpts& o) {
  const TreeEnsemble ens = load_model(o.common.model_path);
  const Dataset ds = load_data(o.common);
  const std::size_t rows = std::min<std::size_t>(ds.num_rows, o.max_rows);
  for (std::size_t i = 0; i < rows; ++i) {
    const InteractionExplanation m =
        shap_interaction_values(ens, ds.row(i), o.common.threads);
    std::string path = o.common.output;
    if (path != "-" && !path.empty())
      path += "_sample" + std::to_string(i) + (o.common.json ? ".json" : ".csv");
    std::vector<std::string> header{"bias"};
    for (int f = 0; f < ens.num_features; ++f) header.push_back(ens.feature_name(f));
    Table table(header);
    for (int a = 0; a <= ens.num_features; ++a) {
      table.row();
      for (int b = 0; b <= ens.num_features; ++b) table.cell(m.at(a, b));
    }
    table.write_to(path, o.common.json);
  }
  return kExitOk;
}

struct GenOpts {
  std::string what = "model";  // model | data
  std::string output = "-";
  int trees = 10;
  int features = 5;
  int depth = 3;
  int rows = 100;
  double missing = 0.0;
  std::string model_path;  // for labeled data
  std::uint64_t seed = env_seed();
};

int run_gen(const GenOpts& o) {
  if (o.what == "model") {
    RandomModelSpec spec;
    spec.trees = o.trees;
    spec.features = o.features;
    spec.max_depth = o.depth;
    spec.seed = o.seed;
    const TreeEnsemble ens = generate_random_ensemble(spec);
    std::ofstream file;
    open_output(file, o.output) << serialize_model(ens) << '\n';
    return kExitOk;
  }
  if (o.what == "data") {
    std::mt19937_64 rng(o.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::optional<TreeEnsemble> model;
    if (!o.model_path.empty()) model = load_model(o.model_path);
    const int m = model ? model->num_features : o.features;
    std::ofstream file;
    std::ostream& out = open_output(file, o.output);
    std::vector<std::string> header;
    for (int j = 0; j < m; ++j)
      header.push_back(model ? model->feature_name(j) : "f" + std::to_string(j));
    if (model) header.push_back("label");
    write_csv_header(out, header);
    std::vector<double> row(m);
    for (int i = 0; i < o.rows; ++i) {
      for (double& v : row)
        v = o.missing > 0.0 && unit(rng) < o.missing ? missing_value() : unit(rng);
      if (model) {
        std::vector<double> with_label = row;
        with_label.push_back(predict_margin(*model, row));
        write_csv_row(out, with_label);
      } else {
        write_csv_row(out, row);
      }
    }
    return kExitOk;
  }
  throw validation_error("gen expects 'model' or 'data'");
}

struct MonitorOpts {
  CommonOpts common;
  std::string background_path;
  std::string loss = "squared";
  int window = 1000;
  int references = 200;
};

int run_monitor(const MonitorOpts& o) {
  const TreeEnsemble ens = load_model(o.common.model_path);
  Dataset stream = load_data(o.common);
  if (!stream.has_labels())
    throw validation_error("monitor needs --label naming the outcome column");
  if (o.background_path.empty())
    throw validation_error("monitor needs --background <csv>");
  BackgroundSet bg = load_background(o.background_path, ens);
  if (static_cast<int>(bg.num_rows) > o.references) {
    bg.num_rows = o.references;
    bg.cells.resize(bg.num_rows * bg.num_cols);
    bg.weights.clear();
  }
  const LossSpec::Kind kind = o.loss == "squared"   ? LossSpec::Kind::kSquaredError
                              : o.loss == "logistic" ? LossSpec::Kind::kLogisticNll
                                                     : throw validation_error(
                                                           "unknown loss '" + o.loss + "'");
  const MonitoringSeries series =
      monitoring_series(ens, stream, kind, bg, o.window, o.common.threads);

  // long form: one row per (timestamp, series), features as rolling means
  Table table({"timestamp", "series", "value"});
  auto emit = [&](const std::string& name, const std::vector<double>& values) {
    for (std::size_t t = 0; t < values.size(); ++t)
      table.row().cell(series.timestamps[t]).cell(name).cell(values[t]);
  };
  emit("loss", series.rolling_loss());
  for (std::size_t f = 0; f < series.num_features; ++f)
    emit(stream.column_names[f], series.rolling_feature(f));
  table.write_to(o.common.output, o.common.json);
  return kExitOk;
}

struct AnalyzeOpts {
  CommonOpts common;
  std::string background_path;
  int feature = 0;
  int color = -1;
  int components = 2;
  int max_rows = 0;  // 0 = all
};

ExplanationMatrix treeshap_matrix(const TreeEnsemble& ens, const Dataset& ds,
                                  int threads) {
  return explain_rows(
      ds, [&](std::span<const double> x) { return tree_shap(ens, x); },
      Method::kTreeShap, threads);
}

Dataset maybe_truncate(Dataset ds, int max_rows) {
  if (max_rows > 0 && ds.num_rows > static_cast<std::size_t>(max_rows)) {
    ds.num_rows = max_rows;
    ds.cells.resize(ds.num_rows * ds.num_cols);
    if (!ds.labels.empty()) ds.labels.resize(ds.num_rows);
    if (!ds.timestamps.empty()) ds.timestamps.resize(ds.num_rows);
  }
  return ds;
}

int run_summarize(const AnalyzeOpts& o) {
  const TreeEnsemble ens = load_model(o.common.model_path);
  const Dataset ds = maybe_truncate(load_data(o.common), o.max_rows);
  const ExplanationMatrix e = treeshap_matrix(ens, ds, o.common.threads);
  const std::vector<SummaryDot> dots = summary_data(e);
  Table table({"feature", "sample", "attribution", "normalized_value"});
  for (const SummaryDot& d : dots)
    table.row()
        .cell(ens.feature_name(d.feature))
        .cell(static_cast<double>(d.sample))
        .cell(d.attribution)
        .cell(d.normalized_value);
  table.write_to(o.common.output, o.common.json);
  return kExitOk;
}

int run_dependence(const AnalyzeOpts& o) {
  const TreeEnsemble ens = load_model(o.common.model_path);
  const Dataset ds = maybe_truncate(load_data(o.common), o.max_rows);
  const ExplanationMatrix e = treeshap_matrix(ens, ds, o.common.threads);
  const DependenceData dep = dependence_data(e, o.feature, o.color);
  Table table({"x_" + ens.feature_name(dep.feature),
               "phi_" + ens.feature_name(dep.feature),
               "color_" + ens.feature_name(dep.color_feature)});
  for (const DependencePoint& p : dep.points)
    table.row().cell(p.x_value).cell(p.attribution).cell(p.color_value);
  table.write_to(o.common.output, o.common.json);
  return kExitOk;
}

int run_cluster(const AnalyzeOpts& o) {
  const TreeEnsemble ens = load_model(o.common.model_path);
  const Dataset ds = maybe_truncate(load_data(o.common), o.max_rows);
  const ExplanationMatrix e = treeshap_matrix(ens, ds, o.common.threads);
  const ClusterResult r = supervised_cluster(e);
  const std::string base = o.common.output == "-" ? "" : o.common.output;
  const std::string ext = o.common.json ? ".json" : ".csv";
  {
    Table table({"position", "sample"});
    for (std::size_t i = 0; i < r.leaf_order.size(); ++i)
      table.row()
          .cell(static_cast<double>(i))
          .cell(static_cast<double>(r.leaf_order[i]));
    table.write_to(base.empty() ? "-" : base + "_order" + ext, o.common.json);
  }
  {
    Table table({"left", "right", "distance", "size"});
    for (const ClusterResult::Merge& m : r.merges)
      table.row()
          .cell(static_cast<double>(m.left))
          .cell(static_cast<double>(m.right))
          .cell(m.distance)
          .cell(static_cast<double>(m.size));
    table.write_to(base.empty() ? "-" : base + "_merges" + ext, o.common.json);
  }
  return kExitOk;
}

int run_pca(const AnalyzeOpts& o) {
  const TreeEnsemble ens = load_model(o.common.model_path);
  const Dataset ds = maybe_truncate(load_data(o.common), o.max_rows);
  const ExplanationMatrix e = treeshap_matrix(ens, ds, o.common.threads);
  const PcaResult r = explanation_pca(e, o.components);
  const std::string base = o.common.output == "-" ? "" : o.common.output;
  const std::string ext = o.common.json ? ".json" : ".csv";
  {
    std::vector<std::string> header{"sample"};
    for (int c = 0; c < r.components; ++c) header.push_back("pc" + std::to_string(c + 1));
    Table table(header);
    for (std::size_t i = 0; i < e.num_rows; ++i) {
      table.row().cell(static_cast<double>(i));
      for (int c = 0; c < r.components; ++c) table.cell(r.coordinates[i * r.components + c]);
    }
    table.write_to(base.empty() ? "-" : base + "_coords" + ext, o.common.json);
  }
  {
    std::vector<std::string> header{"feature"};
    for (int c = 0; c < r.components; ++c) header.push_back("pc" + std::to_string(c + 1));
    header.push_back("explained_variance");
    Table table(header);
    for (std::size_t j = 0; j < e.num_features; ++j) {
      table.row().cell(ens.feature_name(static_cast<int>(j)));
      for (int c = 0; c < r.components; ++c) table.cell(r.loadings[j * r.components + c]);
      table.cell(j < r.explained_variance.size() ? r.explained_variance[j]
                                                 : missing_value());
    }
    table.write_to(base.empty() ? "-" : base + "_loadings" + ext, o.common.json);
  }
  return kExitOk;
}

// --------------------------------------------------------------------------
// bench suites

struct BenchOpts {
  std::string suite = "full";
  std::string output = "bench";
  std::uint64_t seed = env_seed();
  int threads = default_threads();
  bool tile = false;
  // full-suite knobs
  int models = 3;
  int train_rows = 2000;
  int eval_rows = 100;
  int features = 10;
  int trees = 60;
  int depth = 3;
  // convergence knobs
  std::vector<std::uint64_t> budgets;
  int repetitions = 10;
  // feature-selection knobs
  int fs_datasets = 100;
  int fs_true = 18;
  int fs_trees = 10;
  std::string fs_interaction = "min";
};

struct BenchModel {
  TreeEnsemble model;
  Dataset train;
  Dataset eval;
};

// synthetic classification task with independent features: logistic labels
// over a sparse nonlinear margin, fit with the in-tree trainer
BenchModel make_bench_model(const BenchOpts& o) {
  std::mt19937_64 rng(o.seed + 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto margin = [](std::span<const double> x) {
    return 3.0 * x[0] - 2.5 * x[1] + 2.0 * x[2] * x[3] - 1.5 * (x[4] > 0.5) - 0.35;
  };
  auto make = [&](int rows) {
    Dataset ds;
    ds.num_rows = rows;
    ds.num_cols = o.features;
    for (int j = 0; j < o.features; ++j) ds.column_names.push_back("f" + std::to_string(j));
    ds.cells.resize(std::size_t(rows) * o.features);
    for (double& c : ds.cells) c = unit(rng);
    for (int i = 0; i < rows; ++i)
      ds.labels.push_back(unit(rng) < logistic(2.0 * margin(ds.row(i))) ? 1.0 : 0.0);
    return ds;
  };
  BenchModel out;
  out.train = make(o.train_rows);
  out.eval = make(o.eval_rows);
  BoostConfig cfg;
  cfg.rounds = o.trees;
  cfg.depth = o.depth;
  cfg.learning_rate = 0.15;
  out.model = fit_boosted_trees(out.train, cfg);
  return out;
}

int run_bench_full(const BenchOpts& o) {
  std::vector<BenchSuiteResult> runs;
  for (int split = 0; split < std::max(1, o.models); ++split) {
    BenchOpts per = o;
    per.seed = o.seed + 1000ull * split;
    const BenchModel bm = make_bench_model(per);
    RosterConfig roster;
    roster.seed = per.seed;
    runs.push_back(
        run_benchmark_suite(bm.model, bm.train, bm.eval, roster, "synthetic", o.threads));
  }
  const BenchSuiteResult suite = average_suites(runs);

  write_file(o.output + "_scores.csv", [&] {
    std::ostringstream out;
    out << "explainer,model,metric,score\n";
    for (const MetricResult& r : suite.results)
      out << r.explainer << ',' << r.model << ',' << r.metric << ','
          << format_double(r.score) << '\n';
    return out.str();
  }());
  // per-metric curves come from the first split (averaging drops them)
  write_file(o.output + "_curves.csv", [&] {
    std::ostringstream out;
    out << "explainer,metric,fraction,value\n";
    for (const MetricResult& r : runs.front().results)
      for (const auto& [q, v] : r.curve)
        out << r.explainer << ',' << r.metric << ',' << format_double(q) << ','
            << format_double(v) << '\n';
    return out.str();
  }());
  const std::vector<TileCell> tiles = normalize_tiles(suite);
  write_file(o.output + "_tile.csv", [&] {
    std::ostringstream out;
    out << "explainer,metric,score,normalized\n";
    for (const TileCell& t : tiles)
      out << t.explainer << ',' << t.metric << ',' << format_double(t.score) << ','
          << format_double(t.normalized) << '\n';
    return out.str();
  }());
  if (o.tile) {
    std::cout << "explainer,metric,score,normalized\n";
    for (const TileCell& t : tiles)
      std::cout << t.explainer << ',' << t.metric << ',' << format_double(t.score) << ','
                << format_double(t.normalized) << '\n';
  }
  std::cout << "aggregate ranking (mean normalized score):\n";
  for (const auto& [name, score] : aggregate_ranking(tiles))
    std::cout << "  " << name << " " << format_double(score) << '\n';
  return kExitOk;
}

int run_bench_convergence(const BenchOpts& o) {
  RandomModelSpec spec;
  spec.trees = 50;
  spec.features = 12;
  spec.max_depth = 4;
  spec.seed = o.seed + 3;
  const TreeEnsemble ens = generate_random_ensemble(spec);
  std::mt19937_64 rng(o.seed + 4);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> x(spec.features);
  for (double& v : x) v = unit(rng);
  std::vector<double> ref(spec.features);
  for (double& v : ref) v = unit(rng);
  const BackgroundSet bg = BackgroundSet::from_row(ref);

  std::ostringstream out;
  out << "estimator,budget,mean_abs_error,max_abs_error,mean_std,max_std,"
         "normalized_std,model_evals,wall_seconds\n";
  for (EstimatorKind kind :
       {EstimatorKind::kTreeShap, EstimatorKind::kSampling, EstimatorKind::kKernel}) {
    std::vector<std::uint64_t> budgets = o.budgets;
    if (budgets.empty())
      budgets = kind == EstimatorKind::kKernel
                    ? std::vector<std::uint64_t>{256, 1024, 3500}
                    : std::vector<std::uint64_t>{2048, 8192, 32768};
    const ConvergenceReport r =
        convergence_report(kind, ens, x, bg, budgets, o.repetitions, o.seed);
    for (const ConvergenceCell& cell : r.cells)
      out << cell.estimator << ',' << cell.budget << ','
          << format_double(cell.mean_abs_error) << ',' << format_double(cell.max_abs_error)
          << ',' << format_double(cell.mean_std) << ',' << format_double(cell.max_std)
          << ',' << format_double(cell.normalized_std) << ',' << cell.model_evals << ','
          << format_double(cell.wall_seconds) << '\n';
  }
  write_file(o.output + "_convergence.csv", out.str());
  std::cout << "wrote " << o.output << "_convergence.csv\n";
  return kExitOk;
}

int run_bench_user_study(const BenchOpts& o) {
  const UserStudyResult r = user_study_suite(o.seed);
  std::ostringstream out;
  out << "scenario";
  for (const std::string& e : r.explainers) out << ',' << e;
  out << '\n';
  for (std::size_t s = 0; s < r.scenarios.size(); ++s) {
    out << r.scenarios[s];
    for (double d : r.disagreement[s]) out << ',' << format_double(d);
    out << '\n';
  }
  write_file(o.output + "_user_study.csv", out.str());
  std::cout << "wrote " << o.output << "_user_study.csv\n";
  return kExitOk;
}

int run_bench_feature_selection(const BenchOpts& o) {
  FeatureSelectionConfig cfg;
  cfg.n_datasets = o.fs_datasets;
  cfg.n_true = o.fs_true;
  cfg.trees = o.fs_trees;
  cfg.seed = o.seed;
  cfg.interaction = o.fs_interaction == "product"
                        ? FeatureSelectionConfig::Interaction::kProduct
                        : FeatureSelectionConfig::Interaction::kMin;
  const FeatureSelectionResult r = feature_selection_power(cfg, o.threads);
  std::ostringstream out;
  out << "method,mean_recovery\n";
  for (std::size_t m = 0; m < r.methods.size(); ++m)
    out << r.methods[m] << ',' << format_double(r.mean_recovery[m]) << '\n';
  out << "p_shap_vs_gain," << format_double(r.p_shap_vs_gain) << '\n';
  out << "p_shap_vs_perm," << format_double(r.p_shap_vs_perm) << '\n';
  out << "p_loss_vs_gain," << format_double(r.p_loss_vs_gain) << '\n';
  out << "p_loss_vs_perm," << format_double(r.p_loss_vs_perm) << '\n';
  write_file(o.output + "_feature_selection.csv", out.str());
  std::cout << "wrote " << o.output << "_feature_selection.csv\n";
  return kExitOk;
}

int run_bench(const BenchOpts& o) {
  if (o.suite == "full") return run_bench_full(o);
  if (o.suite == "convergence") return run_bench_convergence(o);
  if (o.suite == "user-study") return run_bench_user_study(o);
  if (o.suite == "feature-selection") return run_bench_feature_selection(o);
  throw validation_error("unknown suite '" + o.suite + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"arbor: exact Shapley attributions for tree ensembles"};
  app.require_subcommand(1);

  PredictOpts predict_opts;
  CLI::App* predict_cmd = app.add_subcommand("predict", "evaluate the model on a dataset");
  add_common(predict_cmd, predict_opts.common);
  predict_cmd->add_flag("--margin", predict_opts.margin,
                        "skip the objective transform and emit raw margins");

  ExplainOpts explain_opts;
  CLI::App* explain_cmd =
      app.add_subcommand("explain", "per-sample feature attributions");
  add_common(explain_cmd, explain_opts.common);
  explain_cmd
      ->add_option("--method", explain_opts.method,
                   "treeshap|saabas|brute|indep|sampling|kernel")
      ->capture_default_str();
  explain_cmd->add_option("--background", explain_opts.background_path,
                          "background CSV for indep/sampling/kernel");
  explain_cmd->add_option("--budget", explain_opts.budget,
                          "model-evaluation budget for sampling/kernel");
  explain_cmd->add_option("--references", explain_opts.references,
                          "max background references used");
  explain_cmd->add_option("--min-samples", explain_opts.min_samples,
                          "sampling minimum draws per feature");
  explain_cmd->add_option("--oracle-cap", explain_opts.oracle_cap,
                          "feature cap for the brute-force oracle");
  explain_cmd->add_option("--l1", explain_opts.l1, "kernel l1 selection penalty");

  InteractionsOpts inter_opts;
  CLI::App* inter_cmd =
      app.add_subcommand("interactions", "per-sample interaction matrices");
  add_common(inter_cmd, inter_opts.common);
  inter_cmd->add_option("--max-rows", inter_opts.max_rows,
                        "explain at most this many samples");

  GenOpts gen_opts;
  CLI::App* gen_cmd = app.add_subcommand("gen", "generate random models or datasets");
  gen_cmd->add_option("what", gen_opts.what, "model | data")->required();
  gen_cmd->add_option("-o,--output", gen_opts.output, "output path");
  gen_cmd->add_option("--trees", gen_opts.trees, "tree count");
  gen_cmd->add_option("--features", gen_opts.features, "feature count");
  gen_cmd->add_option("--depth", gen_opts.depth, "max depth");
  gen_cmd->add_option("--rows", gen_opts.rows, "row count (data)");
  gen_cmd->add_option("--missing", gen_opts.missing, "missing-cell probability (data)");
  gen_cmd->add_option("-m,--model", gen_opts.model_path,
                      "label generated rows with this model's margins");
  gen_cmd->add_option("--seed", gen_opts.seed, "random seed");

  MonitorOpts monitor_opts;
  CLI::App* monitor_cmd =
      app.add_subcommand("monitor", "SHAP-of-loss monitoring series over a stream");
  add_common(monitor_cmd, monitor_opts.common);
  monitor_cmd->add_option("--background", monitor_opts.background_path, "background CSV")
      ->required();
  monitor_cmd->add_option("--loss", monitor_opts.loss, "squared | logistic");
  monitor_cmd->add_option("--window", monitor_opts.window, "rolling window size");
  monitor_cmd->add_option("--references", monitor_opts.references,
                          "max background references used");

  AnalyzeOpts summarize_opts;
  CLI::App* summarize_cmd =
      app.add_subcommand("summarize", "summary-plot dots from treeshap attributions");
  add_common(summarize_cmd, summarize_opts.common);
  summarize_cmd->add_option("--max-rows", summarize_opts.max_rows, "row cap (0 = all)");

  AnalyzeOpts dep_opts;
  CLI::App* dep_cmd = app.add_subcommand("dependence", "dependence-plot triplets");
  add_common(dep_cmd, dep_opts.common);
  dep_cmd->add_option("--feature", dep_opts.feature, "feature index")->required();
  dep_cmd->add_option("--color", dep_opts.color, "color feature index (-1 = auto)");
  dep_cmd->add_option("--max-rows", dep_opts.max_rows, "row cap (0 = all)");

  AnalyzeOpts cluster_opts;
  CLI::App* cluster_cmd =
      app.add_subcommand("cluster", "supervised clustering of explanation rows");
  add_common(cluster_cmd, cluster_opts.common);
  cluster_cmd->add_option("--max-rows", cluster_opts.max_rows, "row cap (0 = all)");

  AnalyzeOpts pca_opts;
  CLI::App* pca_cmd = app.add_subcommand("pca", "explanation-space principal components");
  add_common(pca_cmd, pca_opts.common);
  pca_cmd->add_option("-k,--components", pca_opts.components, "component count");
  pca_cmd->add_option("--max-rows", pca_opts.max_rows, "row cap (0 = all)");

  BenchOpts bench_opts;
  CLI::App* bench_cmd = app.add_subcommand("bench", "benchmark suites");
  bench_cmd->add_option("--suite", bench_opts.suite,
                        "full|convergence|user-study|feature-selection");
  bench_cmd->add_option("-o,--output", bench_opts.output, "output path prefix");
  bench_cmd->add_option("--seed", bench_opts.seed, "random seed");
  bench_cmd->add_option("--threads", bench_opts.threads, "parallel fan-out width");
  bench_cmd->add_flag("--tile", bench_opts.tile, "also print the normalized tile");
  bench_cmd->add_option("--models", bench_opts.models,
                        "model retrainings averaged by the full suite");
  bench_cmd->add_option("--budgets", bench_opts.budgets, "convergence budgets");
  bench_cmd->add_option("--repetitions", bench_opts.repetitions, "convergence repetitions");
  bench_cmd->add_option("--datasets", bench_opts.fs_datasets, "feature-selection datasets");
  bench_cmd->add_option("--true-features", bench_opts.fs_true,
                        "feature-selection true feature count");
  bench_cmd->add_option("--fs-trees", bench_opts.fs_trees, "feature-selection tree count");
  bench_cmd->add_option("--interaction", bench_opts.fs_interaction, "min | product");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (predict_cmd->parsed()) return run_predict(predict_opts);
    if (explain_cmd->parsed()) return run_explain(explain_opts);
    if (inter_cmd->parsed()) return run_interactions(inter_opts);
    if (gen_cmd->parsed()) return run_gen(gen_opts);
    if (monitor_cmd->parsed()) return run_monitor(monitor_opts);
    if (summarize_cmd->parsed()) return run_summarize(summarize_opts);
    if (dep_cmd->parsed()) return run_dependence(dep_opts);
    if (cluster_cmd->parsed()) return run_cluster(cluster_opts);
    if (pca_cmd->parsed()) return run_pca(pca_opts);
    if (bench_cmd->parsed()) return run_bench(bench_opts);
  } catch (const parse_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const validation_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const dimension_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::domain_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "runtime failure: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
