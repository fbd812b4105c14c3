#pragma once

#include <numeric>
#include <string>
#include <vector>

#include "arbor/model.hpp"

namespace arbor {

enum class Method {
  kTreeShap,
  kSaabas,
  kBrute,
  kIndep,
  kSampling,
  kKernel,
  kGain,
  kPermutation,
};

inline const char* method_name(Method m) {
  switch (m) {
    case Method::kTreeShap: return "treeshap";
    case Method::kSaabas: return "saabas";
    case Method::kBrute: return "brute";
    case Method::kIndep: return "indep";
    case Method::kSampling: return "sampling";
    case Method::kKernel: return "kernel";
    case Method::kGain: return "gain";
    case Method::kPermutation: return "permutation";
  }
  return "unknown";
}

/// Base value phi_0 plus one attribution per feature for a single sample, in
/// model-output units. Locally accurate methods satisfy
/// base + sum(values) == f(x).
struct Explanation {
  double base = 0.0;
  std::vector<double> values;
  Method method = Method::kTreeShap;
  int sample_index = -1;

  double total() const {
    return base + std::accumulate(values.begin(), values.end(), 0.0);
  }
};

/// (M+1)x(M+1) matrix of main effects (diagonal) and pairwise interaction
/// effects (off-diagonal). Slot [0][0] carries f_x(empty set) and the bias
/// row/column is otherwise zero, so the whole matrix sums to f(x).
struct InteractionExplanation {
  int num_features = 0;
  std::vector<double> cells;  // (M+1)^2 row-major
  int sample_index = -1;

  explicit InteractionExplanation(int m = 0)
      : num_features(m), cells(static_cast<std::size_t>(m + 1) * (m + 1), 0.0) {}

  // i, j in 0..M with 0 the bias slot; features are 1-shifted.
  double& at(int i, int j) { return cells[static_cast<std::size_t>(i) * (num_features + 1) + j]; }
  double at(int i, int j) const {
    return cells[static_cast<std::size_t>(i) * (num_features + 1) + j];
  }
  double& feature_at(int i, int j) { return at(i + 1, j + 1); }
  double feature_at(int i, int j) const { return at(i + 1, j + 1); }

  double total() const { return std::accumulate(cells.begin(), cells.end(), 0.0); }

  /// Row sum of a feature row: reproduces that feature's SHAP value.
  double row_sum(int feature) const {
    double s = 0.0;
    for (int j = 0; j <= num_features; ++j) s += at(feature + 1, j);
    return s;
  }
};

/// Many local explanations stacked into one matrix, aligned with the rows
/// they explain. All global analyses consume this and nothing else.
struct ExplanationMatrix {
  std::size_t num_rows = 0;
  std::size_t num_features = 0;
  std::vector<double> values;          // num_rows * num_features attributions
  std::vector<double> bases;           // one per row
  std::vector<double> feature_values;  // aligned inputs, num_rows * num_features
  std::vector<double> labels;          // optional
  std::vector<double> timestamps;      // optional
  Method method = Method::kTreeShap;

  std::span<const double> row(std::size_t i) const {
    return {values.data() + i * num_features, num_features};
  }
  std::span<const double> inputs(std::size_t i) const {
    return {feature_values.data() + i * num_features, num_features};
  }
  double value(std::size_t i, std::size_t j) const { return values[i * num_features + j]; }
  double input(std::size_t i, std::size_t j) const {
    return feature_values[i * num_features + j];
  }
};

}  // namespace arbor
