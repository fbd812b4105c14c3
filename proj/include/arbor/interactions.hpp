#pragma once

#include <span>
#include <vector>

#include "arbor/explanation.hpp"
#include "arbor/model.hpp"
#include "arbor/parallel.hpp"
#include "arbor/treeshap.hpp"

namespace arbor {

namespace detail {

inline std::vector<char> features_used(const TreeEnsemble& ens) {
  std::vector<char> used(ens.num_features, 0);
  for (const Tree& t : ens.trees)
    for (int j = 0; j < t.num_nodes(); ++j)
      if (!t.is_leaf(j)) used[t.split_feature[j]] = 1;
  return used;
}

}  // namespace detail

/// Fast SHAP interaction matrix: for every feature j the subset-path
/// recursion runs twice, once with j's splits forced along x's branch
/// ("present") and once with them cover-averaged ("absent"), j excluded from
/// the player set. Each off-diagonal pair is half the difference, computed
/// once and mirrored; the diagonal closes each row to the plain SHAP value
/// and slot [0][0] carries f_x(empty), so the matrix sums to f(x). O(TMLD^2).
inline InteractionExplanation shap_interaction_values(const TreeEnsemble& ens,
                                                      std::span<const double> x,
                                                      int threads = 1) {
  const int m = ens.num_features;
  InteractionExplanation out(m);

  std::vector<double> phi(m, 0.0);
  tree_shap_conditional(ens, x, 0, -1, phi);

  const std::vector<char> used = detail::features_used(ens);
  // conditioning on a feature no tree splits on changes nothing (missingness),
  // so those columns stay zero without a traversal
  std::vector<int> active;
  for (int j = 0; j < m; ++j)
    if (used[j]) active.push_back(j);

  std::vector<std::vector<double>> halves(active.size());
  parallel_for(active.size(), threads, [&](std::size_t a) {
    const int j = active[a];
    std::vector<double> present(m, 0.0), absent(m, 0.0);
    tree_shap_conditional(ens, x, +1, j, present);
    tree_shap_conditional(ens, x, -1, j, absent);
    halves[a].assign(m, 0.0);
    for (int i = 0; i < m; ++i)
      if (i != j) halves[a][i] = 0.5 * (present[i] - absent[i]);
  });
  for (std::size_t a = 0; a < active.size(); ++a) {
    const int j = active[a];
    for (int i = 0; i < j; ++i) {
      out.feature_at(i, j) = halves[a][i];
      out.feature_at(j, i) = halves[a][i];
    }
  }

  for (int i = 0; i < m; ++i) {
    double off = 0.0;
    for (int j = 0; j < m; ++j)
      if (j != i) off += out.feature_at(i, j);
    out.feature_at(i, i) = phi[i] - off;
  }
  out.at(0, 0) = expected_value(ens);
  return out;
}

}  // namespace arbor
