#pragma once

// Second-order gradient boosting for squared error (unit hessians).

#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <vector>

#include "emfd/error.hpp"
#include "emfd/learn/dataset.hpp"
#include "emfd/learn/histogram.hpp"
#include "emfd/learn/tree.hpp"

namespace emfd::learn {

struct GbtParams {
  int n_trees = 200;
  int max_depth = 6;
  double learning_rate = 0.1;
  double l2_leaf_penalty = 1.0;
  double split_gain_threshold = 0.0;
  double min_child_cover = 5.0;
  int histogram_bins = 64;
  /// Fraction of rows drawn (without replacement) per round; 1 uses every row.
  double subsample = 1.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_trees < 1) throw UsageError("gbt: n_trees must be >= 1");
    if (max_depth < 1) throw UsageError("gbt: max_depth must be >= 1");
    if (!(learning_rate > 0.0 && learning_rate <= 1.0)) throw UsageError("gbt: learning_rate must lie in (0,1]");
    if (!(l2_leaf_penalty >= 0.0)) throw UsageError("gbt: l2_leaf_penalty must be >= 0");
    if (!(split_gain_threshold >= 0.0)) throw UsageError("gbt: split_gain_threshold must be >= 0");
    if (!(min_child_cover >= 0.0)) throw UsageError("gbt: min_child_cover must be >= 0");
    if (!(subsample > 0.0 && subsample <= 1.0)) throw UsageError("gbt: subsample must lie in (0,1]");
  }
};

/// Optional per-round hook, called with the ensemble after each added tree.
using RoundCallback = std::function<void(const TreeEnsemble&)>;

/// Fits trees to g = prediction - target with unit hessians. Leaf values are
/// -G/(H+lambda) scaled by the learning rate; base score is the target mean.
/// Boosting stops early once the root can no longer be split.
inline TreeEnsemble train_gbt(const Dataset& train, const GbtParams& params, const RoundCallback& on_round = {}) {
  params.validate();
  const std::size_t n = train.rows();
  if (n < 2) throw InputError("gbt: need at least 2 training rows");

  TreeEnsemble model;
  model.kind = "gbt";
  model.feature_names = train.schema().names();
  model.learning_rate = params.learning_rate;
  model.tree_scale = 1.0;
  const auto targets = train.targets();
  model.base_score = std::accumulate(targets.begin(), targets.end(), 0.0) / static_cast<double>(n);

  FeatureBinner binner(train, params.histogram_bins);
  GrowParams grow{params.max_depth, params.l2_leaf_penalty, params.split_gain_threshold, params.min_child_cover,
                  params.learning_rate};
  std::vector<double> pred(n, model.base_score);
  std::vector<double> grad(n);
  std::vector<std::uint32_t> all_rows(n);
  std::iota(all_rows.begin(), all_rows.end(), 0u);
  std::mt19937_64 rng(params.seed);
  const auto sample_size =
      std::max<std::size_t>(2, static_cast<std::size_t>(std::ceil(params.subsample * static_cast<double>(n))));

  for (int round = 0; round < params.n_trees; ++round) {
    for (std::size_t i = 0; i < n; ++i) grad[i] = pred[i] - targets[i];
    std::vector<std::uint32_t> rows = all_rows;
    if (sample_size < n) {
      std::shuffle(rows.begin(), rows.end(), rng);
      rows.resize(sample_size);
      std::sort(rows.begin(), rows.end());
    }
    detail::TreeGrower grower(binner, grad, grow);
    Tree tree = grower.grow(std::move(rows));
    if (tree.size() == 1) break;
    for (std::size_t i = 0; i < n; ++i) pred[i] += tree.predict(train.row(i));
    model.trees.push_back(std::move(tree));
    if (on_round) on_round(model);
  }
  return model;
}

/// Constant model predicting the training mean.
inline TreeEnsemble train_constant(const Dataset& train) {
  if (train.rows() < 1) throw InputError("baseline: empty training set");
  TreeEnsemble model;
  model.kind = "constant";
  model.feature_names = train.schema().names();
  const auto t = train.targets();
  model.base_score = std::accumulate(t.begin(), t.end(), 0.0) / static_cast<double>(t.size());
  return model;
}

}  // namespace emfd::learn
