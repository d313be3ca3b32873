#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "emfd/error.hpp"
#include "emfd/learn/dataset.hpp"
#include "emfd/learn/histogram.hpp"
#include "emfd/learn/tree.hpp"

namespace emfd::learn {

struct ForestParams {
  int n_trees = 100;
  int max_depth = 0;  // 0 = grow until leaves are pure or min_child_cover binds
  double row_fraction = 1.0;
  bool bootstrap = true;  // with replacement; false draws without replacement
  double min_child_cover = 1.0;
  int histogram_bins = 64;
  std::uint64_t seed = 0;
};

/// Bagged variance-reduction trees. Encoded as base 0, tree_scale 1/n_trees,
/// leaves holding the mean target of their sample rows.
inline TreeEnsemble train_forest(const Dataset& train, const ForestParams& params) {
  if (params.n_trees < 1) throw UsageError("forest: n_trees must be >= 1");
  if (!(params.row_fraction > 0.0 && params.row_fraction <= 1.0)) {
    throw UsageError("forest: row_fraction must lie in (0,1]");
  }
  const std::size_t n = train.rows();
  if (n < 2) throw InputError("forest: need at least 2 training rows");

  TreeEnsemble model;
  model.kind = "forest";
  model.feature_names = train.schema().names();
  model.base_score = 0.0;
  model.tree_scale = 1.0 / static_cast<double>(params.n_trees);

  FeatureBinner binner(train, params.histogram_bins);
  // With g = -y and no penalty the split gain is the variance reduction and
  // the leaf value -G/H is the sample mean.
  std::vector<double> grad(n);
  for (std::size_t i = 0; i < n; ++i) grad[i] = -train.targets()[i];
  GrowParams grow{params.max_depth, 0.0, 0.0, params.min_child_cover, 1.0};

  const auto sample_size =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(params.row_fraction * static_cast<double>(n))));
  std::mt19937_64 rng(params.seed);
  std::vector<std::uint32_t> pool(n);
  for (std::size_t i = 0; i < n; ++i) pool[i] = static_cast<std::uint32_t>(i);

  for (int t = 0; t < params.n_trees; ++t) {
    std::vector<std::uint32_t> rows;
    if (params.bootstrap) {
      std::uniform_int_distribution<std::uint32_t> pick(0, static_cast<std::uint32_t>(n - 1));
      rows.resize(sample_size);
      for (auto& r : rows) r = pick(rng);
    } else {
      rows = pool;
      if (sample_size < n) {
        std::shuffle(rows.begin(), rows.end(), rng);
        rows.resize(sample_size);
      }
    }
    std::sort(rows.begin(), rows.end());
    detail::TreeGrower grower(binner, grad, grow);
    model.trees.push_back(grower.grow(std::move(rows)));
  }
  return model;
}

}  // namespace emfd::learn
