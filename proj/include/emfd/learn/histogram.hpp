#pragma once

// Histogram split finding shared by the boosted and bagged learners.

#include <algorithm>
#include <cstdint>
#include <span>
#include <vector>

#include "emfd/error.hpp"
#include "emfd/learn/dataset.hpp"
#include "emfd/learn/tree.hpp"

namespace emfd::learn {

/// Equal-frequency bin edges per feature, computed from training data. A value
/// x falls into bin `number of cuts <= x`, so bin b < c+1 iff x < cuts[c].
class FeatureBinner {
 public:
  FeatureBinner(const Dataset& ds, int max_bins) {
    if (max_bins < 2 || max_bins > 256) throw UsageError("histogram_bins must lie in [2, 256]");
    const std::size_t n = ds.rows();
    cuts_.resize(ds.features());
    std::vector<double> column(n);
    for (std::size_t f = 0; f < ds.features(); ++f) {
      for (std::size_t i = 0; i < n; ++i) column[i] = ds.value(i, f);
      std::sort(column.begin(), column.end());
      auto& cuts = cuts_[f];
      std::vector<double> unique;
      std::unique_copy(column.begin(), column.end(), std::back_inserter(unique));
      if (unique.size() <= static_cast<std::size_t>(max_bins)) {
        cuts.assign(unique.begin() + (unique.empty() ? 0 : 1), unique.end());
      } else {
        for (int k = 1; k < max_bins; ++k) {
          const double q = column[static_cast<std::size_t>(k) * n / static_cast<std::size_t>(max_bins)];
          if (q > column.front() && (cuts.empty() || q > cuts.back())) cuts.push_back(q);
        }
      }
    }
    bins_.resize(n * ds.features());
    for (std::size_t f = 0; f < ds.features(); ++f) {
      const auto& cuts = cuts_[f];
      for (std::size_t i = 0; i < n; ++i) {
        bins_[f * n + i] = static_cast<std::uint8_t>(
            std::upper_bound(cuts.begin(), cuts.end(), ds.value(i, f)) - cuts.begin());
      }
    }
    rows_ = n;
  }

  std::size_t features() const { return cuts_.size(); }
  std::size_t rows() const { return rows_; }
  const std::vector<double>& cuts(std::size_t f) const { return cuts_[f]; }
  std::uint8_t bin(std::size_t f, std::size_t row) const { return bins_[f * rows_ + row]; }

 private:
  std::vector<std::vector<double>> cuts_;
  std::vector<std::uint8_t> bins_;  // feature-major
  std::size_t rows_ = 0;
};

struct GrowParams {
  int max_depth = 6;  // <= 0 means unlimited
  double l2_leaf_penalty = 1.0;
  double split_gain_threshold = 0.0;
  double min_child_cover = 1.0;
  double leaf_scale = 1.0;  // shrinkage applied to leaf values
};

namespace detail {

struct SplitCandidate {
  double gain = 0.0;
  int feature = -1;
  int cut = -1;
  double g_left = 0.0;
  double h_left = 0.0;
};

class TreeGrower {
 public:
  TreeGrower(const FeatureBinner& binner, std::span<const double> grad, const GrowParams& params)
      : binner_(binner), grad_(grad), params_(params) {}

  /// Grows one tree over `rows` (duplicates allowed, each with unit hessian).
  Tree grow(std::vector<std::uint32_t> rows) {
    tree_ = Tree();
    double g = 0.0;
    for (std::uint32_t r : rows) g += grad_[r];
    const int root = tree_.add_leaf(0.0, static_cast<double>(rows.size()));
    expand(root, rows, g, static_cast<double>(rows.size()), 0);
    return std::move(tree_);
  }

 private:
  double score(double g, double h) const { return g * g / (h + params_.l2_leaf_penalty); }

  double leaf_value(double g, double h) const {
    const double denom = h + params_.l2_leaf_penalty;
    return denom > 0.0 ? -g / denom * params_.leaf_scale : 0.0;
  }

  SplitCandidate best_split(std::span<const std::uint32_t> rows, double g, double h) {
    SplitCandidate best;
    const double parent = score(g, h);
    for (std::size_t f = 0; f < binner_.features(); ++f) {
      const auto& cuts = binner_.cuts(f);
      if (cuts.empty()) continue;
      hist_g_.assign(cuts.size() + 1, 0.0);
      hist_h_.assign(cuts.size() + 1, 0.0);
      for (std::uint32_t r : rows) {
        const std::uint8_t b = binner_.bin(f, r);
        hist_g_[b] += grad_[r];
        hist_h_[b] += 1.0;
      }
      double gl = 0.0, hl = 0.0;
      for (std::size_t c = 0; c < cuts.size(); ++c) {
        gl += hist_g_[c];
        hl += hist_h_[c];
        const double gr = g - gl, hr = h - hl;
        if (hl < params_.min_child_cover || hr < params_.min_child_cover || hl <= 0.0 || hr <= 0.0) continue;
        const double gain = 0.5 * (score(gl, hl) + score(gr, hr) - parent) - params_.split_gain_threshold;
        // Strict comparison keeps the lowest feature, then the lowest threshold.
        if (gain > best.gain) best = {gain, static_cast<int>(f), static_cast<int>(c), gl, hl};
      }
    }
    return best;
  }

  void expand(int node, std::vector<std::uint32_t>& rows, double g, double h, int depth) {
    const bool depth_ok = params_.max_depth <= 0 || depth < params_.max_depth;
    SplitCandidate split;
    if (depth_ok && rows.size() >= 2) split = best_split(rows, g, h);
    if (split.feature < 0) {
      tree_.set_leaf_value(node, leaf_value(g, h));
      return;
    }
    const auto f = static_cast<std::size_t>(split.feature);
    const auto cut = static_cast<std::uint8_t>(split.cut);
    auto mid = std::stable_partition(rows.begin(), rows.end(),
                                     [&](std::uint32_t r) { return binner_.bin(f, r) <= cut; });
    std::vector<std::uint32_t> right(mid, rows.end());
    rows.erase(mid, rows.end());
    const double threshold = binner_.cuts(f)[static_cast<std::size_t>(split.cut)];
    auto [l, r] = tree_.split(node, split.feature, threshold, split.h_left, h - split.h_left);
    expand(l, rows, split.g_left, split.h_left, depth + 1);
    expand(r, right, g - split.g_left, h - split.h_left, depth + 1);
  }

  const FeatureBinner& binner_;
  std::span<const double> grad_;
  GrowParams params_;
  Tree tree_;
  std::vector<double> hist_g_;
  std::vector<double> hist_h_;
};

}  // namespace detail

}  // namespace emfd::learn
