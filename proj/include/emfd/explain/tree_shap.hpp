#pragma once

// Exact path-dependent SHAP values and SHAP interaction values for tree
// ensembles. Runs in O(leaves * depth^2) per tree and instance; interaction
// matrices repeat the pass with each used feature conditioned on/off.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "emfd/error.hpp"
#include "emfd/learn/tree.hpp"

namespace emfd::explain {

/// base_value + sum(phi) reproduces the model prediction.
struct Attribution {
  double base_value = 0.0;
  std::vector<double> phi;
};

/// F x F Shapley interaction values, row-major; diagonal holds main effects.
class InteractionMatrix {
 public:
  InteractionMatrix() = default;
  explicit InteractionMatrix(std::size_t n) : n_(n), values_(n * n, 0.0) {}

  std::size_t size() const { return n_; }
  double operator()(std::size_t i, std::size_t j) const { return values_[i * n_ + j]; }
  double& operator()(std::size_t i, std::size_t j) { return values_[i * n_ + j]; }
  std::span<const double> row(std::size_t i) const { return {values_.data() + i * n_, n_}; }

 private:
  std::size_t n_ = 0;
  std::vector<double> values_;
};

namespace detail {

struct PathElement {
  int feature = -1;
  double zero_fraction = 0.0;
  double one_fraction = 0.0;
  double weight = 0.0;
};

// Adds a feature to the path, updating the permutation weights of all
// subset sizes.
inline void extend_path(PathElement* path, int depth, double zero, double one, int feature) {
  path[depth] = {feature, zero, one, depth == 0 ? 1.0 : 0.0};
  const double d1 = depth + 1;
  for (int i = depth - 1; i >= 0; --i) {
    path[i + 1].weight += one * path[i].weight * (i + 1) / d1;
    path[i].weight = zero * path[i].weight * (depth - i) / d1;
  }
}

// Inverse of extend_path for the element at `index`.
inline void unwind_path(PathElement* path, int depth, int index) {
  const double one = path[index].one_fraction;
  const double zero = path[index].zero_fraction;
  const double d1 = depth + 1;
  double next = path[depth].weight;
  for (int i = depth - 1; i >= 0; --i) {
    if (one != 0.0) {
      const double tmp = path[i].weight;
      path[i].weight = next * d1 / ((i + 1) * one);
      next = tmp - path[i].weight * zero * (depth - i) / d1;
    } else {
      path[i].weight = path[i].weight * d1 / (zero * (depth - i));
    }
  }
  for (int i = index; i < depth; ++i) {
    path[i].feature = path[i + 1].feature;
    path[i].zero_fraction = path[i + 1].zero_fraction;
    path[i].one_fraction = path[i + 1].one_fraction;
  }
}

// Total permutation weight of the path with element `index` removed.
inline double unwound_path_sum(const PathElement* path, int depth, int index) {
  const double one = path[index].one_fraction;
  const double zero = path[index].zero_fraction;
  const double d1 = depth + 1;
  double next = path[depth].weight;
  double total = 0.0;
  for (int i = depth - 1; i >= 0; --i) {
    if (one != 0.0) {
      const double tmp = next * d1 / ((i + 1) * one);
      total += tmp;
      next = path[i].weight - tmp * zero * (depth - i) / d1;
    } else {
      total += path[i].weight * d1 / (zero * (depth - i));
    }
  }
  return total;
}

enum class Condition { none, present, absent };

class TreeShapRunner {
 public:
  TreeShapRunner(const learn::Tree& tree, std::span<const double> x, std::span<double> phi, double scale,
                 Condition condition = Condition::none, int condition_feature = -1)
      : tree_(tree), x_(x), phi_(phi), scale_(scale), condition_(condition), condition_feature_(condition_feature) {
    const int depth = tree.depth();
    stride_ = depth + 2;
    buffer_.resize(static_cast<std::size_t>(2 * (depth + 1) * stride_));
  }

  void run() {
    PathElement* root = segment(0, 0);
    extend_path(root, 0, 1.0, 1.0, -1);
    recurse(0, root, 0, 0, scale_);
  }

 private:
  PathElement* segment(int level, int which) {
    return buffer_.data() + static_cast<std::ptrdiff_t>((2 * level + which) * stride_);
  }

  void recurse(int node_index, const PathElement* path_in, int depth, int level, double condition_fraction) {
    if (condition_fraction == 0.0) return;
    const learn::TreeNode& node = tree_.node(node_index);
    if (node.is_leaf()) {
      for (int i = 1; i <= depth; ++i) {
        const double w = unwound_path_sum(path_in, depth, i);
        const PathElement& el = path_in[i];
        phi_[static_cast<std::size_t>(el.feature)] +=
            w * (el.one_fraction - el.zero_fraction) * node.value * condition_fraction;
      }
      return;
    }
    if (!(node.cover > 0.0)) throw NumericError("internal tree node with zero cover");

    PathElement* path = segment(level, 0);
    std::copy(path_in, path_in + depth + 1, path);
    int d = depth;

    const bool go_left = x_[static_cast<std::size_t>(node.feature)] < node.threshold;
    const int hot = go_left ? node.left : node.right;
    const int cold = go_left ? node.right : node.left;
    const double hot_fraction = tree_.node(hot).cover / node.cover;
    const double cold_fraction = tree_.node(cold).cover / node.cover;

    if (node.feature == condition_feature_) {
      if (condition_ == Condition::present) {
        recurse(hot, path, d, level + 1, condition_fraction);
      } else {
        recurse(hot, path, d, level + 1, condition_fraction * hot_fraction);
        recurse(cold, path, d, level + 1, condition_fraction * cold_fraction);
      }
      return;
    }

    double incoming_zero = 1.0, incoming_one = 1.0;
    for (int k = 1; k <= d; ++k) {
      if (path[k].feature == node.feature) {
        incoming_zero = path[k].zero_fraction;
        incoming_one = path[k].one_fraction;
        unwind_path(path, d, k);
        --d;
        break;
      }
    }

    PathElement* child = segment(level, 1);
    const double zeros[2] = {incoming_zero * hot_fraction, incoming_zero * cold_fraction};
    const double ones[2] = {incoming_one, 0.0};
    const int children[2] = {hot, cold};
    for (int c = 0; c < 2; ++c) {
      // A branch that is unreachable both with and without the feature adds nothing.
      if (zeros[c] == 0.0 && ones[c] == 0.0) continue;
      std::copy(path, path + d + 1, child);
      extend_path(child, d + 1, zeros[c], ones[c], node.feature);
      recurse(children[c], child, d + 1, level + 1, condition_fraction);
    }
  }

  const learn::Tree& tree_;
  std::span<const double> x_;
  std::span<double> phi_;
  double scale_;
  Condition condition_;
  int condition_feature_;
  int stride_ = 0;
  std::vector<PathElement> buffer_;
};

inline double expected_value(const learn::Tree& tree, int i) {
  const learn::TreeNode& n = tree.node(i);
  if (n.is_leaf()) return n.value;
  if (!(n.cover > 0.0)) throw NumericError("internal tree node with zero cover");
  return (tree.node(n.left).cover * expected_value(tree, n.left) +
          tree.node(n.right).cover * expected_value(tree, n.right)) /
         n.cover;
}

inline void check_row(const learn::TreeEnsemble& model, std::span<const double> row) {
  if (row.size() != model.num_features()) {
    throw InputError("row has " + std::to_string(row.size()) + " features, model expects " +
                     std::to_string(model.num_features()));
  }
  for (double v : row) {
    if (!std::isfinite(v)) throw InputError("non-finite feature value passed to explainer");
  }
}

inline std::vector<int> used_features(const learn::Tree& tree) {
  std::vector<int> out;
  for (const auto& n : tree.nodes()) {
    if (!n.is_leaf()) out.push_back(n.feature);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace detail

/// Expected model output under the training (cover) distribution.
inline double expected_value(const learn::TreeEnsemble& model) {
  double sum = 0.0;
  for (const auto& t : model.trees) sum += detail::expected_value(t, 0);
  return model.base_score + model.tree_scale * sum;
}

/// Shapley values with v(S) = E[f(x) | x_S] under path-dependent cover weighting.
inline Attribution shap_values(const learn::TreeEnsemble& model, std::span<const double> row) {
  detail::check_row(model, row);
  Attribution a;
  a.phi.assign(model.num_features(), 0.0);
  a.base_value = expected_value(model);
  for (const auto& t : model.trees) {
    detail::TreeShapRunner(t, row, a.phi, model.tree_scale).run();
  }
  return a;
}

/// Shapley interaction index for every feature pair. Off-diagonals are half
/// the change in phi_i between feature j forced present and forced absent;
/// the diagonal is the residual that makes each row sum to phi_i.
inline InteractionMatrix shap_interactions(const learn::TreeEnsemble& model, std::span<const double> row,
                                           Attribution* attribution_out = nullptr) {
  const Attribution a = shap_values(model, row);
  const std::size_t F = model.num_features();
  InteractionMatrix raw(F);
  std::vector<double> on(F), off(F);
  for (const auto& t : model.trees) {
    for (int j : detail::used_features(t)) {
      std::fill(on.begin(), on.end(), 0.0);
      std::fill(off.begin(), off.end(), 0.0);
      detail::TreeShapRunner(t, row, on, model.tree_scale, detail::Condition::present, j).run();
      detail::TreeShapRunner(t, row, off, model.tree_scale, detail::Condition::absent, j).run();
      const auto fj = static_cast<std::size_t>(j);
      for (std::size_t i = 0; i < F; ++i) {
        if (i != fj) raw(i, fj) += 0.5 * (on[i] - off[i]);
      }
    }
  }
  InteractionMatrix m(F);
  for (std::size_t i = 0; i < F; ++i) {
    for (std::size_t j = i + 1; j < F; ++j) {
      const double v = 0.5 * (raw(i, j) + raw(j, i));
      m(i, j) = v;
      m(j, i) = v;
    }
  }
  for (std::size_t i = 0; i < F; ++i) {
    double off_sum = 0.0;
    for (std::size_t j = 0; j < F; ++j) {
      if (j != i) off_sum += m(i, j);
    }
    m(i, i) = a.phi[i] - off_sum;
  }
  if (attribution_out) *attribution_out = a;
  return m;
}

}  // namespace emfd::explain
