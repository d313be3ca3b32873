#pragma once

// Reference Shapley attributions by direct subset enumeration. Exponential in
// the feature count; used to check the polynomial explainer.

#include <bit>
#include <cstdint>
#include <span>
#include <vector>

#include "emfd/error.hpp"
#include "emfd/explain/tree_shap.hpp"
#include "emfd/learn/tree.hpp"

namespace emfd::explain {

inline constexpr std::size_t kBruteForceMaxFeatures = 15;

namespace detail {

// E[tree(x) | x_S]: follow x on features in S, otherwise cover-weighted average.
inline double conditional_value(const learn::Tree& tree, int i, std::span<const double> x, std::uint32_t mask) {
  const learn::TreeNode& n = tree.node(i);
  if (n.is_leaf()) return n.value;
  if (mask & (1u << n.feature)) {
    return conditional_value(tree, x[static_cast<std::size_t>(n.feature)] < n.threshold ? n.left : n.right, x, mask);
  }
  if (!(n.cover > 0.0)) throw NumericError("internal tree node with zero cover");
  return (tree.node(n.left).cover * conditional_value(tree, n.left, x, mask) +
          tree.node(n.right).cover * conditional_value(tree, n.right, x, mask)) /
         n.cover;
}

inline std::vector<double> subset_values(const learn::TreeEnsemble& model, std::span<const double> x) {
  const std::size_t F = model.num_features();
  if (F > kBruteForceMaxFeatures) {
    throw UsageError("brute-force Shapley refuses " + std::to_string(F) + " features (limit " +
                     std::to_string(kBruteForceMaxFeatures) + ")");
  }
  check_row(model, x);
  std::vector<double> v(std::size_t{1} << F);
  for (std::uint32_t mask = 0; mask < v.size(); ++mask) {
    double sum = 0.0;
    for (const auto& t : model.trees) sum += conditional_value(t, 0, x, mask);
    v[mask] = model.base_score + model.tree_scale * sum;
  }
  return v;
}

inline std::vector<double> factorials(std::size_t n) {
  std::vector<double> f(n + 1, 1.0);
  for (std::size_t i = 1; i <= n; ++i) f[i] = f[i - 1] * static_cast<double>(i);
  return f;
}

}  // namespace detail

inline Attribution brute_force_shap(const learn::TreeEnsemble& model, std::span<const double> row) {
  const auto v = detail::subset_values(model, row);
  const std::size_t F = model.num_features();
  const auto fact = detail::factorials(F);
  Attribution a;
  a.base_value = v[0];
  a.phi.assign(F, 0.0);
  for (std::size_t i = 0; i < F; ++i) {
    const std::uint32_t bit = 1u << i;
    for (std::uint32_t mask = 0; mask < v.size(); ++mask) {
      if (mask & bit) continue;
      const auto s = static_cast<std::size_t>(std::popcount(mask));
      const double w = fact[s] * fact[F - s - 1] / fact[F];
      a.phi[i] += w * (v[mask | bit] - v[mask]);
    }
  }
  return a;
}

/// Shapley interaction index by enumeration; diagonal is phi_i minus the
/// off-diagonal row sum.
inline InteractionMatrix brute_force_interactions(const learn::TreeEnsemble& model, std::span<const double> row) {
  const auto v = detail::subset_values(model, row);
  const std::size_t F = model.num_features();
  const auto fact = detail::factorials(F);
  const Attribution a = brute_force_shap(model, row);
  InteractionMatrix m(F);
  for (std::size_t i = 0; i < F; ++i) {
    for (std::size_t j = i + 1; j < F; ++j) {
      const std::uint32_t bi = 1u << i, bj = 1u << j;
      double total = 0.0;
      for (std::uint32_t mask = 0; mask < v.size(); ++mask) {
        if (mask & (bi | bj)) continue;
        const auto s = static_cast<std::size_t>(std::popcount(mask));
        const double w = fact[s] * fact[F - s - 2] / (2.0 * fact[F - 1]);
        total += w * (v[mask | bi | bj] - v[mask | bi] - v[mask | bj] + v[mask]);
      }
      m(i, j) = total;
      m(j, i) = total;
    }
  }
  for (std::size_t i = 0; i < F; ++i) {
    double off = 0.0;
    for (std::size_t j = 0; j < F; ++j) {
      if (j != i) off += m(i, j);
    }
    m(i, i) = a.phi[i] - off;
  }
  return m;
}

}  // namespace emfd::explain
