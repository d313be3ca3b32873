#pragma once

// Additive regression-tree ensembles shared by the learners and the explainer,
// with a versioned JSON serialization.

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "emfd/error.hpp"

namespace emfd::learn {

struct TreeNode {
  int feature = -1;  // split feature, -1 for a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;  // leaf output (already multiplied by any shrinkage)
  double cover = 0.0;  // training weight reaching the node

  bool is_leaf() const { return left < 0; }
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

/// Flat binary tree, root at index 0. Go left when x[feature] < threshold.
class Tree {
 public:
  Tree() = default;
  explicit Tree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {}

  const std::vector<TreeNode>& nodes() const { return nodes_; }
  const TreeNode& node(int i) const { return nodes_[static_cast<std::size_t>(i)]; }
  std::size_t size() const { return nodes_.size(); }

  int add_leaf(double value, double cover) {
    nodes_.push_back({-1, 0.0, -1, -1, value, cover});
    return static_cast<int>(nodes_.size() - 1);
  }

  /// Converts leaf `i` into a split; children are appended.
  std::pair<int, int> split(int i, int feature, double threshold, double left_cover, double right_cover) {
    const int l = add_leaf(0.0, left_cover);
    const int r = add_leaf(0.0, right_cover);
    TreeNode& n = nodes_[static_cast<std::size_t>(i)];
    n.feature = feature;
    n.threshold = threshold;
    n.left = l;
    n.right = r;
    n.value = 0.0;
    return {l, r};
  }

  void set_leaf_value(int i, double v) { nodes_[static_cast<std::size_t>(i)].value = v; }

  int leaf_index(std::span<const double> x) const {
    int i = 0;
    while (!nodes_[static_cast<std::size_t>(i)].is_leaf()) {
      const TreeNode& n = nodes_[static_cast<std::size_t>(i)];
      i = x[static_cast<std::size_t>(n.feature)] < n.threshold ? n.left : n.right;
    }
    return i;
  }

  double predict(std::span<const double> x) const { return node(leaf_index(x)).value; }

  int depth() const { return nodes_.empty() ? 0 : depth_from(0); }

  /// Structural checks: children in range and after their parent, both present
  /// or both absent, finite values, split features below `num_features`.
  void validate(std::size_t num_features) const {
    if (nodes_.empty()) throw NumericError("tree has no nodes");
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      const TreeNode& n = nodes_[i];
      if (!std::isfinite(n.value) || !std::isfinite(n.cover) || !std::isfinite(n.threshold) || n.cover < 0.0) {
        throw NumericError("tree node " + std::to_string(i) + " has a non-finite or negative field");
      }
      const bool has_l = n.left >= 0, has_r = n.right >= 0;
      if (has_l != has_r) throw NumericError("tree node " + std::to_string(i) + " has only one child");
      if (has_l) {
        const auto size = static_cast<int>(nodes_.size());
        if (n.left <= static_cast<int>(i) || n.right <= static_cast<int>(i) || n.left >= size || n.right >= size) {
          throw NumericError("tree node " + std::to_string(i) + " has a bad child index");
        }
        if (n.feature < 0 || static_cast<std::size_t>(n.feature) >= num_features) {
          throw NumericError("tree node " + std::to_string(i) + " splits on an unknown feature");
        }
      }
    }
  }

  /// Structural equality from the root; node storage order is ignored.
  friend bool operator==(const Tree& a, const Tree& b) {
    if (a.nodes_.empty() || b.nodes_.empty()) return a.nodes_.empty() && b.nodes_.empty();
    return a.size() == b.size() && same_subtree(a, 0, b, 0);
  }

 private:
  static bool same_subtree(const Tree& a, int i, const Tree& b, int j) {
    const TreeNode& x = a.node(i);
    const TreeNode& y = b.node(j);
    if (x.is_leaf() != y.is_leaf() || x.cover != y.cover) return false;
    if (x.is_leaf()) return x.value == y.value;
    return x.feature == y.feature && x.threshold == y.threshold && same_subtree(a, x.left, b, y.left) &&
           same_subtree(a, x.right, b, y.right);
  }

  int depth_from(int i) const {
    const TreeNode& n = node(i);
    if (n.is_leaf()) return 0;
    return 1 + std::max(depth_from(n.left), depth_from(n.right));
  }

  std::vector<TreeNode> nodes_;
};

/// prediction(x) = base_score + tree_scale * sum_t tree_t(x)
/// Boosted models use tree_scale 1 with shrinkage folded into the leaves;
/// forests use base_score 0 and tree_scale 1/n_trees.
struct TreeEnsemble {
  std::string kind = "gbt";
  std::vector<std::string> feature_names;
  double base_score = 0.0;
  double tree_scale = 1.0;
  double learning_rate = 1.0;  // informational
  std::vector<Tree> trees;

  std::size_t num_features() const { return feature_names.size(); }

  void validate() const {
    if (!std::isfinite(base_score) || !std::isfinite(tree_scale)) throw NumericError("ensemble has non-finite scalars");
    for (const auto& t : trees) t.validate(num_features());
  }

  friend bool operator==(const TreeEnsemble&, const TreeEnsemble&) = default;
};

inline double predict(const TreeEnsemble& model, std::span<const double> row) {
  if (row.size() != model.num_features()) {
    throw InputError("row has " + std::to_string(row.size()) + " features, model expects " +
                     std::to_string(model.num_features()));
  }
  for (double v : row) {
    if (!std::isfinite(v)) throw InputError("non-finite feature value passed to predict");
  }
  double sum = 0.0;
  for (const auto& t : model.trees) sum += t.predict(row);
  return model.base_score + model.tree_scale * sum;
}

inline constexpr int kModelFormatVersion = 1;

namespace detail {

inline nlohmann::ordered_json node_to_json(const Tree& tree, int i) {
  const TreeNode& n = tree.node(i);
  nlohmann::ordered_json j;
  j["cover"] = n.cover;
  if (n.is_leaf()) {
    j["value"] = n.value;
  } else {
    j["feature"] = n.feature;
    j["threshold"] = n.threshold;
    j["left"] = node_to_json(tree, n.left);
    j["right"] = node_to_json(tree, n.right);
  }
  return j;
}

inline void node_from_json(const nlohmann::json& j, std::vector<TreeNode>& nodes, int depth) {
  if (depth > 256) throw InputError("model tree nesting too deep");
  if (!j.is_object() || !j.contains("cover")) throw InputError("model node lacks 'cover'");
  const std::size_t self = nodes.size();
  nodes.emplace_back();
  nodes[self].cover = j.at("cover").get<double>();
  if (j.contains("value")) {
    if (j.contains("left") || j.contains("right")) throw InputError("model leaf has children");
    nodes[self].value = j.at("value").get<double>();
    return;
  }
  if (!j.contains("feature") || !j.contains("threshold") || !j.contains("left") || !j.contains("right")) {
    throw InputError("model split node is incomplete");
  }
  nodes[self].feature = j.at("feature").get<int>();
  nodes[self].threshold = j.at("threshold").get<double>();
  nodes[self].left = static_cast<int>(nodes.size());
  node_from_json(j.at("left"), nodes, depth + 1);
  nodes[self].right = static_cast<int>(nodes.size());
  node_from_json(j.at("right"), nodes, depth + 1);
}

}  // namespace detail

/// Trees are nested objects: splits carry feature/threshold/left/right/cover,
/// leaves carry value/cover.
inline nlohmann::ordered_json to_json(const TreeEnsemble& model) {
  nlohmann::ordered_json j;
  j["format_version"] = kModelFormatVersion;
  j["kind"] = model.kind;
  j["feature_names"] = model.feature_names;
  j["base_score"] = model.base_score;
  j["tree_scale"] = model.tree_scale;
  j["learning_rate"] = model.learning_rate;
  j["trees"] = nlohmann::ordered_json::array();
  for (const auto& t : model.trees) j["trees"].push_back(detail::node_to_json(t, 0));
  return j;
}

inline TreeEnsemble ensemble_from_json(const nlohmann::json& j) {
  try {
    if (!j.is_object()) throw InputError("model document is not an object");
    const int version = j.at("format_version").get<int>();
    if (version != kModelFormatVersion) {
      throw InputError("unsupported model format_version " + std::to_string(version));
    }
    TreeEnsemble m;
    m.kind = j.at("kind").get<std::string>();
    m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    m.base_score = j.at("base_score").get<double>();
    m.tree_scale = j.at("tree_scale").get<double>();
    m.learning_rate = j.value("learning_rate", 1.0);
    for (const auto& tj : j.at("trees")) {
      std::vector<TreeNode> nodes;
      detail::node_from_json(tj, nodes, 0);
      m.trees.emplace_back(std::move(nodes));
    }
    m.validate();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed model JSON: ") + e.what());
  }
}

}  // namespace emfd::learn
