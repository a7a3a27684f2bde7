#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

namespace jbshield {

/// One node of a binary decision tree. Internal nodes route
/// x[feature] <= threshold to the left child. Leaves carry a two-slot
/// payload: forests store {p_benign, p_jailbreak}, boosted trees store the
/// Newton leaf weight in slot 0.
struct TreeNode {
  std::int32_t feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  std::int32_t left = -1;
  std::int32_t right = -1;
  double gain = 0.0;  // split gain accepted at this node; 0 for leaves
  std::array<double, 2> value{0.0, 0.0};

  bool is_leaf() const { return feature < 0; }
};

struct DecisionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root
  int depth = 0;

  const TreeNode& route(std::span<const float> x) const;

  /// Structural recompute of the deepest node, for depth-limit checks.
  int max_node_depth() const;

  /// Nodes as nested arrays: [feature, threshold, left, right, gain, v0, v1].
  nlohmann::json to_json() const;
  static DecisionTree from_json(const nlohmann::json& doc);
};

}  // namespace jbshield
