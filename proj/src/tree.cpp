#include "jbshield/tree.hpp"

#include <stdexcept>

namespace jbshield {

const TreeNode& DecisionTree::route(std::span<const float> x) const {
  std::size_t at = 0;
  for (;;) {
    const TreeNode& node = nodes[at];
    if (node.is_leaf()) return node;
    const double v = x[static_cast<std::size_t>(node.feature)];
    at = static_cast<std::size_t>(v <= node.threshold ? node.left : node.right);
  }
}

int DecisionTree::max_node_depth() const {
  if (nodes.empty()) return 0;
  int deepest = 0;
  // iterative DFS over (node, depth)
  std::vector<std::pair<std::size_t, int>> stack{{0, 0}};
  while (!stack.empty()) {
    const auto [at, d] = stack.back();
    stack.pop_back();
    deepest = std::max(deepest, d);
    const TreeNode& node = nodes[at];
    if (!node.is_leaf()) {
      stack.emplace_back(static_cast<std::size_t>(node.left), d + 1);
      stack.emplace_back(static_cast<std::size_t>(node.right), d + 1);
    }
  }
  return deepest;
}

nlohmann::json DecisionTree::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const TreeNode& n : nodes) {
    rows.push_back({n.feature, n.threshold, n.left, n.right, n.gain, n.value[0],
                    n.value[1]});
  }
  return rows;
}

DecisionTree DecisionTree::from_json(const nlohmann::json& doc) {
  if (!doc.is_array()) throw std::runtime_error("tree payload must be an array");
  DecisionTree tree;
  tree.nodes.reserve(doc.size());
  for (const auto& row : doc) {
    if (!row.is_array() || row.size() != 7) {
      throw std::runtime_error("tree node must be a 7-element array");
    }
    TreeNode n;
    n.feature = row[0].get<std::int32_t>();
    n.threshold = row[1].get<double>();
    n.left = row[2].get<std::int32_t>();
    n.right = row[3].get<std::int32_t>();
    n.gain = row[4].get<double>();
    n.value = {row[5].get<double>(), row[6].get<double>()};
    tree.nodes.push_back(n);
  }
  const auto count = static_cast<std::int32_t>(tree.nodes.size());
  for (const TreeNode& n : tree.nodes) {
    if (n.is_leaf()) continue;
    if (n.left < 0 || n.left >= count || n.right < 0 || n.right >= count) {
      throw std::runtime_error("tree node child index out of range");
    }
  }
  tree.depth = tree.max_node_depth();
  return tree;
}

}  // namespace jbshield
