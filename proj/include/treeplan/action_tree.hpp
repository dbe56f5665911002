// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <compare>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "treeplan/errors.hpp"
#include "treeplan/grammar.hpp"

namespace treeplan {

struct NodeId {
    std::size_t value = 0;

    friend bool operator==(NodeId, NodeId) = default;
    friend auto operator<=>(NodeId, NodeId) = default;
};

struct TreeNode {
    NodeId id;
    std::optional<Action> action; // empty only for the root
    std::optional<NodeId> parent;
    int time_step = 0;
    std::vector<NodeId> children; // insertion order
    bool valid = true;
    int visit_weight = 0;
    int plan_ends = 0; // sampled plans terminating exactly here

    [[nodiscard]] bool is_root() const { return !action.has_value(); }
    [[nodiscard]] bool is_leaf() const { return children.empty(); }
    [[nodiscard]] bool is_plan_end() const { return plan_ends > 0; }
};

enum class TreeErrorKind { NoPlans, AlreadyInvalid, UnknownNode };

using TreeError = KindedError<TreeErrorKind>;

/// Prefix tree over sampled plans. Plans sharing a prefix share nodes; equal
/// actions under different prefixes stay distinct.
class ActionTree {
public:
    static ActionTree construct(std::span<const Plan> plans);

    [[nodiscard]] NodeId root() const { return NodeId{0}; }
    [[nodiscard]] const TreeNode& node(NodeId id) const;
    [[nodiscard]] std::size_t size() const { return nodes_.size(); }
    [[nodiscard]] const std::vector<TreeNode>& nodes() const { return nodes_; }

    /// Valid children ordered by descending visit weight, then by rendered
    /// action text.
    [[nodiscard]] std::vector<NodeId> valid_children(NodeId id) const;

    /// Invalidates the subtree rooted at `id`, then every ancestor left with no
    /// valid child. Returns the flipped nodes in ascending id order.
    std::vector<NodeId> mark_invalid(NodeId id);

    /// Nearest valid ancestor of `failed` with at least one valid child, or
    /// nullopt once even the root has none.
    [[nodiscard]] std::optional<NodeId> find_backtrack_target(NodeId failed) const;

    [[nodiscard]] std::vector<Action> path_to(NodeId id) const;
    [[nodiscard]] std::vector<NodeId> node_path(NodeId id) const; // root first

    /// Follows `actions` from the root; nullopt when the path leaves the tree.
    [[nodiscard]] std::optional<NodeId> find_path(std::span<const Action> actions) const;

    /// Rebuilds a tree from its node list (used by the on-disk tree artifact).
    static ActionTree from_nodes(std::vector<TreeNode> nodes);

private:
    ActionTree() = default;
    TreeNode& mut(NodeId id);
    std::optional<NodeId> child_with(NodeId parent, const Action& action) const;

    std::vector<TreeNode> nodes_;
};

struct DotOptions {
    std::vector<NodeId> highlighted_path; // drawn in red, e.g. the executed plan
    std::string graph_name = "action_tree";
};

/// Graphviz text: one vertex per node labelled with the rendered action and
/// time step, invalid nodes dashed grey, edges parent -> child.
std::string to_dot(const ActionTree& tree, const DotOptions& options = {});

} // namespace treeplan
