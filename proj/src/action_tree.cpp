// SPDX-License-Identifier: Apache-2.0
#include "treeplan/action_tree.hpp"

#include <algorithm>

#include <fmt/format.h>

namespace treeplan {

ActionTree ActionTree::construct(std::span<const Plan> plans) {
    if (plans.empty()) {
        throw TreeError(TreeErrorKind::NoPlans, "cannot build an action tree from zero plans");
    }
    ActionTree tree;
    tree.nodes_.push_back(TreeNode{NodeId{0}, std::nullopt, std::nullopt, 0, {}, true, 0, 0});
    for (const auto& plan : plans) {
        if (plan.actions.empty()) {
            throw TreeError(TreeErrorKind::NoPlans, "plan is empty");
        }
        NodeId current = tree.root();
        tree.mut(current).visit_weight += 1;
        for (const auto& action : plan.actions) {
            auto child = tree.child_with(current, action);
            if (!child) {
                NodeId fresh{tree.nodes_.size()};
                int depth = tree.node(current).time_step + 1;
                tree.nodes_.push_back(TreeNode{fresh, action, current, depth, {}, true, 0, 0});
                tree.mut(current).children.push_back(fresh);
                child = fresh;
            }
            current = *child;
            tree.mut(current).visit_weight += 1;
        }
        tree.mut(current).plan_ends += 1;
    }
    return tree;
}

ActionTree ActionTree::from_nodes(std::vector<TreeNode> nodes) {
    ActionTree tree;
    tree.nodes_ = std::move(nodes);
    return tree;
}

const TreeNode& ActionTree::node(NodeId id) const {
    if (id.value >= nodes_.size()) {
        throw TreeError(TreeErrorKind::UnknownNode, fmt::format("no node {}", id.value));
    }
    return nodes_[id.value];
}

TreeNode& ActionTree::mut(NodeId id) {
    return const_cast<TreeNode&>(std::as_const(*this).node(id));
}

std::optional<NodeId> ActionTree::child_with(NodeId parent, const Action& action) const {
    for (auto child : node(parent).children) {
        if (nodes_[child.value].action == action) {
            return child;
        }
    }
    return std::nullopt;
}

std::vector<NodeId> ActionTree::valid_children(NodeId id) const {
    struct Keyed {
        NodeId id;
        int weight;
        std::string text;
    };
    std::vector<Keyed> keyed;
    for (auto child : node(id).children) {
        const auto& n = nodes_[child.value];
        if (n.valid) {
            keyed.push_back({child, n.visit_weight, render_action(*n.action)});
        }
    }
    std::stable_sort(keyed.begin(), keyed.end(), [](const Keyed& a, const Keyed& b) {
        if (a.weight != b.weight) {
            return a.weight > b.weight;
        }
        return a.text < b.text;
    });
    std::vector<NodeId> out;
    out.reserve(keyed.size());
    for (const auto& k : keyed) {
        out.push_back(k.id);
    }
    return out;
}

std::vector<NodeId> ActionTree::mark_invalid(NodeId id) {
    if (!node(id).valid) {
        throw TreeError(TreeErrorKind::AlreadyInvalid, fmt::format("node {} is already invalid", id.value));
    }
    std::vector<NodeId> flipped;
    std::vector<NodeId> stack{id};
    while (!stack.empty()) {
        auto current = stack.back();
        stack.pop_back();
        auto& n = mut(current);
        if (n.valid) {
            n.valid = false;
            flipped.push_back(current);
        }
        stack.insert(stack.end(), n.children.begin(), n.children.end());
    }
    auto parent = node(id).parent;
    while (parent) {
        auto& p = mut(*parent);
        bool any_valid = std::any_of(p.children.begin(), p.children.end(),
                                     [this](NodeId c) { return nodes_[c.value].valid; });
        if (any_valid || !p.valid) {
            break;
        }
        p.valid = false;
        flipped.push_back(*parent);
        parent = p.parent;
    }
    std::sort(flipped.begin(), flipped.end());
    return flipped;
}

std::optional<NodeId> ActionTree::find_backtrack_target(NodeId failed) const {
    auto candidate = node(failed).parent;
    while (candidate) {
        const auto& n = node(*candidate);
        if (n.valid && !valid_children(*candidate).empty()) {
            return candidate;
        }
        candidate = n.parent;
    }
    return std::nullopt;
}

std::vector<NodeId> ActionTree::node_path(NodeId id) const {
    std::vector<NodeId> path;
    std::optional<NodeId> cursor = id;
    while (cursor) {
        path.push_back(*cursor);
        cursor = node(*cursor).parent;
    }
    std::reverse(path.begin(), path.end());
    return path;
}

std::vector<Action> ActionTree::path_to(NodeId id) const {
    std::vector<Action> actions;
    for (auto step : node_path(id)) {
        if (const auto& a = nodes_[step.value].action) {
            actions.push_back(*a);
        }
    }
    return actions;
}

std::optional<NodeId> ActionTree::find_path(std::span<const Action> actions) const {
    NodeId current = root();
    for (const auto& action : actions) {
        auto child = child_with(current, action);
        if (!child) {
            return std::nullopt;
        }
        current = *child;
    }
    return current;
}

namespace {

std::string dot_escape(std::string_view text) {
    std::string out;
    for (char c : text) {
        if (c == '"' || c == '\\') {
            out += '\\';
        }
        out += c;
    }
    return out;
}

} // namespace

std::string to_dot(const ActionTree& tree, const DotOptions& options) {
    std::vector<bool> highlighted(tree.size(), false);
    for (auto id : options.highlighted_path) {
        if (id.value < highlighted.size()) {
            highlighted[id.value] = true;
        }
    }
    std::string out = fmt::format("digraph {} {{\n", options.graph_name);
    out += "  node [shape=box, fontname=\"Helvetica\"];\n";
    for (const auto& n : tree.nodes()) {
        std::string label = n.is_root() ? std::string("ROOT")
                                        : fmt::format("{}\\nt={}", dot_escape(render_action(*n.action)), n.time_step);
        std::string attrs = fmt::format("label=\"{}\"", label);
        if (!n.valid) {
            attrs += ", style=dashed, color=gray50, fontcolor=gray50";
        }
        if (highlighted[n.id.value]) {
            attrs += ", color=red, penwidth=2";
        }
        if (n.is_plan_end()) {
            attrs += ", peripheries=2";
        }
        out += fmt::format("  n{} [{}];\n", n.id.value, attrs);
    }
    for (const auto& n : tree.nodes()) {
        for (auto child : n.children) {
            std::string attrs;
            if (highlighted[n.id.value] && highlighted[child.value]) {
                attrs = " [color=red, penwidth=2]";
            }
            out += fmt::format("  n{} -> n{}{};\n", n.id.value, child.value, attrs);
        }
    }
    out += "}\n";
    return out;
}

} // namespace treeplan
