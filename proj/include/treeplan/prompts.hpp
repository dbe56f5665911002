// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "treeplan/grammar.hpp"
#include "treeplan/scene.hpp"
#include "treeplan/world.hpp"

namespace treeplan {

struct ErrorContext {
    std::string failed; // rendered sub-task, e.g. "[Lie] <bed> (1)"
    std::string message;
};

struct Exemplar {
    std::string task;
    std::vector<std::string> lines;
};

/// The four fixed in-context plans shared by the sampling and step prompts.
const std::vector<Exemplar>& fixed_exemplars();

/// Action lists by arity, room count and names, and the deduplicated object
/// name list of the scene.
std::string render_global_info(const WorldState& state);

/// Whole-plan prompt; carries only the character summary of the initial state.
std::string build_sampling_prompt(const Scene& scene, std::string_view task);

/// One-action-at-a-time prompt for the iterative planners. The history is
/// written after the task line so the completion continues the plan.
std::string build_iterative_prompt(const Scene& scene, const WorldState& current, std::string_view task,
                                   std::span<const Action> history, const std::optional<ErrorContext>& error);

/// Option-choice prompt. `options` are rendered sub-tasks and get letters A, B, ...
std::string build_deciding_prompt(const Observation& obs, std::string_view task, std::span<const Action> history,
                                  std::span<const std::string> options, const std::optional<ErrorContext>& error);

inline constexpr std::string_view kEndOption = "[END]";

} // namespace treeplan
