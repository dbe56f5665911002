// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "treeplan/errors.hpp"
#include "treeplan/world.hpp"

namespace treeplan {

struct Scene {
    std::string name;
    WorldState initial;
    std::vector<TaskSpec> tasks;

    [[nodiscard]] const TaskSpec* task(std::string_view task_name) const;

    friend bool operator==(const Scene&, const Scene&) = default;
};

enum class SceneErrorKind { ParseError, InvariantViolation, DanglingReference, NotFound };

using SceneError = KindedError<SceneErrorKind>;

/// Parses and validates one scene document (see docs/scene-format.md). Every
/// task's gold plan is dry-run from the initial state and must reach all of
/// its goal conditions.
Scene load_scene(std::string_view document);

/// Inverse of load_scene for any valid scene.
std::string serialize_scene(const Scene& scene);

/// A pack is either a single .scene file or a directory of them (loaded in
/// file-name order).
std::vector<Scene> load_scene_pack(const std::filesystem::path& path);

/// Result of executing a plan open-loop from a state, stopping at the first
/// failing action.
struct DryRun {
    WorldState final_state;
    std::size_t executed = 0;
    std::optional<ExecError> error; // set when a step failed
};

DryRun dry_run(const WorldState& start, std::span<const Action> actions);

std::string read_text_file(const std::filesystem::path& path);

} // namespace treeplan
