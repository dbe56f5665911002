// SPDX-License-Identifier: Apache-2.0
#pragma once

// Bracketed mid-level action language:
//
//   [Name]
//   [Name] <obj> (id)
//   [Name] <obj1> (id1) <obj2> (id2)
//
// plus the "[END]" terminator emitted by step-wise planners.

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "treeplan/errors.hpp"

namespace treeplan {

enum class ActionType : std::uint8_t {
    Sleep,
    StandUp,
    WakeUp,
    Walk,
    Find,
    Grab,
    Wash,
    Wipe,
    Pull,
    Push,
    Pour,
    TurnTo,
    PointAt,
    Watch,
    Touch,
    Open,
    Close,
    Run,
    Sit,
    Read,
    PutOn,
    Drop,
    Lie,
    SwitchOn,
    SwitchOff,
    Drink,
    PutIn,
    PutBack,
};

inline constexpr std::size_t kActionTypeCount = 28;

enum class Arity : std::uint8_t { NoArg, OneArg, TwoArg };

// All action types in canonical listing order.
const std::array<ActionType, kActionTypeCount>& all_action_types();

std::string_view action_name(ActionType type);
Arity arity_of(ActionType type);
std::optional<ActionType> lookup_action(std::string_view name); // case-insensitive
std::string_view arity_name(Arity arity);

// Pour is the one action that takes either one or two arguments.
bool accepts_arg_count(ActionType type, std::size_t count);

struct ObjectRef {
    std::string name;
    int id = 1;

    friend bool operator==(const ObjectRef&, const ObjectRef&) = default;
    friend auto operator<=>(const ObjectRef&, const ObjectRef&) = default;
};

struct Action {
    ActionType type = ActionType::Sleep;
    std::vector<ObjectRef> args;

    friend bool operator==(const Action&, const Action&) = default;
    friend auto operator<=>(const Action&, const Action&) = default;
};

struct Plan {
    std::vector<Action> actions;
    int source_index = 0;

    friend bool operator==(const Plan&, const Plan&) = default;
};

enum class GrammarErrorKind { UnknownAction, ArityMismatch, MalformedLine, EmptyPlan };

using GrammarError = KindedError<GrammarErrorKind>;

inline constexpr std::string_view kEndMarker = "[END]";

/// Parses one physical line. Action names are matched case-insensitively and
/// object names are lowercased; whitespace around tokens is ignored.
Action parse_action(std::string_view line);

/// True when the trimmed line is the "[END]" terminator (any casing).
bool is_end_marker(std::string_view line);

/// Longest prefix of well-formed action lines in a sampled completion.
/// Blank lines and a leading "Task: ..." echo are skipped; parsing stops at
/// the first malformed line or at "[END]". Throws EmptyPlan when nothing parses.
Plan parse_plan(std::string_view text, int source_index = 0);

std::string render_action(const Action& action);
std::string render_object(const ObjectRef& ref);
std::string render_plan(const Plan& plan); // one action per line, trailing newline

/// Arity class of an action name; throws UnknownAction.
Arity action_arity(std::string_view name);

} // namespace treeplan
