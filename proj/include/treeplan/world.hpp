// SPDX-License-Identifier: Apache-2.0
#pragma once

// Symbolic household world: objects with class flags and unary states,
// binary relations, a single character with two hands and a posture.
// Transitions are deterministic; failed actions leave the state untouched.

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "treeplan/errors.hpp"
#include "treeplan/grammar.hpp"

namespace treeplan {

enum class ObjectClass : std::uint8_t { movable, switchable, openable, surface, container, sittable, lieable, room };
enum class ObjectState : std::uint8_t { on, off, open, closed, clean, dirty };

inline constexpr std::size_t kObjectClassCount = 8;
inline constexpr std::size_t kObjectStateCount = 6;

std::string_view class_name(ObjectClass c);
std::string_view state_name(ObjectState s);
std::optional<ObjectClass> parse_class(std::string_view text);
std::optional<ObjectState> parse_state(std::string_view text);

// Small bit set over one of the two enums above.
template <typename Enum>
class FlagSet {
public:
    constexpr FlagSet() = default;
    constexpr FlagSet(std::initializer_list<Enum> flags) {
        for (auto f : flags) {
            set(f);
        }
    }
    [[nodiscard]] constexpr bool has(Enum f) const { return (bits_ >> static_cast<unsigned>(f)) & 1U; }
    constexpr void set(Enum f) { bits_ |= static_cast<std::uint16_t>(1U << static_cast<unsigned>(f)); }
    constexpr void reset(Enum f) { bits_ &= static_cast<std::uint16_t>(~(1U << static_cast<unsigned>(f))); }
    [[nodiscard]] constexpr std::uint16_t bits() const { return bits_; }

    friend constexpr bool operator==(FlagSet, FlagSet) = default;
    friend constexpr auto operator<=>(FlagSet, FlagSet) = default;

private:
    std::uint16_t bits_ = 0;
};

using ClassSet = FlagSet<ObjectClass>;
using StateSet = FlagSet<ObjectState>;

struct WorldObject {
    std::string name;
    int id = 1;
    ClassSet classes;
    StateSet states;

    [[nodiscard]] ObjectRef ref() const { return {name, id}; }
    [[nodiscard]] bool is(ObjectClass c) const { return classes.has(c); }
    [[nodiscard]] bool in(ObjectState s) const { return states.has(s); }

    friend bool operator==(const WorldObject&, const WorldObject&) = default;
};

enum class Predicate : std::uint8_t { inside, on_top, close, facing, holds_rh, holds_lh, contains };

std::string_view predicate_name(Predicate p);
std::optional<Predicate> parse_predicate(std::string_view text);

struct Relation {
    Predicate predicate = Predicate::close;
    ObjectRef subject;
    ObjectRef object;

    friend bool operator==(const Relation&, const Relation&) = default;
    friend auto operator<=>(const Relation&, const Relation&) = default;
};

enum class Posture : std::uint8_t { standing, sitting, lying, sleeping };

std::string_view posture_name(Posture p);
std::optional<Posture> parse_posture(std::string_view text);

/// The character is implicit: it never appears in `objects`, only as the
/// subject of close/holds/on_top relations.
const ObjectRef& character_ref();

struct WorldState {
    std::vector<WorldObject> objects; // sorted by ref
    std::set<Relation> relations;
    ObjectRef character_room;
    Posture posture = Posture::standing;
    Posture sleep_from = Posture::lying; // posture restored by WakeUp

    [[nodiscard]] const WorldObject* find(const ObjectRef& ref) const;
    WorldObject* find(const ObjectRef& ref);
    [[nodiscard]] bool has(Predicate p, const ObjectRef& subject, const ObjectRef& object) const {
        return relations.contains(Relation{p, subject, object});
    }
    /// inside/on_top target of `ref`, if it is placed somewhere.
    [[nodiscard]] std::optional<Relation> placement(const ObjectRef& ref) const;
    [[nodiscard]] std::optional<ObjectRef> held_in(Predicate hand) const;
    [[nodiscard]] bool is_held(const ObjectRef& ref) const;
    /// Room containing `ref`, following placement (held objects are in the character's room).
    [[nodiscard]] std::optional<ObjectRef> room_of(const ObjectRef& ref) const;
    /// First closed container on the placement chain above `ref`.
    [[nodiscard]] std::optional<ObjectRef> enclosing_closed(const ObjectRef& ref) const;

    friend bool operator==(const WorldState&, const WorldState&) = default;
};

/// Byte-stable dump (sorted objects, sorted relations).
std::string canonical_string(const WorldState& state);

/// Structural invariants: hands, placement targets, exclusive states, the
/// character's room. Returns human-readable violations (empty when valid).
std::vector<std::string> check_invariants(const WorldState& state);

// ---------------------------------------------------------------------------
// Observation

struct Observation {
    ObjectRef room;
    Posture posture = Posture::standing;
    std::optional<ObjectRef> right_hand;
    std::optional<ObjectRef> left_hand;
    std::vector<WorldObject> visible_objects;
    std::vector<Relation> visible_relations;
};

/// Objects in the character's room that are not (transitively) inside a
/// closed container, plus their states and mutual relations.
Observation observe(const WorldState& state);

/// One summary sentence, then "X is <state>." / "X is <phrase> Y." sentences.
std::string render_observation(const Observation& obs);
std::string render_character_summary(const Observation& obs);

// ---------------------------------------------------------------------------
// Transitions

enum class ExecErrorKind { PreconditionFailed, UnknownObject };

struct ExecError {
    ExecErrorKind kind = ExecErrorKind::PreconditionFailed;
    std::string message; // "Script is not executable, since ..."
};

struct StepOutcome {
    WorldState state;
    std::optional<ExecError> error;

    [[nodiscard]] bool ok() const { return !error.has_value(); }
};

StepOutcome execute_action(const WorldState& state, const Action& action);

/// Pre-action facts needed to undo an action later.
struct ExecRecord {
    Action action;
    ObjectRef room_before;
    Posture posture_before = Posture::standing;
    std::optional<Relation> source_placement; // where a grabbed object came from
    bool source_is_room = false;
    std::optional<ObjectRef> seat_before;     // on_top(character, seat)
};

ExecRecord make_exec_record(const WorldState& before, const Action& action);

/// Restoring action, or nullopt for actions with no inverse.
std::optional<Action> inverse_action(const Action& action, const ExecRecord& record);

/// The facts an inverse is expected to restore: room, held objects, on/off,
/// open/closed, posture. Rendered canonically for comparison.
std::string restorable_facts(const WorldState& state);

// ---------------------------------------------------------------------------
// Goals and tasks

enum class GoalPredicate : std::uint8_t {
    on,
    off,
    open,
    closed,
    clean,
    dirty,
    sitting,
    lying,
    sleeping,
    inside,
    ontop,
    close,
    facing,
    holds,
    contains,
};

struct GoalCondition {
    GoalPredicate predicate = GoalPredicate::on;
    ObjectRef subject;
    std::optional<ObjectRef> object;

    friend bool operator==(const GoalCondition&, const GoalCondition&) = default;
    friend auto operator<=>(const GoalCondition&, const GoalCondition&) = default;
};

bool is_binary(GoalPredicate p);

/// "on tv 1", "ontop character chair 1", "sleeping character"; the
/// character's id may be omitted. Names are lowercased.
GoalCondition parse_goal(std::string_view line);
std::string render_goal(const GoalCondition& goal);

bool goal_holds(const WorldState& state, const GoalCondition& goal);
std::vector<GoalCondition> achieved_goal_conditions(const WorldState& state, const std::vector<GoalCondition>& goals);

struct TaskSpec {
    std::string name;
    std::vector<GoalCondition> goals;
    Plan gold_plan;

    friend bool operator==(const TaskSpec&, const TaskSpec&) = default;
};

// ---------------------------------------------------------------------------
// Snapshots

enum class SnapshotErrorKind { StaleToken };
using SnapshotError = KindedError<SnapshotErrorKind>;

struct SnapshotToken {
    std::uint64_t store = 0;
    std::uint64_t epoch = 0;
    std::size_t index = 0;
};

/// Keeps copies of world states; tokens go stale when the store is cleared
/// or when presented to a different store.
class SnapshotStore {
public:
    SnapshotStore();

    SnapshotToken snapshot(const WorldState& state);
    [[nodiscard]] WorldState restore(const SnapshotToken& token) const;
    void clear();
    [[nodiscard]] std::size_t size() const { return states_.size(); }

private:
    std::uint64_t id_;
    std::uint64_t epoch_ = 0;
    std::vector<WorldState> states_;
};

} // namespace treeplan
