// SPDX-License-Identifier: Apache-2.0
#include "treeplan/world.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <charconv>
#include <limits>
#include <span>

#include <fmt/format.h>

#include "text_util.hpp"

namespace treeplan {

namespace {

constexpr std::array<std::string_view, kObjectClassCount> kClassNames{
    "movable", "switchable", "openable", "surface", "container", "sittable", "lieable", "room"};
constexpr std::array<std::string_view, kObjectStateCount> kStateNames{"on", "off", "open", "closed", "clean", "dirty"};
constexpr std::array<std::string_view, 7> kPredicateNames{"inside",   "ontop",    "close",   "facing",
                                                          "holds_rh", "holds_lh", "contains"};
constexpr std::array<std::string_view, 4> kPostureNames{"standing", "sitting", "lying", "sleeping"};
constexpr std::array<std::string_view, 15> kGoalNames{"on",     "off",    "open",   "closed", "clean",
                                                      "dirty",  "sitting", "lying", "sleeping", "inside",
                                                      "ontop",  "close",  "facing", "holds",  "contains"};

template <typename Enum, std::size_t N>
std::optional<Enum> lookup(const std::array<std::string_view, N>& names, std::string_view text) {
    for (std::size_t i = 0; i < N; ++i) {
        if (detail::iequals(names[i], text)) {
            return static_cast<Enum>(i);
        }
    }
    return std::nullopt;
}

ObjectRef lowest_ref_with_name(const ObjectRef& ref) { return ObjectRef{ref.name, std::numeric_limits<int>::min()}; }

} // namespace

std::string_view class_name(ObjectClass c) { return kClassNames[static_cast<std::size_t>(c)]; }
std::string_view state_name(ObjectState s) { return kStateNames[static_cast<std::size_t>(s)]; }
std::string_view predicate_name(Predicate p) { return kPredicateNames[static_cast<std::size_t>(p)]; }
std::string_view posture_name(Posture p) { return kPostureNames[static_cast<std::size_t>(p)]; }

std::optional<ObjectClass> parse_class(std::string_view text) { return lookup<ObjectClass>(kClassNames, text); }
std::optional<ObjectState> parse_state(std::string_view text) { return lookup<ObjectState>(kStateNames, text); }
std::optional<Predicate> parse_predicate(std::string_view text) { return lookup<Predicate>(kPredicateNames, text); }
std::optional<Posture> parse_posture(std::string_view text) { return lookup<Posture>(kPostureNames, text); }

const ObjectRef& character_ref() {
    static const ObjectRef character{"character", 1};
    return character;
}

// ---------------------------------------------------------------------------
// WorldState queries

const WorldObject* WorldState::find(const ObjectRef& ref) const {
    auto it = std::lower_bound(objects.begin(), objects.end(), ref,
                               [](const WorldObject& o, const ObjectRef& r) { return o.ref() < r; });
    if (it != objects.end() && it->name == ref.name && it->id == ref.id) {
        return &*it;
    }
    return nullptr;
}

WorldObject* WorldState::find(const ObjectRef& ref) {
    return const_cast<WorldObject*>(std::as_const(*this).find(ref));
}

std::optional<Relation> WorldState::placement(const ObjectRef& ref) const {
    for (auto p : {Predicate::inside, Predicate::on_top}) {
        auto it = relations.lower_bound(Relation{p, ref, lowest_ref_with_name({"", 0})});
        if (it != relations.end() && it->predicate == p && it->subject == ref) {
            return *it;
        }
    }
    return std::nullopt;
}

std::optional<ObjectRef> WorldState::held_in(Predicate hand) const {
    auto it = relations.lower_bound(Relation{hand, character_ref(), lowest_ref_with_name({"", 0})});
    if (it != relations.end() && it->predicate == hand && it->subject == character_ref()) {
        return it->object;
    }
    return std::nullopt;
}

bool WorldState::is_held(const ObjectRef& ref) const {
    return has(Predicate::holds_rh, character_ref(), ref) || has(Predicate::holds_lh, character_ref(), ref);
}

std::optional<ObjectRef> WorldState::room_of(const ObjectRef& ref) const {
    ObjectRef cursor = ref;
    for (std::size_t guard = 0; guard <= objects.size(); ++guard) {
        const auto* obj = find(cursor);
        if (obj == nullptr) {
            return std::nullopt;
        }
        if (obj->is(ObjectClass::room)) {
            return cursor;
        }
        if (is_held(cursor)) {
            return character_room;
        }
        auto parent = placement(cursor);
        if (!parent) {
            return std::nullopt;
        }
        cursor = parent->object;
    }
    return std::nullopt;
}

std::optional<ObjectRef> WorldState::enclosing_closed(const ObjectRef& ref) const {
    ObjectRef cursor = ref;
    for (std::size_t guard = 0; guard <= objects.size(); ++guard) {
        if (is_held(cursor)) {
            return std::nullopt;
        }
        auto parent = placement(cursor);
        if (!parent) {
            return std::nullopt;
        }
        const auto* holder = find(parent->object);
        if (holder == nullptr || holder->is(ObjectClass::room)) {
            return std::nullopt;
        }
        if (parent->predicate == Predicate::inside && holder->in(ObjectState::closed)) {
            return parent->object;
        }
        cursor = parent->object;
    }
    return std::nullopt;
}

namespace {

std::string ref_text(const ObjectRef& ref) { return fmt::format("{}:{}", ref.name, ref.id); }

} // namespace

std::string canonical_string(const WorldState& state) {
    std::string out = fmt::format("room {}\nposture {}\nsleep_from {}\n", ref_text(state.character_room),
                                  posture_name(state.posture), posture_name(state.sleep_from));
    auto sorted = state.objects;
    std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.ref() < b.ref(); });
    for (const auto& obj : sorted) {
        out += fmt::format("object {}", ref_text(obj.ref()));
        for (std::size_t c = 0; c < kObjectClassCount; ++c) {
            if (obj.is(static_cast<ObjectClass>(c))) {
                out += fmt::format(" +{}", kClassNames[c]);
            }
        }
        for (std::size_t s = 0; s < kObjectStateCount; ++s) {
            if (obj.in(static_cast<ObjectState>(s))) {
                out += fmt::format(" ={}", kStateNames[s]);
            }
        }
        out += '\n';
    }
    for (const auto& rel : state.relations) {
        out += fmt::format("rel {} {} {}\n", predicate_name(rel.predicate), ref_text(rel.subject), ref_text(rel.object));
    }
    return out;
}

std::vector<std::string> check_invariants(const WorldState& state) {
    std::vector<std::string> problems;
    auto exists = [&](const ObjectRef& r) { return r == character_ref() || state.find(r) != nullptr; };

    for (std::size_t i = 1; i < state.objects.size(); ++i) {
        if (!(state.objects[i - 1].ref() < state.objects[i].ref())) {
            problems.push_back(fmt::format("objects not sorted/unique at {}", ref_text(state.objects[i].ref())));
        }
    }
    const auto* room = state.find(state.character_room);
    if (room == nullptr || !room->is(ObjectClass::room)) {
        problems.push_back(fmt::format("character room {} is not a room", ref_text(state.character_room)));
    }
    for (const auto& obj : state.objects) {
        if (obj.in(ObjectState::on) && obj.in(ObjectState::off)) {
            problems.push_back(fmt::format("{} is both on and off", ref_text(obj.ref())));
        }
        if ((obj.in(ObjectState::on) || obj.in(ObjectState::off)) && !obj.is(ObjectClass::switchable)) {
            problems.push_back(fmt::format("{} has on/off but is not switchable", ref_text(obj.ref())));
        }
        if (obj.in(ObjectState::open) && obj.in(ObjectState::closed)) {
            problems.push_back(fmt::format("{} is both open and closed", ref_text(obj.ref())));
        }
        if ((obj.in(ObjectState::open) || obj.in(ObjectState::closed)) && !obj.is(ObjectClass::openable)) {
            problems.push_back(fmt::format("{} has open/closed but is not openable", ref_text(obj.ref())));
        }
        if (obj.in(ObjectState::clean) && obj.in(ObjectState::dirty)) {
            problems.push_back(fmt::format("{} is both clean and dirty", ref_text(obj.ref())));
        }
        if (obj.is(ObjectClass::room)) {
            if (obj.is(ObjectClass::movable)) {
                problems.push_back(fmt::format("room {} is movable", ref_text(obj.ref())));
            }
            if (state.placement(obj.ref())) {
                problems.push_back(fmt::format("room {} is placed inside something", ref_text(obj.ref())));
            }
        } else if (!state.room_of(obj.ref())) {
            problems.push_back(fmt::format("{} is not located in any room", ref_text(obj.ref())));
        }
    }
    std::map<ObjectRef, int> placements;
    for (const auto& rel : state.relations) {
        if (!exists(rel.subject) || !exists(rel.object)) {
            problems.push_back(fmt::format("relation {} references a missing object", predicate_name(rel.predicate)));
            continue;
        }
        switch (rel.predicate) {
        case Predicate::inside: {
            const auto* target = state.find(rel.object);
            if (target == nullptr || !(target->is(ObjectClass::container) || target->is(ObjectClass::room))) {
                problems.push_back(fmt::format("{} is inside non-container {}", ref_text(rel.subject), ref_text(rel.object)));
            }
            if (rel.subject == character_ref()) {
                problems.push_back("character location is tracked by character_room, not inside");
            }
            placements[rel.subject] += 1;
            break;
        }
        case Predicate::on_top:
            if (rel.subject != character_ref()) {
                const auto* target = state.find(rel.object);
                if (target == nullptr || !target->is(ObjectClass::surface)) {
                    problems.push_back(fmt::format("{} is on non-surface {}", ref_text(rel.subject), ref_text(rel.object)));
                }
                placements[rel.subject] += 1;
            }
            break;
        case Predicate::holds_rh:
        case Predicate::holds_lh:
            if (rel.subject != character_ref()) {
                problems.push_back("only the character can hold objects");
            }
            if (state.placement(rel.object)) {
                problems.push_back(fmt::format("held {} is also placed", ref_text(rel.object)));
            }
            break;
        default: break;
        }
    }
    for (const auto& [ref, count] : placements) {
        if (count > 1) {
            problems.push_back(fmt::format("{} has {} placements", ref_text(ref), count));
        }
    }
    for (auto hand : {Predicate::holds_rh, Predicate::holds_lh}) {
        int held = 0;
        for (const auto& rel : state.relations) {
            held += rel.predicate == hand ? 1 : 0;
        }
        if (held > 1) {
            problems.push_back(fmt::format("{} holds {} objects", predicate_name(hand), held));
        }
    }
    auto rh = state.held_in(Predicate::holds_rh);
    auto lh = state.held_in(Predicate::holds_lh);
    if (rh && lh && *rh == *lh) {
        problems.push_back("the same object is held in both hands");
    }
    if (state.posture == Posture::standing && std::any_of(state.relations.begin(), state.relations.end(), [](const auto& r) {
            return r.predicate == Predicate::on_top && r.subject == character_ref();
        })) {
        problems.push_back("standing character is on top of something");
    }
    return problems;
}

// ---------------------------------------------------------------------------
// Observation

Observation observe(const WorldState& state) {
    Observation obs;
    obs.room = state.character_room;
    obs.posture = state.posture;
    obs.right_hand = state.held_in(Predicate::holds_rh);
    obs.left_hand = state.held_in(Predicate::holds_lh);
    std::set<ObjectRef> visible;
    for (const auto& obj : state.objects) {
        auto room = state.room_of(obj.ref());
        if (room && *room == state.character_room && !state.enclosing_closed(obj.ref())) {
            obs.visible_objects.push_back(obj);
            visible.insert(obj.ref());
        }
    }
    auto seen = [&](const ObjectRef& r) { return r == character_ref() || visible.contains(r); };
    for (const auto& rel : state.relations) {
        if (rel.predicate == Predicate::holds_rh || rel.predicate == Predicate::holds_lh) {
            continue;
        }
        if (seen(rel.subject) && seen(rel.object)) {
            obs.visible_relations.push_back(rel);
        }
    }
    return obs;
}

namespace {

std::string_view relation_phrase(Predicate p) {
    switch (p) {
    case Predicate::inside: return "inside";
    case Predicate::on_top: return "on";
    case Predicate::close: return "close to";
    case Predicate::facing: return "facing";
    case Predicate::contains: return "filled with";
    case Predicate::holds_rh: return "holding";
    case Predicate::holds_lh: return "holding";
    }
    return "related to";
}

std::string hand_text(const std::optional<ObjectRef>& held) { return held ? held->name : std::string("nothing"); }

} // namespace

std::string render_character_summary(const Observation& obs) {
    return fmt::format("Currently, you are {} in the {}, and holding {} in your right hand and {} in your left hand.",
                       posture_name(obs.posture), obs.room.name, hand_text(obs.right_hand), hand_text(obs.left_hand));
}

std::string render_observation(const Observation& obs) {
    std::vector<std::string> sentences;
    for (const auto& obj : obs.visible_objects) {
        for (std::size_t s = 0; s < kObjectStateCount; ++s) {
            if (obj.in(static_cast<ObjectState>(s))) {
                sentences.push_back(fmt::format("{} is {}.", obj.name, kStateNames[s]));
            }
        }
    }
    for (const auto& rel : obs.visible_relations) {
        sentences.push_back(fmt::format("{} is {} {}.", rel.subject.name, relation_phrase(rel.predicate), rel.object.name));
    }
    std::string out = render_character_summary(obs);
    if (!sentences.empty()) {
        out += '\n';
        for (std::size_t i = 0; i < sentences.size(); ++i) {
            if (i > 0) {
                out += ' ';
            }
            out += sentences[i];
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Transitions

namespace {

std::string obj_text(const ObjectRef& ref) { return render_object(ref); }

class Transition {
public:
    Transition(const WorldState& state, const Action& action) : before_(state), next_(state), action_(action) {}

    StepOutcome run();

private:
    [[nodiscard]] StepOutcome fail(const std::string& reason, ExecErrorKind kind = ExecErrorKind::PreconditionFailed) const {
        return StepOutcome{before_, ExecError{kind, fmt::format("Script is not executable, since {} when executing \"{} [1]\"",
                                                                reason, render_action(action_))}};
    }
    StepOutcome done() { return StepOutcome{std::move(next_), std::nullopt}; }

    const ObjectRef& arg(std::size_t i) const { return action_.args[i]; }
    const WorldObject& obj(std::size_t i) const { return *before_.find(arg(i)); }
    [[nodiscard]] bool close_to(const ObjectRef& ref) const {
        return before_.has(Predicate::close, character_ref(), ref);
    }
    [[nodiscard]] std::optional<Predicate> free_hand() const {
        if (!before_.held_in(Predicate::holds_rh)) {
            return Predicate::holds_rh;
        }
        if (!before_.held_in(Predicate::holds_lh)) {
            return Predicate::holds_lh;
        }
        return std::nullopt;
    }
    [[nodiscard]] std::optional<Predicate> hand_holding(const ObjectRef& ref) const {
        for (auto hand : {Predicate::holds_rh, Predicate::holds_lh}) {
            if (before_.has(hand, character_ref(), ref)) {
                return hand;
            }
        }
        return std::nullopt;
    }

    // close + not enclosed; shared by every manipulation of arg(i).
    std::optional<std::string> unreachable(std::size_t i) const {
        if (!close_to(arg(i))) {
            return fmt::format("{} is not close to {}", obj_text(character_ref()), obj_text(arg(i)));
        }
        if (auto box = before_.enclosing_closed(arg(i))) {
            return fmt::format("{} is inside a closed {}", obj_text(arg(i)), obj_text(*box));
        }
        return std::nullopt;
    }
    std::string lacks(std::size_t i, ObjectClass c) const {
        return fmt::format("{} is not {}", obj_text(arg(i)), class_name(c));
    }

    void set_close(const ObjectRef& ref) {
        if (ref != character_ref()) {
            next_.relations.insert(Relation{Predicate::close, character_ref(), ref});
        }
    }
    void set_close_with_support(const ObjectRef& ref) {
        set_close(ref);
        if (auto p = next_.placement(ref)) {
            const auto* holder = next_.find(p->object);
            if (holder != nullptr && !holder->is(ObjectClass::room)) {
                set_close(p->object);
            }
        }
    }
    void clear_character_relation(Predicate p) {
        std::erase_if(next_.relations, [&](const Relation& r) { return r.predicate == p && r.subject == character_ref(); });
    }
    void set_state(const ObjectRef& ref, ObjectState add, std::optional<ObjectState> remove) {
        auto* o = next_.find(ref);
        o->states.set(add);
        if (remove) {
            o->states.reset(*remove);
        }
    }

    StepOutcome walk();
    StepOutcome find();
    StepOutcome grab();
    StepOutcome put(Predicate where);
    StepOutcome drop();
    StepOutcome toggle(ObjectClass needed, ObjectState from, ObjectState to, bool needs_free_hand);
    StepOutcome rest(ObjectClass needed, Posture posture);
    StepOutcome sleep();
    StepOutcome stand_up();
    StepOutcome wake_up();
    StepOutcome touch_like(bool needs_movable, std::optional<ObjectState> cleans);
    StepOutcome pour();

    const WorldState& before_;
    WorldState next_;
    const Action& action_;
};

StepOutcome Transition::run() {
    if (!accepts_arg_count(action_.type, action_.args.size())) {
        return fail(fmt::format("[{}] has the wrong number of arguments", action_name(action_.type)),
                    ExecErrorKind::UnknownObject);
    }
    for (const auto& a : action_.args) {
        if (before_.find(a) == nullptr) {
            return fail(fmt::format("{} cannot be found", obj_text(a)), ExecErrorKind::UnknownObject);
        }
    }
    switch (action_.type) {
    case ActionType::Walk:
    case ActionType::Run: return walk();
    case ActionType::Find: return find();
    case ActionType::Grab: return grab();
    case ActionType::PutBack: return put(Predicate::on_top);
    case ActionType::PutIn: return put(Predicate::inside);
    case ActionType::Drop: return drop();
    case ActionType::Open: return toggle(ObjectClass::openable, ObjectState::closed, ObjectState::open, true);
    case ActionType::Close: return toggle(ObjectClass::openable, ObjectState::open, ObjectState::closed, true);
    case ActionType::SwitchOn: return toggle(ObjectClass::switchable, ObjectState::off, ObjectState::on, false);
    case ActionType::SwitchOff: return toggle(ObjectClass::switchable, ObjectState::on, ObjectState::off, false);
    case ActionType::Sit: return rest(ObjectClass::sittable, Posture::sitting);
    case ActionType::Lie: return rest(ObjectClass::lieable, Posture::lying);
    case ActionType::Sleep: return sleep();
    case ActionType::StandUp: return stand_up();
    case ActionType::WakeUp: return wake_up();
    case ActionType::Pull:
    case ActionType::Push: return touch_like(true, std::nullopt);
    case ActionType::Wash:
    case ActionType::Wipe: return touch_like(false, ObjectState::clean);
    case ActionType::Pour: return pour();
    case ActionType::Drink:
    case ActionType::Read:
    case ActionType::Watch:
    case ActionType::Touch:
    case ActionType::TurnTo:
    case ActionType::PointAt:
    case ActionType::PutOn: return touch_like(false, std::nullopt);
    }
    return fail("the action is not supported");
}

StepOutcome Transition::walk() {
    if (before_.posture != Posture::standing) {
        return fail(fmt::format("{} is {}", obj_text(character_ref()), posture_name(before_.posture)));
    }
    const auto& target = arg(0);
    auto room = before_.room_of(target);
    if (!room) {
        return fail(fmt::format("{} is not in any room", obj_text(target)));
    }
    if (*room != before_.character_room) {
        std::erase_if(next_.relations, [&](const Relation& r) {
            return r.predicate == Predicate::close && r.subject == character_ref() && !before_.is_held(r.object);
        });
        next_.character_room = *room;
    }
    if (!obj(0).is(ObjectClass::room)) {
        set_close_with_support(target);
    }
    return done();
}

StepOutcome Transition::find() {
    auto room = before_.room_of(arg(0));
    if (!room || *room != before_.character_room || before_.enclosing_closed(arg(0))) {
        return fail(fmt::format("{} is not in sight", obj_text(arg(0))));
    }
    if (!obj(0).is(ObjectClass::room)) {
        set_close_with_support(arg(0));
    }
    return done();
}

StepOutcome Transition::grab() {
    const auto& target = arg(0);
    if (obj(0).is(ObjectClass::room)) {
        return fail(lacks(0, ObjectClass::movable));
    }
    if (before_.is_held(target)) {
        return fail(fmt::format("{} is already holding {}", obj_text(character_ref()), obj_text(target)));
    }
    if (auto why = unreachable(0)) {
        return fail(*why);
    }
    if (!obj(0).is(ObjectClass::movable)) {
        return fail(lacks(0, ObjectClass::movable));
    }
    auto hand = free_hand();
    if (!hand) {
        return fail(fmt::format("{} does not have a free hand", obj_text(character_ref())));
    }
    if (auto source = before_.placement(target)) {
        next_.relations.erase(*source);
        const auto* holder = before_.find(source->object);
        if (holder != nullptr && !holder->is(ObjectClass::room)) {
            set_close(source->object);
        }
    }
    next_.relations.insert(Relation{*hand, character_ref(), target});
    return done();
}

StepOutcome Transition::put(Predicate where) {
    const auto& item = arg(0);
    const auto& dest = arg(1);
    auto hand = hand_holding(item);
    if (!hand) {
        return fail(fmt::format("{} is not holding {}", obj_text(character_ref()), obj_text(item)));
    }
    if (item == dest) {
        return fail(fmt::format("{} cannot be placed on itself", obj_text(item)));
    }
    if (auto why = unreachable(1)) {
        return fail(*why);
    }
    auto needed = where == Predicate::on_top ? ObjectClass::surface : ObjectClass::container;
    if (!obj(1).is(needed)) {
        return fail(lacks(1, needed));
    }
    if (where == Predicate::inside && obj(1).in(ObjectState::closed)) {
        return fail(fmt::format("{} is closed", obj_text(dest)));
    }
    // Placing an object into something it carries would form a cycle.
    for (auto cursor = before_.placement(dest); cursor; cursor = before_.placement(cursor->object)) {
        if (cursor->object == item) {
            return fail(fmt::format("{} is on or inside {}", obj_text(dest), obj_text(item)));
        }
    }
    next_.relations.erase(Relation{*hand, character_ref(), item});
    next_.relations.insert(Relation{where, item, dest});
    set_close(item);
    return done();
}

StepOutcome Transition::drop() {
    auto hand = hand_holding(arg(0));
    if (!hand) {
        return fail(fmt::format("{} is not holding {}", obj_text(character_ref()), obj_text(arg(0))));
    }
    next_.relations.erase(Relation{*hand, character_ref(), arg(0)});
    next_.relations.insert(Relation{Predicate::inside, arg(0), before_.character_room});
    set_close(arg(0));
    return done();
}

StepOutcome Transition::toggle(ObjectClass needed, ObjectState from, ObjectState to, bool needs_free_hand) {
    if (auto why = unreachable(0)) {
        return fail(*why);
    }
    if (!obj(0).is(needed)) {
        return fail(lacks(0, needed));
    }
    if (!obj(0).in(from)) {
        return fail(fmt::format("{} is already {}", obj_text(arg(0)), state_name(to)));
    }
    if (needs_free_hand && !free_hand()) {
        return fail(fmt::format("{} does not have a free hand", obj_text(character_ref())));
    }
    set_state(arg(0), to, from);
    return done();
}

StepOutcome Transition::rest(ObjectClass needed, Posture posture) {
    if (before_.posture != Posture::standing) {
        return fail(fmt::format("{} is not standing", obj_text(character_ref())));
    }
    if (auto why = unreachable(0)) {
        return fail(*why);
    }
    if (!obj(0).is(needed)) {
        return fail(lacks(0, needed));
    }
    next_.posture = posture;
    next_.relations.insert(Relation{Predicate::on_top, character_ref(), arg(0)});
    return done();
}

StepOutcome Transition::sleep() {
    if (before_.posture != Posture::lying && before_.posture != Posture::sitting) {
        return fail(fmt::format("{} is not lying or sitting", obj_text(character_ref())));
    }
    next_.sleep_from = before_.posture;
    next_.posture = Posture::sleeping;
    return done();
}

StepOutcome Transition::stand_up() {
    if (before_.posture != Posture::sitting && before_.posture != Posture::lying) {
        return fail(fmt::format("{} is not sitting or lying", obj_text(character_ref())));
    }
    next_.posture = Posture::standing;
    clear_character_relation(Predicate::on_top);
    return done();
}

StepOutcome Transition::wake_up() {
    if (before_.posture != Posture::sleeping) {
        return fail(fmt::format("{} is not sleeping", obj_text(character_ref())));
    }
    next_.posture = before_.sleep_from;
    return done();
}

StepOutcome Transition::touch_like(bool needs_movable, std::optional<ObjectState> cleans) {
    if (auto why = unreachable(0)) {
        return fail(*why);
    }
    if (needs_movable && !obj(0).is(ObjectClass::movable)) {
        return fail(lacks(0, ObjectClass::movable));
    }
    if (cleans) {
        set_state(arg(0), *cleans, ObjectState::dirty);
    }
    return done();
}

StepOutcome Transition::pour() {
    if (action_.args.size() == 1) {
        return touch_like(false, std::nullopt);
    }
    if (!hand_holding(arg(0))) {
        return fail(fmt::format("{} is not holding {}", obj_text(character_ref()), obj_text(arg(0))));
    }
    if (arg(0) == arg(1)) {
        return fail(fmt::format("{} cannot be poured into itself", obj_text(arg(0))));
    }
    if (auto why = unreachable(1)) {
        return fail(*why);
    }
    next_.relations.insert(Relation{Predicate::contains, arg(1), arg(0)});
    return done();
}

} // namespace

StepOutcome execute_action(const WorldState& state, const Action& action) {
    return Transition(state, action).run();
}

ExecRecord make_exec_record(const WorldState& before, const Action& action) {
    ExecRecord record{action, before.character_room, before.posture, std::nullopt, false, std::nullopt};
    if (action.type == ActionType::Grab && !action.args.empty()) {
        record.source_placement = before.placement(action.args[0]);
        if (record.source_placement) {
            const auto* holder = before.find(record.source_placement->object);
            record.source_is_room = holder != nullptr && holder->is(ObjectClass::room);
        }
    }
    for (const auto& rel : before.relations) {
        if (rel.predicate == Predicate::on_top && rel.subject == character_ref()) {
            record.seat_before = rel.object;
        }
    }
    return record;
}

std::optional<Action> inverse_action(const Action& action, const ExecRecord& record) {
    auto one = [](ActionType t, ObjectRef a) { return Action{t, {std::move(a)}}; };
    switch (action.type) {
    case ActionType::Walk:
    case ActionType::Run: return one(ActionType::Walk, record.room_before);
    case ActionType::Grab: {
        if (!record.source_placement) {
            return std::nullopt;
        }
        const auto& src = *record.source_placement;
        if (record.source_is_room) {
            return one(ActionType::Drop, action.args[0]);
        }
        auto type = src.predicate == Predicate::on_top ? ActionType::PutBack : ActionType::PutIn;
        return Action{type, {action.args[0], src.object}};
    }
    case ActionType::PutBack:
    case ActionType::PutIn:
    case ActionType::Drop: return one(ActionType::Grab, action.args[0]);
    case ActionType::Open: return one(ActionType::Close, action.args[0]);
    case ActionType::Close: return one(ActionType::Open, action.args[0]);
    case ActionType::SwitchOn: return one(ActionType::SwitchOff, action.args[0]);
    case ActionType::SwitchOff: return one(ActionType::SwitchOn, action.args[0]);
    case ActionType::Sit:
    case ActionType::Lie: return Action{ActionType::StandUp, {}};
    case ActionType::StandUp:
        if (!record.seat_before) {
            return std::nullopt;
        }
        return one(record.posture_before == Posture::lying ? ActionType::Lie : ActionType::Sit, *record.seat_before);
    case ActionType::Sleep: return Action{ActionType::WakeUp, {}};
    case ActionType::WakeUp: return Action{ActionType::Sleep, {}};
    default: return std::nullopt;
    }
}

std::string restorable_facts(const WorldState& state) {
    std::set<ObjectRef> held;
    for (auto hand : {Predicate::holds_rh, Predicate::holds_lh}) {
        if (auto h = state.held_in(hand)) {
            held.insert(*h);
        }
    }
    std::string out = fmt::format("room {} posture {}\nheld", ref_text(state.character_room), posture_name(state.posture));
    for (const auto& h : held) {
        out += ' ' + ref_text(h);
    }
    out += '\n';
    for (const auto& obj : state.objects) {
        std::string flags;
        for (auto s : {ObjectState::on, ObjectState::off, ObjectState::open, ObjectState::closed}) {
            if (obj.in(s)) {
                flags += fmt::format(" {}", state_name(s));
            }
        }
        if (!flags.empty()) {
            out += ref_text(obj.ref()) + flags + '\n';
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Goals

bool is_binary(GoalPredicate p) {
    switch (p) {
    case GoalPredicate::inside:
    case GoalPredicate::ontop:
    case GoalPredicate::close:
    case GoalPredicate::facing:
    case GoalPredicate::holds:
    case GoalPredicate::contains: return true;
    default: return false;
    }
}

namespace {

class GoalError : public Error {
public:
    using Error::Error;
};

std::vector<ObjectRef> parse_refs(std::span<const std::string_view> tokens, std::string_view line) {
    std::vector<ObjectRef> refs;
    std::size_t i = 0;
    while (i < tokens.size()) {
        ObjectRef ref{detail::to_lower(tokens[i]), 1};
        ++i;
        bool has_id = false;
        if (i < tokens.size()) {
            int id = 0;
            auto tok = tokens[i];
            auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), id);
            if (ec == std::errc{} && ptr == tok.data() + tok.size()) {
                ref.id = id;
                has_id = true;
                ++i;
            }
        }
        if (!has_id && ref != character_ref()) {
            throw GoalError(fmt::format("goal '{}': object '{}' needs an instance id", line, ref.name));
        }
        refs.push_back(ref);
    }
    return refs;
}

} // namespace

GoalCondition parse_goal(std::string_view line) {
    auto tokens = detail::split_ws(line);
    if (tokens.empty()) {
        throw GoalError("empty goal line");
    }
    auto pred = lookup<GoalPredicate>(kGoalNames, tokens.front());
    if (!pred) {
        throw GoalError(fmt::format("goal '{}': unknown predicate '{}'", line, tokens.front()));
    }
    auto refs = parse_refs(std::span(tokens).subspan(1), line);
    std::size_t want = is_binary(*pred) ? 2 : 1;
    if (refs.size() != want) {
        throw GoalError(fmt::format("goal '{}': expected {} object(s)", line, want));
    }
    GoalCondition goal{*pred, refs[0], std::nullopt};
    if (want == 2) {
        goal.object = refs[1];
    }
    return goal;
}

std::string render_goal(const GoalCondition& goal) {
    auto ref = [](const ObjectRef& r) { return r == character_ref() ? r.name : fmt::format("{} {}", r.name, r.id); };
    std::string out = fmt::format("{} {}", kGoalNames[static_cast<std::size_t>(goal.predicate)], ref(goal.subject));
    if (goal.object) {
        out += ' ' + ref(*goal.object);
    }
    return out;
}

bool goal_holds(const WorldState& state, const GoalCondition& goal) {
    auto state_is = [&](ObjectState s) {
        const auto* o = state.find(goal.subject);
        return o != nullptr && o->in(s);
    };
    const auto& subject = goal.subject;
    switch (goal.predicate) {
    case GoalPredicate::on: return state_is(ObjectState::on);
    case GoalPredicate::off: return state_is(ObjectState::off);
    case GoalPredicate::open: return state_is(ObjectState::open);
    case GoalPredicate::closed: return state_is(ObjectState::closed);
    case GoalPredicate::clean: return state_is(ObjectState::clean);
    case GoalPredicate::dirty: return state_is(ObjectState::dirty);
    case GoalPredicate::sitting: return subject == character_ref() && state.posture == Posture::sitting;
    case GoalPredicate::lying: return subject == character_ref() && state.posture == Posture::lying;
    case GoalPredicate::sleeping: return subject == character_ref() && state.posture == Posture::sleeping;
    case GoalPredicate::inside: {
        const auto* target = state.find(*goal.object);
        if (target != nullptr && target->is(ObjectClass::room)) {
            if (subject == character_ref()) {
                return state.character_room == *goal.object;
            }
            auto room = state.room_of(subject);
            return !state.is_held(subject) && room && *room == *goal.object;
        }
        return state.has(Predicate::inside, subject, *goal.object);
    }
    case GoalPredicate::ontop: return state.has(Predicate::on_top, subject, *goal.object);
    case GoalPredicate::close: return state.has(Predicate::close, subject, *goal.object);
    case GoalPredicate::facing: return state.has(Predicate::facing, subject, *goal.object);
    case GoalPredicate::holds: return subject == character_ref() && state.is_held(*goal.object);
    case GoalPredicate::contains: return state.has(Predicate::contains, subject, *goal.object);
    }
    return false;
}

std::vector<GoalCondition> achieved_goal_conditions(const WorldState& state, const std::vector<GoalCondition>& goals) {
    std::vector<GoalCondition> out;
    std::copy_if(goals.begin(), goals.end(), std::back_inserter(out),
                 [&](const GoalCondition& g) { return goal_holds(state, g); });
    return out;
}

// ---------------------------------------------------------------------------
// Snapshots

namespace {
std::atomic<std::uint64_t> g_next_store{1};
}

SnapshotStore::SnapshotStore() : id_(g_next_store.fetch_add(1)) {}

SnapshotToken SnapshotStore::snapshot(const WorldState& state) {
    states_.push_back(state);
    return SnapshotToken{id_, epoch_, states_.size() - 1};
}

WorldState SnapshotStore::restore(const SnapshotToken& token) const {
    if (token.store != id_ || token.epoch != epoch_ || token.index >= states_.size()) {
        throw SnapshotError(SnapshotErrorKind::StaleToken, "snapshot token is stale or belongs to another store");
    }
    return states_[token.index];
}

void SnapshotStore::clear() {
    states_.clear();
    ++epoch_;
}

} // namespace treeplan
