// SPDX-License-Identifier: Apache-2.0
#include "treeplan/scene.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "text_util.hpp"

namespace treeplan {

namespace {

[[noreturn]] void parse_error(std::size_t line_no, std::string_view why) {
    throw SceneError(SceneErrorKind::ParseError, fmt::format("line {}: {}", line_no, why));
}

int parse_id(std::string_view token, std::size_t line_no) {
    int id = 0;
    auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), id);
    if (ec != std::errc{} || ptr != token.data() + token.size() || id <= 0) {
        parse_error(line_no, fmt::format("'{}' is not a positive instance id", token));
    }
    return id;
}

ObjectRef parse_ref(std::span<const std::string_view> tokens, std::size_t line_no) {
    if (tokens.size() != 2) {
        parse_error(line_no, "expected '<name> <id>'");
    }
    return ObjectRef{detail::to_lower(tokens[0]), parse_id(tokens[1], line_no)};
}

std::pair<std::string_view, std::string_view> split_key(std::string_view line, char sep, std::size_t line_no) {
    auto pos = line.find(sep);
    if (pos == std::string_view::npos) {
        parse_error(line_no, fmt::format("expected '{}'", sep));
    }
    return {detail::trim(line.substr(0, pos)), detail::trim(line.substr(pos + 1))};
}

std::vector<std::string_view> split_on(std::string_view text, char sep) {
    std::vector<std::string_view> parts;
    std::size_t start = 0;
    while (true) {
        auto pos = text.find(sep, start);
        parts.push_back(detail::trim(text.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos) {
            return parts;
        }
        start = pos + 1;
    }
}

struct PendingPlacement {
    ObjectRef object;
    Predicate predicate;
    ObjectRef target;
    std::size_t line_no;
};

void validate(const Scene& scene) {
    const auto& state = scene.initial;
    auto problems = check_invariants(state);
    if (!problems.empty()) {
        throw SceneError(SceneErrorKind::InvariantViolation,
                         fmt::format("scene '{}': {}", scene.name, problems.front()));
    }
    auto known = [&](const ObjectRef& r) { return r == character_ref() || state.find(r) != nullptr; };
    for (const auto& task : scene.tasks) {
        for (const auto& goal : task.goals) {
            if (!known(goal.subject) || (goal.object && !known(*goal.object))) {
                throw SceneError(SceneErrorKind::DanglingReference,
                                 fmt::format("task '{}': goal '{}' references a missing object", task.name, render_goal(goal)));
            }
        }
        if (task.goals.empty()) {
            throw SceneError(SceneErrorKind::InvariantViolation, fmt::format("task '{}' has no goals", task.name));
        }
        for (const auto& action : task.gold_plan.actions) {
            for (const auto& arg : action.args) {
                if (state.find(arg) == nullptr) {
                    throw SceneError(SceneErrorKind::DanglingReference,
                                     fmt::format("task '{}': gold action {} references a missing object", task.name,
                                                 render_action(action)));
                }
            }
        }
        if (task.gold_plan.actions.size() < 3) {
            throw SceneError(SceneErrorKind::InvariantViolation,
                             fmt::format("task '{}': gold plan has fewer than 3 actions", task.name));
        }
        auto run = dry_run(state, task.gold_plan.actions);
        if (run.error) {
            throw SceneError(SceneErrorKind::InvariantViolation,
                             fmt::format("task '{}': gold step {} fails: {}", task.name, run.executed + 1, run.error->message));
        }
        auto achieved = achieved_goal_conditions(run.final_state, task.goals);
        if (achieved.size() != task.goals.size()) {
            throw SceneError(SceneErrorKind::InvariantViolation,
                             fmt::format("task '{}': gold plan achieves {}/{} goals", task.name, achieved.size(),
                                         task.goals.size()));
        }
    }
}

} // namespace

const TaskSpec* Scene::task(std::string_view task_name) const {
    for (const auto& t : tasks) {
        if (t.name == task_name) {
            return &t;
        }
    }
    return nullptr;
}

DryRun dry_run(const WorldState& start, std::span<const Action> actions) {
    DryRun run{start, 0, std::nullopt};
    for (const auto& action : actions) {
        auto outcome = execute_action(run.final_state, action);
        if (!outcome.ok()) {
            run.error = outcome.error;
            return run;
        }
        run.final_state = std::move(outcome.state);
        ++run.executed;
    }
    return run;
}

Scene load_scene(std::string_view document) {
    Scene scene;
    auto& state = scene.initial;
    std::string section;
    std::optional<ObjectRef> start_room;
    std::vector<PendingPlacement> placements;
    std::vector<std::pair<Relation, std::size_t>> relations;
    TaskSpec* task = nullptr;

    auto add_object = [&](WorldObject obj, std::size_t line_no) {
        if (std::any_of(state.objects.begin(), state.objects.end(), [&](const auto& o) { return o.ref() == obj.ref(); })) {
            parse_error(line_no, fmt::format("duplicate object {}", render_object(obj.ref())));
        }
        if (obj.ref() == character_ref()) {
            parse_error(line_no, "'character' is reserved");
        }
        state.objects.push_back(std::move(obj));
    };

    std::size_t line_no = 0;
    for (auto raw : detail::split_lines(document)) {
        ++line_no;
        auto line = detail::trim(raw);
        if (line.empty() || line.front() == '#') {
            continue;
        }
        if (line.front() == '[' && line.back() == ']') {
            section = std::string(line.substr(1, line.size() - 2));
            if (section != "scene" && section != "rooms" && section != "objects" && section != "relations" &&
                section != "tasks") {
                parse_error(line_no, fmt::format("unknown section [{}]", section));
            }
            continue;
        }
        if (section == "scene") {
            auto [key, value] = split_key(line, '=', line_no);
            if (key == "name") {
                scene.name = std::string(value);
            } else if (key == "room") {
                start_room = parse_ref(detail::split_ws(value), line_no);
            } else if (key == "posture") {
                auto p = parse_posture(value);
                if (!p || *p == Posture::sleeping) {
                    parse_error(line_no, fmt::format("unsupported initial posture '{}'", value));
                }
                state.posture = *p;
            } else {
                parse_error(line_no, fmt::format("unknown scene key '{}'", key));
            }
        } else if (section == "rooms") {
            auto ref = parse_ref(detail::split_ws(line), line_no);
            WorldObject room{ref.name, ref.id, {ObjectClass::room}, {}};
            add_object(std::move(room), line_no);
        } else if (section == "objects") {
            auto fields = split_on(line, '|');
            if (fields.size() != 4) {
                parse_error(line_no, "object lines have four '|'-separated fields");
            }
            auto ref = parse_ref(detail::split_ws(fields[0]), line_no);
            WorldObject obj{ref.name, ref.id, {}, {}};
            for (auto tok : detail::split_ws(fields[1])) {
                auto c = parse_class(tok);
                if (!c || *c == ObjectClass::room) {
                    parse_error(line_no, fmt::format("unknown object class '{}'", tok));
                }
                obj.classes.set(*c);
            }
            for (auto tok : detail::split_ws(fields[2])) {
                auto s = parse_state(tok);
                if (!s) {
                    parse_error(line_no, fmt::format("unknown object state '{}'", tok));
                }
                obj.states.set(*s);
            }
            auto where = detail::split_ws(fields[3]);
            if (where.size() != 3) {
                parse_error(line_no, "placement must be 'inside <name> <id>' or 'ontop <name> <id>'");
            }
            auto pred = parse_predicate(where[0]);
            if (!pred || (*pred != Predicate::inside && *pred != Predicate::on_top)) {
                parse_error(line_no, fmt::format("unknown placement '{}'", where[0]));
            }
            placements.push_back({ref, *pred, parse_ref(std::span(where).subspan(1), line_no), line_no});
            add_object(std::move(obj), line_no);
        } else if (section == "relations") {
            auto tokens = detail::split_ws(line);
            if (tokens.empty()) {
                continue;
            }
            auto pred = parse_predicate(tokens[0]);
            if (!pred || (*pred != Predicate::facing && *pred != Predicate::close)) {
                parse_error(line_no, fmt::format("only 'facing' and 'close' may be declared, got '{}'", tokens[0]));
            }
            if (tokens.size() != 5) {
                parse_error(line_no, "relation lines are '<pred> <name> <id> <name> <id>'");
            }
            Relation rel{*pred, parse_ref(std::span(tokens).subspan(1, 2), line_no),
                         parse_ref(std::span(tokens).subspan(3, 2), line_no)};
            relations.emplace_back(rel, line_no);
        } else if (section == "tasks") {
            auto [key, value] = split_key(line, ':', line_no);
            if (key == "task") {
                scene.tasks.push_back(TaskSpec{std::string(value), {}, {}});
                task = &scene.tasks.back();
                continue;
            }
            if (task == nullptr) {
                parse_error(line_no, "task fields must follow a 'task:' line");
            }
            if (key == "goal") {
                try {
                    task->goals.push_back(parse_goal(value));
                } catch (const Error& e) {
                    parse_error(line_no, e.what());
                }
            } else if (key == "gold") {
                try {
                    task->gold_plan.actions.push_back(parse_action(value));
                } catch (const GrammarError& e) {
                    parse_error(line_no, e.what());
                }
            } else {
                parse_error(line_no, fmt::format("unknown task key '{}'", key));
            }
        } else {
            parse_error(line_no, "content outside of a section");
        }
    }

    if (scene.name.empty()) {
        throw SceneError(SceneErrorKind::ParseError, "[scene] needs a name");
    }
    if (!start_room) {
        throw SceneError(SceneErrorKind::ParseError, "[scene] needs the character's starting room");
    }
    std::sort(state.objects.begin(), state.objects.end(), [](const auto& a, const auto& b) { return a.ref() < b.ref(); });
    auto need = [&](const ObjectRef& r, std::size_t at) {
        if (state.find(r) == nullptr) {
            throw SceneError(SceneErrorKind::DanglingReference,
                             fmt::format("line {}: {} is not declared", at, render_object(r)));
        }
    };
    need(*start_room, 0);
    state.character_room = *start_room;
    for (const auto& p : placements) {
        need(p.target, p.line_no);
        state.relations.insert(Relation{p.predicate, p.object, p.target});
    }
    for (const auto& [rel, at] : relations) {
        need(rel.subject, at);
        need(rel.object, at);
        state.relations.insert(rel);
    }
    validate(scene);
    return scene;
}

std::string serialize_scene(const Scene& scene) {
    const auto& state = scene.initial;
    std::string out = fmt::format("[scene]\nname = {}\nroom = {} {}\nposture = {}\n\n[rooms]\n", scene.name,
                                  state.character_room.name, state.character_room.id, posture_name(state.posture));
    for (const auto& obj : state.objects) {
        if (obj.is(ObjectClass::room)) {
            out += fmt::format("{} {}\n", obj.name, obj.id);
        }
    }
    out += "\n[objects]\n";
    for (const auto& obj : state.objects) {
        if (obj.is(ObjectClass::room)) {
            continue;
        }
        std::vector<std::string_view> classes;
        std::vector<std::string_view> states;
        for (std::size_t c = 0; c < kObjectClassCount; ++c) {
            if (obj.is(static_cast<ObjectClass>(c))) {
                classes.push_back(class_name(static_cast<ObjectClass>(c)));
            }
        }
        for (std::size_t s = 0; s < kObjectStateCount; ++s) {
            if (obj.in(static_cast<ObjectState>(s))) {
                states.push_back(state_name(static_cast<ObjectState>(s)));
            }
        }
        auto where = state.placement(obj.ref());
        out += fmt::format("{} {} | {} | {} | {} {} {}\n", obj.name, obj.id, fmt::join(classes, " "), fmt::join(states, " "),
                           where ? predicate_name(where->predicate) : "inside", where ? where->object.name : "?",
                           where ? where->object.id : 0);
    }
    out += "\n[relations]\n";
    for (const auto& rel : state.relations) {
        if (rel.predicate == Predicate::facing || rel.predicate == Predicate::close) {
            out += fmt::format("{} {} {} {} {}\n", predicate_name(rel.predicate), rel.subject.name, rel.subject.id,
                               rel.object.name, rel.object.id);
        }
    }
    out += "\n[tasks]\n";
    for (const auto& task : scene.tasks) {
        out += fmt::format("task: {}\n", task.name);
        for (const auto& goal : task.goals) {
            out += fmt::format("goal: {}\n", render_goal(goal));
        }
        for (const auto& action : task.gold_plan.actions) {
            out += fmt::format("gold: {}\n", render_action(action));
        }
    }
    return out;
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw SceneError(SceneErrorKind::NotFound, fmt::format("cannot open '{}'", path.string()));
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

std::vector<Scene> load_scene_pack(const std::filesystem::path& path) {
    std::vector<std::filesystem::path> files;
    if (std::filesystem::is_directory(path)) {
        for (const auto& entry : std::filesystem::directory_iterator(path)) {
            if (entry.is_regular_file() && entry.path().extension() == ".scene") {
                files.push_back(entry.path());
            }
        }
        std::sort(files.begin(), files.end());
    } else {
        files.push_back(path);
    }
    if (files.empty()) {
        throw SceneError(SceneErrorKind::NotFound, fmt::format("no .scene files in '{}'", path.string()));
    }
    std::vector<Scene> scenes;
    for (const auto& file : files) {
        try {
            scenes.push_back(load_scene(read_text_file(file)));
        } catch (const SceneError& e) {
            throw SceneError(e.kind(), fmt::format("{}: {}", file.filename().string(), e.what()));
        }
    }
    return scenes;
}

} // namespace treeplan
