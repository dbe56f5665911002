// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "testkit.hpp"
#include "treeplan/scene.hpp"

using namespace treeplan;

namespace {

std::string with_task(const std::string& goal, const std::string& gold) {
    return R"(
[scene]
name = tiny
room = kitchen 1

[rooms]
kitchen 1
bedroom 1

[objects]
lamp 1 | switchable | off | inside bedroom 1
cup 1 | movable | | inside kitchen 1

[tasks]
task: Lamp
goal: )" + goal + "\n" + gold;
}

SceneErrorKind load_error(const std::string& doc) {
    try {
        load_scene(doc);
    } catch (const SceneError& e) {
        return e.kind();
    }
    FAIL("scene loaded");
    return SceneErrorKind::NotFound;
}

} // namespace

TEST_CASE("bundled pack") {
    auto pack = load_scene_pack(testkit::scenes_dir());
    REQUIRE(pack.size() == 2);
    const auto& a1 = pack[0];
    CHECK(a1.name == "apartment-1");
    int rooms = 0;
    for (const auto& o : a1.initial.objects) {
        rooms += o.is(ObjectClass::room) ? 1 : 0;
    }
    CHECK(rooms == 4);
    CHECK(a1.initial.objects.size() - static_cast<std::size_t>(rooms) >= 40);
    CHECK(a1.tasks.size() >= 5);
    CHECK(a1.task("Take nap") != nullptr);
    CHECK(a1.task("Fly") == nullptr);
}

TEST_CASE("every bundled gold plan reaches all goals") {
    for (const auto& scene : load_scene_pack(testkit::scenes_dir())) {
        for (const auto& task : scene.tasks) {
            auto run = dry_run(scene.initial, task.gold_plan.actions);
            CHECK_FALSE(run.error.has_value());
            CHECK(achieved_goal_conditions(run.final_state, task.goals).size() == task.goals.size());
        }
    }
}

TEST_CASE("serialize round trip") {
    for (const auto& scene : load_scene_pack(testkit::scenes_dir())) {
        auto text = serialize_scene(scene);
        CHECK(load_scene(text) == scene);
        CHECK(serialize_scene(load_scene(text)) == text);
    }
}

TEST_CASE("load errors") {
    const std::string gold = "gold: [Walk] <bedroom> (1)\ngold: [Walk] <lamp> (1)\ngold: [SwitchOn] <lamp> (1)\n";
    CHECK_NOTHROW(load_scene(with_task("on lamp 1", gold)));
    CHECK(load_error(with_task("on sofa 1", gold)) == SceneErrorKind::DanglingReference);
    // Third step fails because the character is not close to the lamp.
    CHECK(load_error(with_task("on lamp 1", "gold: [Walk] <bedroom> (1)\ngold: [Find] <cup> (1)\ngold: [SwitchOn] <lamp> (1)\n")) ==
          SceneErrorKind::InvariantViolation);
    CHECK(load_error(with_task("on lamp 1", "gold: [Walk] <lamp> (1)\ngold: [SwitchOn] <lamp> (1)\n")) ==
          SceneErrorKind::InvariantViolation);
    CHECK(load_error(with_task("off lamp 1", gold)) == SceneErrorKind::InvariantViolation);
    CHECK(load_error("[scene]\nroom = kitchen 1\n") == SceneErrorKind::ParseError);
    CHECK(load_error("[objects]\nlamp 1 | flying | | inside kitchen 1\n") == SceneErrorKind::ParseError);
    CHECK_THROWS_AS(load_scene_pack(testkit::source_dir() / "no-such-dir"), SceneError);
}

TEST_CASE("dry run stops at the first failure") {
    auto scene = load_scene(with_task("on lamp 1", "gold: [Walk] <bedroom> (1)\ngold: [Walk] <lamp> (1)\ngold: [SwitchOn] <lamp> (1)\n"));
    std::vector<Action> actions{parse_action("[Walk] <bedroom> (1)"), parse_action("[SwitchOn] <lamp> (1)"),
                                parse_action("[Walk] <lamp> (1)")};
    auto run = dry_run(scene.initial, actions);
    CHECK(run.executed == 1);
    REQUIRE(run.error.has_value());
    CHECK(run.final_state.character_room == ObjectRef{"bedroom", 1});
}
