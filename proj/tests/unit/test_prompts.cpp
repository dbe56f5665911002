// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "testkit.hpp"
#include "treeplan/llm.hpp"
#include "treeplan/prompts.hpp"

using namespace treeplan;

namespace {

const Scene& apartment() {
    static const Scene scene = load_scene(read_text_file(testkit::scenes_dir() / "apartment-1.scene"));
    return scene;
}

std::size_t occurrences(const std::string& text, std::string_view needle) {
    std::size_t count = 0;
    for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) {
        ++count;
    }
    return count;
}

} // namespace

TEST_CASE("sampling prompt layout") {
    auto prompt = build_sampling_prompt(apartment(), "Take nap");
    CHECK(prompt.ends_with("Task: Take nap\n"));
    CHECK(prompt == build_sampling_prompt(apartment(), "Take nap"));
    for (const char* name : {"Task: Watch TV\n", "Task: Turn on light\n", "Task: Go to sleep\n", "Task: Brush teeth\n"}) {
        CHECK(occurrences(prompt, name) == 1);
    }
    CHECK(fixed_exemplars().size() == 4);
    CHECK(prompt.find("For action type 1, the available actions are: [Sleep], [StandUp], [WakeUp]\n") != std::string::npos);
    CHECK(prompt.find("For action type 3, the available actions are: [PutIn], [PutBack]\n") != std::string::npos);
    CHECK(prompt.find("You are in a house that consists of four rooms.") != std::string::npos);
    CHECK(prompt.find("All object names must be chosen from the above object list\n") != std::string::npos);
    CHECK(prompt.find(render_character_summary(observe(apartment().initial))) != std::string::npos);
    // Only the summary, not the full room listing.
    CHECK(prompt.find(render_observation(observe(apartment().initial))) == std::string::npos);
}

TEST_CASE("global info lists each object name once") {
    auto info = render_global_info(apartment().initial);
    auto line_start = info.find("Available objects in the house are : ");
    REQUIRE(line_start != std::string::npos);
    auto line = info.substr(line_start, info.find('\n', line_start) - line_start);
    CHECK(line.find("character") != std::string::npos);
    std::set<std::string> names;
    for (const auto& obj : apartment().initial.objects) {
        names.insert(obj.name);
        CHECK(line.find(obj.name) != std::string::npos);
    }
    names.insert("character");
    CHECK(occurrences(line, ", ") + 1 == names.size());
}

TEST_CASE("deciding prompt") {
    auto obs = observe(apartment().initial);
    std::vector<std::string> options{"[Walk] <bedroom> (1)", "[Walk] <kitchen> (1)", "[Sit] <couch> (1)",
                                     "[SwitchOn] <television> (1)", "[END]"};
    auto prompt = build_deciding_prompt(obs, "Take nap", {}, options, std::nullopt);
    CHECK(prompt.find("A. [Walk] <bedroom> (1)\nB. [Walk] <kitchen> (1)\nC. [Sit] <couch> (1)\n"
                      "D. [SwitchOn] <television> (1)\nE. [END]\n") != std::string::npos);
    CHECK(prompt.ends_with("The best choice of sub-task is: "));
    CHECK(prompt.find("Your task is: Take nap.") != std::string::npos);
    CHECK(prompt.find("Your previously executed sub-tasks are:\nNone\n") != std::string::npos);
    CHECK(prompt.find(render_observation(obs)) != std::string::npos);
    auto worked_example_errors = occurrences(prompt, "caused an error");
    CHECK(prompt.find("Task: Watch TV") == std::string::npos);
    CHECK(prompt.find("Available objects in the house") == std::string::npos);

    std::vector<Action> history{parse_action("[Walk] <bedroom> (1)"), parse_action("[Walk] <bed> (1)")};
    ErrorContext error{"[Lie] <bed> (1)", "bed is not lieable"};
    auto with_error = build_deciding_prompt(obs, "Take nap", history, options, error);
    CHECK(with_error.find("are:\n[Walk] <bedroom> (1)\n[Walk] <bed> (1)\n") != std::string::npos);
    CHECK(with_error.find("The sub-task: \"[Lie] <bed> (1)\" caused an error: bed is not lieable\n") != std::string::npos);
    CHECK(occurrences(with_error, "caused an error") == worked_example_errors + 1);
    CHECK(with_error.find("None\n") == std::string::npos);

    CHECK_THROWS_AS(build_deciding_prompt(obs, "t", {}, std::vector<std::string>{}, std::nullopt), Error);
    std::vector<std::string> many(27, "[Sleep]");
    CHECK_THROWS_AS(build_deciding_prompt(obs, "t", {}, many, std::nullopt), Error);
    many.resize(26);
    auto full = build_deciding_prompt(obs, "t", {}, many, std::nullopt);
    CHECK(full.find("Z. [Sleep]\n") != std::string::npos);
}

TEST_CASE("iterative prompt") {
    const auto& scene = apartment();
    std::vector<Action> history{parse_action("[Walk] <bedroom> (1)")};
    auto state = execute_action(scene.initial, history.front()).state;
    auto prompt = build_iterative_prompt(scene, state, "Take nap", history, std::nullopt);
    CHECK(prompt.ends_with("Task: Take nap\n[Walk] <bedroom> (1)\n"));
    CHECK(prompt.find("you can output [END]") != std::string::npos);
    CHECK(prompt.find("Task: Go to sleep\n") != std::string::npos);
    CHECK(prompt.find("Available objects in the house are : ") != std::string::npos);
    CHECK(prompt.find(render_observation(observe(state))) != std::string::npos);
    CHECK(prompt.find("caused an error") == std::string::npos);

    ErrorContext error{"[Lie] <bed> (1)", "nope"};
    auto again = build_iterative_prompt(scene, state, "Take nap", history, error);
    CHECK(again.find("The sub-task: \"[Lie] <bed> (1)\" caused an error: nope\n") != std::string::npos);
    CHECK(again == build_iterative_prompt(scene, state, "Take nap", history, error));
}
