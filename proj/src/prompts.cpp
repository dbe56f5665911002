// SPDX-License-Identifier: Apache-2.0
#include "treeplan/prompts.hpp"

#include <array>
#include <set>

#include <fmt/format.h>

#include "treeplan/llm.hpp"

namespace treeplan {

namespace {

constexpr std::string_view kSamplingInstruction =
    "You need to act as a task planner, who decompose a high-level household task into several sub-tasks. The "
    "temporal relationship between subtask sequences must adhere to common-sense logic.\n"
    "Each sub-task can be one of the following form: 1. [action_name]; 2. [action_name] <object name 1 > (object id "
    "1). 3. [action_name] <object name 1 > (object id 1) <object name 2 > (object id 2). The number of arguments "
    "depends on the action type.\n"
    "The (object id) is used to tell the simulator that the actions should be done on the same object instance. For "
    "example a program as:\n"
    "[Walk] <glass> (1)\n"
    "[Grab] <glass> (1)\n"
    "Indicates that the agent should first walk to a glass, and then grab that same glass.\n";

constexpr std::string_view kIterativeInstruction =
    "You need to act as a task planner, who decompose a high-level household task into several sub-tasks. The "
    "temporal relationship between subtask sequences must adhere to common-sense logic.\n"
    "Each sub-task can be one of the following form: 1. [action_name]; 2. [action_name] <object name 1> (object id "
    "1). 3. [action_name] <object name 1> (object id 1) <object name 2> (object id 2). The number of arguments "
    "depends on the action type.\n"
    "The (object id) is used to tell the simulator that the actions should be done on the same object instance. For "
    "example a program as:\n"
    "[Walk] <glass> (1)\n"
    "[Grab] <glass> (1)\n"
    "Indicates that the agent should first walk to a glass, and then grab that same glass.\n"
    "If you think your task has been successful, you can output [END], which is action type 1.\n";

constexpr std::string_view kDecidingInstruction =
    "You need to act as a home robot. At each moment, I will provide you with observations of your current "
    "environment, as well as the high-level task I want you to do, and previous mid-level sub-tasks that have been "
    "executed.\n"
    "Then, you need to select the best sub-task from the options I provide to complete the designated home task "
    "based on the observation and your past experience.\n"
    "When one choosed sub-task causes an error in the environment, you will be provided with the error information "
    "and the corresponding sub-task, and you need to re-choose a corrective sub-task at the current time step.\n"
    "For example, The sub-tasks that have been executed in the environment are:\n"
    "[GRAB] <plate> (1)\n"
    "[WALK] <dining room> (1)\n"
    "The choosed sub-task is:\n"
    "[PUTBACK] <plate> (1) <table> (1)\n"
    "The prompt (error information) would be:\n"
    "The sub-task: \"[PUTBACK] <plate> (1) <table> (1)\" caused an error: Script is not executable, since "
    "<character> (1) is not close to <table> (1) when executing \"[PUTBACK] <plate> (1) <table> (1) [1]\"\n"
    "Among the following actions, which action would you take.\n"
    "A. [Find] <table> (1)\n"
    "B. [Find] <plate> (1)\n"
    "A corrective choice of sub-task would be (You just need to provide the mark before the option you want to "
    "choose): A\n";

std::string number_word(std::size_t n) {
    static constexpr std::array<std::string_view, 13> kWords{"zero", "one", "two",   "three", "four",   "five", "six",
                                                             "seven", "eight", "nine", "ten", "eleven", "twelve"};
    return n < kWords.size() ? std::string(kWords[n]) : std::to_string(n);
}

std::string render_exemplars() {
    std::string out;
    for (const auto& ex : fixed_exemplars()) {
        out += fmt::format("Task: {}\n", ex.task);
        for (const auto& line : ex.lines) {
            out += line;
            out += '\n';
        }
        out += '\n';
    }
    return out;
}

std::string error_line(const ErrorContext& error) {
    return fmt::format("The sub-task: \"{}\" caused an error: {}\n", error.failed, error.message);
}

} // namespace

const std::vector<Exemplar>& fixed_exemplars() {
    static const std::vector<Exemplar> exemplars{
        {"Watch TV",
         {"[Find] <remote_control> (1)", "[Find] <television> (1)", "[SwitchOn] <television> (1)", "[Find] <couch> (1)",
          "[Sit] <couch> (1)", "[Touch] <remote_control> (1)", "[TurnTo] <television> (1)",
          "[LookAt] <television> (1)"}},
        {"Turn on light",
         {"[Walk] <dining_room> (1)", "[Walk] <light> (1)", "[Find] <light> (1)", "[SwitchOn] <light> (1)",
          "[Find] <light> (2)", "[SwitchOn] <light> (2)"}},
        {"Go to sleep", {"[Walk] <bedroom> (1)", "[Walk] <bed> (1)", "[Lie] <bed> (1)", "[Sleep]"}},
        {"Brush teeth",
         {"[Walk] <bathroom> (1)", "[Walk] <toothbrush_holder> (1)", "[Find] <toothbrush_holder> (1)",
          "[Find] <toothbrush> (1)", "[Grab] <toothbrush> (1)", "[Walk] <tooth_paste> (1)", "[Find] <tooth_paste> (1)",
          "[Grab] <tooth_paste> (1)", "[Pour] <tooth_paste> (1) <toothbrush> (1)", "[Find] <teeth> (1)",
          "[Scrub] <teeth> (1)"}},
    };
    return exemplars;
}

std::string render_global_info(const WorldState& state) {
    std::array<std::vector<std::string>, 3> by_arity;
    for (auto type : all_action_types()) {
        by_arity[static_cast<std::size_t>(arity_of(type))].push_back(fmt::format("[{}]", action_name(type)));
    }
    std::string out;
    for (std::size_t i = 0; i < by_arity.size(); ++i) {
        out += fmt::format("For action type {}, the available actions are: {}\n", i + 1, fmt::join(by_arity[i], ", "));
    }
    out += "All action_name of the sub-tasks must be chosen from the above actions, and follow the corresponding format.\n";

    std::vector<std::string> rooms;
    std::set<std::string> names{character_ref().name};
    for (const auto& obj : state.objects) {
        if (obj.is(ObjectClass::room)) {
            rooms.push_back(obj.name);
        }
        names.insert(obj.name);
    }
    out += fmt::format("You are in a house that consists of {} rooms. These rooms are {}.\n", number_word(rooms.size()),
                       fmt::join(rooms, ", "));
    out += fmt::format("Available objects in the house are : {}\n", fmt::join(names, ", "));
    out += "All object names must be chosen from the above object list\n";
    return out;
}

std::string build_sampling_prompt(const Scene& scene, std::string_view task) {
    std::string out(kSamplingInstruction);
    out += render_global_info(scene.initial);
    out += render_character_summary(observe(scene.initial));
    out += "\n\n";
    out += render_exemplars();
    out += fmt::format("Task: {}\n", task);
    return out;
}

std::string build_iterative_prompt(const Scene& scene, const WorldState& current, std::string_view task,
                                   std::span<const Action> history, const std::optional<ErrorContext>& error) {
    std::string out(kIterativeInstruction);
    out += render_global_info(scene.initial);
    out += render_observation(observe(current));
    out += '\n';
    if (error) {
        out += error_line(*error);
    }
    out += '\n';
    out += render_exemplars();
    out += fmt::format("Task: {}\n", task);
    for (const auto& a : history) {
        out += render_action(a);
        out += '\n';
    }
    return out;
}

std::string build_deciding_prompt(const Observation& obs, std::string_view task, std::span<const Action> history,
                                  std::span<const std::string> options, const std::optional<ErrorContext>& error) {
    if (options.empty() || options.size() > kMaxOptions) {
        throw Error(fmt::format("deciding prompt needs 1..{} options, got {}", kMaxOptions, options.size()));
    }
    std::string out(kDecidingInstruction);
    out += '\n';
    out += render_observation(obs);
    out += fmt::format("\n\nYour task is: {}.\n\n", task);
    out += "Your previously executed sub-tasks are:\n";
    if (history.empty()) {
        out += "None\n";
    }
    for (const auto& a : history) {
        out += render_action(a);
        out += '\n';
    }
    out += '\n';
    if (error) {
        out += error_line(*error);
    }
    out += "Among the following sub-tasks, which one would you take.\n";
    for (std::size_t i = 0; i < options.size(); ++i) {
        out += fmt::format("{}. {}\n", option_label(i), options[i]);
    }
    out += "The best choice of sub-task is: ";
    return out;
}

} // namespace treeplan
