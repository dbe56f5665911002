// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "treeplan/action_tree.hpp"
#include "treeplan/errors.hpp"
#include "treeplan/grammar.hpp"
#include "treeplan/llm.hpp"
#include "treeplan/prompts.hpp"
#include "treeplan/scene.hpp"
#include "treeplan/world.hpp"

namespace treeplan {

enum class Method { tree, iterative, local_replan, global_replan };
enum class Termination { completed, exhausted_tree, max_corrections, max_steps, execution_failed };

std::string_view method_name(Method m);
std::optional<Method> parse_method(std::string_view text);
std::string_view termination_name(Termination t);

enum class PlannerErrorKind { AllPlansEmpty, InvalidConfig };
using PlannerError = KindedError<PlannerErrorKind>;

struct PlannerConfig {
    int n_samples = 25;
    int vote_n = 20;
    double sampling_temperature = 0.8;
    double sampling_top_p = 0.95;
    double deciding_temperature = 0.7;
    double deciding_top_p = 1.0;
    double iterative_temperature = 1.0;
    double iterative_top_p = 1.0;
    int max_corrections = 10;
    int max_steps = 20;
    int sampling_max_tokens = 512;
    int deciding_max_tokens = 16;
    int step_max_tokens = 32;
    bool correction_enabled = true;
    bool oracle = false;
    bool keep_prompts = false; // retain full prompt texts in the result
    double rate_per_1k = kDefaultRatePer1k;
};

enum class StepRole { plan, inverse, approach };

struct ExecutedStep {
    std::string text; // rendered action, or the raw text when it did not parse
    std::optional<Action> action;
    StepRole role = StepRole::plan;
    bool ok = true;
    std::string error;
};

struct PromptRecord {
    Phase phase = Phase::plan_sampling;
    std::string text;
};

struct EpisodeResult {
    std::string scene;
    std::string task;
    Method method = Method::tree;
    bool correction_enabled = true;

    std::vector<ExecutedStep> trace;     // every attempted action, in order
    std::vector<Action> history;         // surviving (non-reverted) actions
    WorldState final_state;
    std::vector<GoalCondition> achieved_goals;
    bool exec_ok = false;
    int corrections = 0;
    Termination termination = Termination::completed;
    TokenLedger ledger;
    int degenerate_votes = 0;

    std::optional<ActionTree> tree;      // tree method only
    std::vector<NodeId> final_path;      // root .. last node reached
    std::vector<Plan> sampled_plans;     // tree method only, after oracle injection
    std::vector<std::string> log;        // JSON lines with sorted keys
    std::vector<PromptRecord> prompts;   // filled when keep_prompts is set
};

/// One sampling call with n = N; unparseable or empty completions are dropped.
std::vector<Plan> sample_plans(Backend& backend, const Scene& scene, const TaskSpec& task, int n,
                               const PlannerConfig& config, TokenLedger& ledger, std::vector<std::string>* log = nullptr,
                               std::vector<PromptRecord>* prompts = nullptr);

/// Appends the task's gold plan (even if an identical plan was sampled).
std::vector<Plan> inject_oracle(std::vector<Plan> plans, const TaskSpec& task);

/// Executes `tree` from the scene's initial state. The tree is updated in
/// place as nodes are invalidated.
EpisodeResult grounded_deciding_loop(Backend& backend, const Scene& scene, const TaskSpec& task, ActionTree& tree,
                                     const PlannerConfig& config, TokenLedger ledger = TokenLedger{});

EpisodeResult run_tree_planner(Backend& backend, const Scene& scene, const TaskSpec& task, const PlannerConfig& config);

EpisodeResult run_iterative_planner(Backend& backend, const Scene& scene, const TaskSpec& task,
                                    const PlannerConfig& config);

enum class ReplanStrategy { local, global };

EpisodeResult run_with_replan(Backend& backend, const Scene& scene, const TaskSpec& task, ReplanStrategy strategy,
                              const PlannerConfig& config);

EpisodeResult run_method(Method method, Backend& backend, const Scene& scene, const TaskSpec& task,
                         const PlannerConfig& config);

} // namespace treeplan
