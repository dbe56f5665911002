// SPDX-License-Identifier: Apache-2.0
#include "treeplan/planner.hpp"

#include <algorithm>
#include <stdexcept>

#include <fmt/format.h>
#include <json.hpp>

#include "text_util.hpp"

namespace treeplan {

using nlohmann::json;

std::string_view method_name(Method m) {
    switch (m) {
    case Method::tree: return "tree";
    case Method::iterative: return "iterative";
    case Method::local_replan: return "local_replan";
    case Method::global_replan: return "global_replan";
    }
    return "unknown";
}

std::optional<Method> parse_method(std::string_view text) {
    for (auto m : {Method::tree, Method::iterative, Method::local_replan, Method::global_replan}) {
        if (text == method_name(m)) {
            return m;
        }
    }
    return std::nullopt;
}

std::string_view termination_name(Termination t) {
    switch (t) {
    case Termination::completed: return "completed";
    case Termination::exhausted_tree: return "exhausted_tree";
    case Termination::max_corrections: return "max_corrections";
    case Termination::max_steps: return "max_steps";
    case Termination::execution_failed: return "execution_failed";
    }
    return "unknown";
}

namespace {

std::string hash_text(std::string_view prompt) { return fmt::format("{:016x}", prompt_hash(prompt)); }

void emit(std::vector<std::string>* log, json record) {
    if (log != nullptr) {
        record["i"] = log->size();
        log->push_back(record.dump());
    }
}

void keep(std::vector<PromptRecord>* prompts, Phase phase, const std::string& text) {
    if (prompts != nullptr) {
        prompts->push_back(PromptRecord{phase, text});
    }
}

// Object the character must be close to before `inverse` can succeed.
std::optional<ObjectRef> approach_target(const Action& inverse) {
    switch (inverse.type) {
    case ActionType::Grab:
    case ActionType::Open:
    case ActionType::Close:
    case ActionType::SwitchOn:
    case ActionType::SwitchOff:
    case ActionType::Sit:
    case ActionType::Lie: return inverse.args.at(0);
    case ActionType::PutBack:
    case ActionType::PutIn: return inverse.args.at(1);
    default: return std::nullopt;
    }
}

std::string_view role_name(StepRole role) {
    switch (role) {
    case StepRole::plan: return "plan";
    case StepRole::inverse: return "inverse";
    case StepRole::approach: return "approach";
    }
    return "plan";
}

// State shared by all planners while an episode runs.
class Episode {
public:
    Episode(const Scene& scene, const TaskSpec& task, Method method, const PlannerConfig& config, TokenLedger ledger)
        : scene_(scene), task_(task), config_(config), state_(scene.initial) {
        result_.scene = scene.name;
        result_.task = task.name;
        result_.method = method;
        result_.correction_enabled = config.correction_enabled;
        result_.ledger = std::move(ledger);
    }

    EpisodeResult& result() { return result_; }
    const WorldState& state() const { return state_; }
    std::vector<std::string>* log() { return &result_.log; }
    std::vector<PromptRecord>* prompts() { return config_.keep_prompts ? &result_.prompts : nullptr; }

    RequestTag tag(std::string_view stream) {
        return RequestTag{scene_.name, task_.name, std::string(stream), ++seq_[std::string(stream)]};
    }

    /// Runs one action against the world and records it in the trace.
    StepOutcome execute(const Action& action, StepRole role) {
        auto outcome = execute_action(state_, action);
        ExecutedStep step{render_action(action), action, role, outcome.ok(), outcome.error ? outcome.error->message : ""};
        json record{{"event", "execute"}, {"action", step.text}, {"role", role_name(role)}, {"ok", step.ok}};
        if (!step.ok) {
            record["error"] = step.error;
        }
        emit(log(), std::move(record));
        result_.trace.push_back(std::move(step));
        if (outcome.ok()) {
            state_ = outcome.state;
        }
        return outcome;
    }

    void record_unparsed(const std::string& text, const std::string& message) {
        result_.trace.push_back(ExecutedStep{text, std::nullopt, StepRole::plan, false, message});
        emit(log(), json{{"event", "execute"}, {"action", text}, {"role", "plan"}, {"ok", false}, {"error", message}});
    }

    void reset_world(const WorldState& state) { state_ = state; }

    EpisodeResult finish(Termination termination, std::vector<Action> history) {
        result_.termination = termination;
        result_.history = std::move(history);
        result_.final_state = state_;
        result_.achieved_goals = achieved_goal_conditions(state_, task_.goals);
        result_.exec_ok = termination == Termination::completed || termination == Termination::max_steps;
        emit(log(), json{{"event", "end"},
                         {"termination", termination_name(termination)},
                         {"corrections", result_.corrections},
                         {"history", result_.history.size()},
                         {"achieved", result_.achieved_goals.size()},
                         {"goals", task_.goals.size()},
                         {"tokens", result_.ledger.total_tokens()}});
        return std::move(result_);
    }

    const Scene& scene_;
    const TaskSpec& task_;
    const PlannerConfig& config_;

private:
    WorldState state_;
    EpisodeResult result_;
    std::map<std::string, int> seq_;
};

void check_config(const PlannerConfig& config) {
    if (config.n_samples < 1 || config.vote_n < 1 || config.max_corrections < 0 || config.max_steps < 1) {
        throw PlannerError(PlannerErrorKind::InvalidConfig,
                           "n_samples, vote_n and max_steps must be positive; max_corrections non-negative");
    }
}

} // namespace

std::vector<Plan> sample_plans(Backend& backend, const Scene& scene, const TaskSpec& task, int n,
                               const PlannerConfig& config, TokenLedger& ledger, std::vector<std::string>* log,
                               std::vector<PromptRecord>* prompts) {
    if (n < 1) {
        throw PlannerError(PlannerErrorKind::InvalidConfig, "sample count must be at least 1");
    }
    CompletionRequest request;
    request.prompt = build_sampling_prompt(scene, task.name);
    request.n = n;
    request.temperature = config.sampling_temperature;
    request.top_p = config.sampling_top_p;
    request.max_tokens = config.sampling_max_tokens;
    request.tag = RequestTag{scene.name, task.name, "sampling", 1};
    auto response = complete(backend, request, Phase::plan_sampling, ledger);
    keep(prompts, Phase::plan_sampling, request.prompt);

    std::vector<Plan> plans;
    for (std::size_t i = 0; i < response.completions.size(); ++i) {
        try {
            plans.push_back(parse_plan(response.completions[i], static_cast<int>(i)));
        } catch (const GrammarError&) {
            // An empty or wholly malformed completion contributes no plan.
        }
    }
    emit(log, json{{"event", "sample"},
                   {"seq", request.tag.seq},
                   {"n", n},
                   {"prompt_hash", hash_text(request.prompt)},
                   {"prompt_tokens", response.usage.prompt_tokens},
                   {"generated_tokens", response.usage.generated_tokens},
                   {"plans", plans.size()},
                   {"dropped", response.completions.size() - plans.size()}});
    if (plans.empty()) {
        throw PlannerError(PlannerErrorKind::AllPlansEmpty,
                           fmt::format("none of the {} sampled completions for '{}' parsed as a plan", n, task.name));
    }
    return plans;
}

std::vector<Plan> inject_oracle(std::vector<Plan> plans, const TaskSpec& task) {
    Plan gold = task.gold_plan;
    gold.source_index = static_cast<int>(plans.size());
    plans.push_back(std::move(gold));
    return plans;
}

namespace {

EpisodeResult deciding_loop(Backend& backend, Episode& ep, ActionTree& tree) {
    const auto& task = ep.task_;
    const auto& config = ep.config_;
    auto& result = ep.result();

    NodeId current = tree.root();
    std::vector<Action> history;
    std::vector<ExecRecord> records;
    std::optional<ErrorContext> error;

    auto finish = [&](Termination t) {
        result.final_path = tree.node_path(current);
        auto out = ep.finish(t, history);
        out.tree = tree;
        return out;
    };

    while (true) {
        if (history != tree.path_to(current)) {
            throw std::logic_error("executed history diverged from the tree path");
        }
        const auto& here = tree.node(current);
        auto valid = tree.valid_children(current);
        bool end_offered = !here.is_root() && here.is_plan_end();
        if (valid.empty()) {
            return finish(end_offered ? Termination::completed : Termination::exhausted_tree);
        }
        std::size_t cap = end_offered ? kMaxOptions - 1 : kMaxOptions;
        if (valid.size() > cap) {
            valid.resize(cap);
        }

        std::optional<NodeId> chosen;
        if (valid.size() == 1 && !end_offered) {
            chosen = valid.front();
            emit(ep.log(), json{{"event", "fast_path"},
                                {"node", current.value},
                                {"chosen", render_action(*tree.node(*chosen).action)}});
        } else {
            std::vector<std::string> options;
            for (auto id : valid) {
                if (!tree.node(id).valid) {
                    throw std::logic_error("an invalidated node was offered as an option");
                }
                options.push_back(render_action(*tree.node(id).action));
            }
            if (end_offered) {
                options.emplace_back(kEndOption);
            }
            CompletionRequest request;
            request.prompt = build_deciding_prompt(observe(ep.state()), task.name, history, options, error);
            request.n = config.vote_n;
            request.temperature = config.deciding_temperature;
            request.top_p = config.deciding_top_p;
            request.max_tokens = config.deciding_max_tokens;
            request.tag = ep.tag(config.oracle ? "oracle_deciding" : "deciding");
            auto response = complete(backend, request, Phase::grounded_deciding, result.ledger);
            keep(ep.prompts(), Phase::grounded_deciding, request.prompt);
            auto vote = majority_vote(response.completions, options.size());
            result.degenerate_votes += vote.degenerate ? 1 : 0;
            json record{{"event", "decide"},
                        {"seq", request.tag.seq},
                        {"node", current.value},
                        {"options", options},
                        {"counts", vote.counts},
                        {"no_match", vote.no_match},
                        {"degenerate", vote.degenerate},
                        {"chosen", options[vote.winner]},
                        {"prompt_hash", hash_text(request.prompt)},
                        {"prompt_tokens", response.usage.prompt_tokens},
                        {"generated_tokens", response.usage.generated_tokens}};
            if (error) {
                record["error_context"] = error->failed;
            }
            emit(ep.log(), std::move(record));
            if (vote.winner < valid.size()) {
                chosen = valid[vote.winner];
            }
        }
        if (!chosen) {
            return finish(Termination::completed);
        }

        const Action action = *tree.node(*chosen).action;
        auto record = make_exec_record(ep.state(), action);
        auto outcome = ep.execute(action, StepRole::plan);
        if (outcome.ok()) {
            history.push_back(action);
            records.push_back(std::move(record));
            current = *chosen;
            error.reset();
            continue;
        }

        if (!config.correction_enabled) {
            return finish(Termination::execution_failed);
        }
        error = ErrorContext{render_action(action), outcome.error->message};
        auto flipped = tree.mark_invalid(*chosen);
        std::vector<std::size_t> flipped_ids;
        for (auto id : flipped) {
            flipped_ids.push_back(id.value);
        }
        auto target = tree.find_backtrack_target(*chosen);
        // A plan that ends on the current path and lost every continuation is
        // still a finished plan: stop there instead of backtracking past it.
        std::optional<NodeId> plan_end;
        for (NodeId n = current; !tree.node(n).is_root() && n != target; n = *tree.node(n).parent) {
            if (tree.node(n).is_plan_end()) {
                plan_end = n;
                break;
            }
        }
        if (plan_end == current) {
            emit(ep.log(), json{{"event", "invalidate"}, {"failed_node", chosen->value}, {"invalidated", flipped_ids}});
            return finish(Termination::completed);
        }
        if (plan_end) {
            emit(ep.log(), json{{"event", "return_to_plan_end"},
                                {"failed_node", chosen->value},
                                {"invalidated", flipped_ids},
                                {"node", plan_end->value}});
        } else {
            emit(ep.log(), json{{"event", "backtrack"},
                                {"failed_node", chosen->value},
                                {"invalidated", flipped_ids},
                                {"target", target ? json(target->value) : json(nullptr)}});
        }
        if (!target && !plan_end) {
            return finish(Termination::exhausted_tree);
        }
        if (result.corrections >= config.max_corrections) {
            return finish(Termination::max_corrections);
        }
        result.corrections += 1;

        const NodeId stop = plan_end ? *plan_end : *target;
        while (current != stop) {
            Action undone = history.back();
            ExecRecord undo_record = records.back();
            history.pop_back();
            records.pop_back();
            current = *tree.node(current).parent;
            auto inverse = inverse_action(undone, undo_record);
            if (!inverse) {
                emit(ep.log(), json{{"event", "warning"},
                                    {"message", fmt::format("{} has no inverse; left in place", render_action(undone))}});
                continue;
            }
            if (auto near = approach_target(*inverse);
                near && !ep.state().has(Predicate::close, character_ref(), *near) &&
                ep.state().posture == Posture::standing) {
                ep.execute(Action{ActionType::Walk, {*near}}, StepRole::approach);
            }
            if (!ep.execute(*inverse, StepRole::inverse).ok()) {
                emit(ep.log(), json{{"event", "warning"},
                                    {"message", fmt::format("inverse {} failed; skipped", render_action(*inverse))}});
            }
        }
        if (plan_end) {
            return finish(Termination::completed);
        }
    }
}

} // namespace

EpisodeResult grounded_deciding_loop(Backend& backend, const Scene& scene, const TaskSpec& task, ActionTree& tree,
                                     const PlannerConfig& config, TokenLedger ledger) {
    check_config(config);
    Episode ep(scene, task, Method::tree, config, std::move(ledger));
    return deciding_loop(backend, ep, tree);
}

EpisodeResult run_tree_planner(Backend& backend, const Scene& scene, const TaskSpec& task, const PlannerConfig& config) {
    check_config(config);
    Episode ep(scene, task, Method::tree, config, TokenLedger(config.rate_per_1k));
    std::vector<Plan> plans;
    try {
        plans = sample_plans(backend, scene, task, config.n_samples, config, ep.result().ledger, ep.log(), ep.prompts());
    } catch (const PlannerError& e) {
        if (e.kind() != PlannerErrorKind::AllPlansEmpty) {
            throw;
        }
        emit(ep.log(), json{{"event", "warning"}, {"message", e.what()}});
        if (!config.oracle) {
            return ep.finish(Termination::exhausted_tree, {});
        }
    }
    if (config.oracle) {
        plans = inject_oracle(std::move(plans), task);
    }
    ep.result().sampled_plans = plans;
    auto tree = ActionTree::construct(plans);
    return deciding_loop(backend, ep, tree);
}

namespace {

// Shared loop of the step-wise planners. `strategy` is empty for the plain
// Iterative-Planner.
EpisodeResult run_stepwise(Backend& backend, const Scene& scene, const TaskSpec& task, Method method,
                           std::optional<ReplanStrategy> strategy, const PlannerConfig& config) {
    check_config(config);
    Episode ep(scene, task, method, config, TokenLedger(config.rate_per_1k));
    auto& result = ep.result();
    SnapshotStore snapshots;
    const auto initial = snapshots.snapshot(scene.initial);
    const std::string stream(method_name(method));

    std::vector<Action> history;
    std::optional<ErrorContext> error;
    int steps = 0;
    bool replanning = false; // entries after a replan trigger are tagged replan

    while (true) {
        if (steps >= config.max_steps) {
            return ep.finish(Termination::max_steps, history);
        }
        CompletionRequest request;
        request.prompt = build_iterative_prompt(scene, ep.state(), task.name, history, error);
        request.n = 1;
        request.temperature = config.iterative_temperature;
        request.top_p = config.iterative_top_p;
        request.max_tokens = config.step_max_tokens;
        request.stop = {"\n"};
        request.tag = ep.tag(stream);
        Phase phase = strategy && replanning ? Phase::replan : Phase::iterative;
        auto response = complete(backend, request, phase, result.ledger);
        keep(ep.prompts(), phase, request.prompt);

        std::string text;
        for (auto line : detail::split_lines(response.completions.front())) {
            if (!detail::trim(line).empty()) {
                text = std::string(detail::trim(line));
                break;
            }
        }
        emit(ep.log(), json{{"event", "step"},
                            {"seq", request.tag.seq},
                            {"phase", phase_name(phase)},
                            {"completion", text},
                            {"prompt_hash", hash_text(request.prompt)},
                            {"prompt_tokens", response.usage.prompt_tokens},
                            {"generated_tokens", response.usage.generated_tokens}});
        if (is_end_marker(text)) {
            return ep.finish(Termination::completed, history);
        }

        std::optional<Action> action;
        std::string failure;
        try {
            action = parse_action(text);
        } catch (const GrammarError& e) {
            failure = fmt::format("Script is not executable, since \"{}\" is not a valid sub-task ({})", text, e.what());
            ep.record_unparsed(text, failure);
        }
        if (action) {
            auto outcome = ep.execute(*action, StepRole::plan);
            if (outcome.ok()) {
                history.push_back(*action);
                steps += 1;
                error.reset();
                continue;
            }
            failure = outcome.error->message;
        }

        if (!config.correction_enabled) {
            return ep.finish(Termination::execution_failed, history);
        }
        if (result.corrections >= config.max_corrections) {
            return ep.finish(Termination::max_corrections, history);
        }
        result.corrections += 1;
        error = ErrorContext{action ? render_action(*action) : text, failure};
        replanning = true;
        if (strategy == ReplanStrategy::global) {
            ep.reset_world(snapshots.restore(initial));
            history.clear();
            steps = 0;
            emit(ep.log(), json{{"event", "restart"}, {"corrections", result.corrections}});
        }
    }
}

} // namespace

EpisodeResult run_iterative_planner(Backend& backend, const Scene& scene, const TaskSpec& task,
                                    const PlannerConfig& config) {
    return run_stepwise(backend, scene, task, Method::iterative, std::nullopt, config);
}

EpisodeResult run_with_replan(Backend& backend, const Scene& scene, const TaskSpec& task, ReplanStrategy strategy,
                              const PlannerConfig& config) {
    auto method = strategy == ReplanStrategy::local ? Method::local_replan : Method::global_replan;
    return run_stepwise(backend, scene, task, method, strategy, config);
}

EpisodeResult run_method(Method method, Backend& backend, const Scene& scene, const TaskSpec& task,
                         const PlannerConfig& config) {
    switch (method) {
    case Method::tree: return run_tree_planner(backend, scene, task, config);
    case Method::iterative: return run_iterative_planner(backend, scene, task, config);
    case Method::local_replan: return run_with_replan(backend, scene, task, ReplanStrategy::local, config);
    case Method::global_replan: return run_with_replan(backend, scene, task, ReplanStrategy::global, config);
    }
    throw PlannerError(PlannerErrorKind::InvalidConfig, "unknown method");
}

} // namespace treeplan
