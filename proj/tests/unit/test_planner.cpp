// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>
#include <json.hpp>

#include <deque>
#include <functional>
#include <random>

#include "testkit.hpp"
#include "treeplan/planner.hpp"

using namespace treeplan;

namespace {

const Scene& apartment() {
    static const Scene scene = load_scene(read_text_file(testkit::scenes_dir() / "apartment-1.scene"));
    return scene;
}

// Same house but the bed only takes a seat.
const Scene& seat_only_bed() {
    static const Scene scene = load_scene(read_text_file(testkit::fixture("nap-failure") / "apartment-1b.scene"));
    return scene;
}

const TaskSpec& nap(const Scene& scene) { return *scene.task("Take nap"); }

// Options of a deciding prompt, in letter order.
std::vector<std::string> prompt_options(const std::string& prompt) {
    std::vector<std::string> out;
    auto pos = prompt.rfind("Among the following sub-tasks, which one would you take.\n");
    REQUIRE(pos != std::string::npos);
    pos = prompt.find('\n', pos) + 1;
    while (pos < prompt.size() && prompt.compare(pos, 3, std::string(1, option_label(out.size())) + ". ") == 0) {
        auto end = prompt.find('\n', pos);
        out.push_back(prompt.substr(pos + 3, end - pos - 3));
        pos = end + 1;
    }
    return out;
}

// Answers every call with `n` copies of what the policy returns.
class PolicyBackend final : public Backend {
public:
    using Policy = std::function<std::string(const CompletionRequest&)>;
    explicit PolicyBackend(Policy policy) : policy_(std::move(policy)) {}

    CompletionResponse complete(const CompletionRequest& request) override {
        tags.push_back(request.tag);
        CompletionResponse r;
        r.completions.assign(static_cast<std::size_t>(request.n), policy_(request));
        r.usage = {count_tokens(request.prompt), request.n};
        return r;
    }
    [[nodiscard]] std::string identity() const override { return "policy"; }

    std::vector<RequestTag> tags;

private:
    Policy policy_;
};

// Votes for the first preferred option present, else "A".
PolicyBackend::Policy prefer(std::vector<std::string> order) {
    return [order = std::move(order)](const CompletionRequest& req) {
        auto options = prompt_options(req.prompt);
        for (const auto& want : order) {
            for (std::size_t i = 0; i < options.size(); ++i) {
                if (options[i] == want) {
                    return std::string(1, option_label(i));
                }
            }
        }
        return std::string("A");
    };
}

// Replays one step per call.
PolicyBackend::Policy steps(std::vector<std::string> lines) {
    auto queue = std::make_shared<std::deque<std::string>>(lines.begin(), lines.end());
    return [queue](const CompletionRequest&) {
        REQUIRE_FALSE(queue->empty());
        auto s = queue->front();
        queue->pop_front();
        return s;
    };
}

std::vector<Plan> plans_of(const std::vector<std::vector<std::string>>& lines) {
    std::vector<Plan> plans;
    for (const auto& p : lines) {
        Plan plan;
        plan.source_index = static_cast<int>(plans.size());
        for (const auto& l : p) {
            plan.actions.push_back(parse_action(l));
        }
        plans.push_back(std::move(plan));
    }
    return plans;
}

std::vector<std::string> rendered(const std::vector<Action>& actions) {
    std::vector<std::string> out;
    for (const auto& a : actions) {
        out.push_back(render_action(a));
    }
    return out;
}

PlannerConfig small_config() {
    PlannerConfig c;
    c.vote_n = 5;
    return c;
}

const std::vector<std::vector<std::string>> kNapTree{
    {"[Walk] <bedroom> (1)", "[Walk] <bed> (1)", "[Lie] <bed> (1)", "[Sleep]"},
    {"[Walk] <bedroom> (1)", "[Sit] <bed> (1)"},
};

} // namespace

TEST_CASE("sample_plans drops unparseable completions") {
    ScriptedBackend backend;
    backend.add_document("@@ apartment-1 | Take nap | sampling | 1\n---\n[Walk] <bedroom> (1)\n[Sleep]\n---\n"
                         "I cannot help\n---\n[Sleep]\n");
    TokenLedger ledger;
    auto plans = sample_plans(backend, apartment(), nap(apartment()), 3, small_config(), ledger);
    REQUIRE(plans.size() == 2);
    CHECK(plans[0].actions.size() == 2);
    CHECK(plans[1].source_index == 2);
    CHECK(ledger.calls(Phase::plan_sampling) == 1);

    ScriptedBackend one;
    one.add_document("@@ apartment-1 | Take nap | sampling | 1\n---\n[Sleep]\n");
    CHECK(sample_plans(one, apartment(), nap(apartment()), 1, small_config(), ledger).size() == 1);

    ScriptedBackend garbage;
    garbage.add_document("@@ apartment-1 | Take nap | sampling | 1\n--- x2\nno plan here\n");
    try {
        sample_plans(garbage, apartment(), nap(apartment()), 2, small_config(), ledger);
        FAIL("expected AllPlansEmpty");
    } catch (const PlannerError& e) {
        CHECK(e.kind() == PlannerErrorKind::AllPlansEmpty);
    }
}

TEST_CASE("inject_oracle appends the gold plan") {
    const auto& task = nap(apartment());
    std::vector<Plan> plans{task.gold_plan, task.gold_plan};
    auto with = inject_oracle(plans, task);
    REQUIRE(with.size() == 3);
    CHECK(with.back().actions == task.gold_plan.actions);
    CHECK(with.back().source_index == 2);
    auto tree = ActionTree::construct(with);
    auto first = tree.node(tree.root()).children.front();
    CHECK(tree.node(first).visit_weight == 3);
}

TEST_CASE("deciding loop reaches the goal when every step works") {
    auto tree = ActionTree::construct(plans_of(kNapTree));
    PolicyBackend backend(prefer({"[Walk] <bed> (1)"}));
    auto r = grounded_deciding_loop(backend, apartment(), nap(apartment()), tree, small_config());
    CHECK(r.termination == Termination::completed);
    CHECK(r.exec_ok);
    CHECK(r.corrections == 0);
    CHECK(rendered(r.history) == kNapTree[0]);
    CHECK(r.achieved_goals == nap(apartment()).goals);
    // Only the Walk bed / Sit bed fork needs a vote.
    CHECK(backend.tags.size() == 1);
    CHECK(r.ledger.calls(Phase::grounded_deciding) == 1);
    CHECK(r.final_path == tree.node_path(*tree.find_path(r.history)));
}

TEST_CASE("deciding loop backtracks around a failed leaf") {
    auto plans = plans_of({kNapTree[0], {"[Walk] <bedroom> (1)", "[Sit] <bed> (1)", "[Sleep]"}});
    auto tree = ActionTree::construct(plans);
    PolicyBackend backend(prefer({"[Walk] <bed> (1)"}));
    auto r = grounded_deciding_loop(backend, seat_only_bed(), nap(seat_only_bed()), tree, small_config());
    CHECK(r.termination == Termination::completed);
    CHECK(r.corrections == 1);
    CHECK(rendered(r.history) == std::vector<std::string>{"[Walk] <bedroom> (1)", "[Sit] <bed> (1)", "[Sleep]"});
    CHECK(r.achieved_goals == nap(seat_only_bed()).goals);
    auto lie = tree.find_path(std::span(plans[0].actions).first(3));
    REQUIRE(lie);
    CHECK_FALSE(tree.node(*lie).valid);
    CHECK_FALSE(tree.node(tree.node(*lie).parent.value()).valid);
    // The undo of Walk bed shows up as an inverse step.
    bool undid = false;
    for (const auto& s : r.trace) {
        undid = undid || (s.role == StepRole::inverse && s.ok);
    }
    CHECK(undid);
}

TEST_CASE("deciding loop gives up when every leaf fails") {
    auto tree = ActionTree::construct(
        plans_of({{"[Walk] <bedroom> (1)", "[Lie] <bed> (1)"}, {"[Walk] <bedroom> (1)", "[Open] <bed> (1)"}}));
    PolicyBackend backend(prefer({}));
    auto r = grounded_deciding_loop(backend, seat_only_bed(), nap(seat_only_bed()), tree, small_config());
    CHECK(r.termination == Termination::exhausted_tree);
    CHECK_FALSE(r.exec_ok);
    CHECK(r.corrections == 1);
    CHECK_FALSE(tree.node(tree.root()).valid);
}

TEST_CASE("without correction the first failure ends the episode") {
    auto tree = ActionTree::construct(plans_of(kNapTree));
    PolicyBackend backend(prefer({"[Walk] <bed> (1)"}));
    auto config = small_config();
    config.correction_enabled = false;
    auto r = grounded_deciding_loop(backend, seat_only_bed(), nap(seat_only_bed()), tree, config);
    CHECK(r.termination == Termination::execution_failed);
    CHECK_FALSE(r.exec_ok);
    CHECK(r.corrections == 0);
    CHECK(r.history.size() == 2);
    CHECK_FALSE(r.trace.back().ok);
}

TEST_CASE("max_corrections bounds the tree planner") {
    auto tree = ActionTree::construct(plans_of(kNapTree));
    PolicyBackend backend(prefer({"[Walk] <bed> (1)"}));
    auto config = small_config();
    config.max_corrections = 0;
    auto r = grounded_deciding_loop(backend, seat_only_bed(), nap(seat_only_bed()), tree, config);
    CHECK(r.termination == Termination::max_corrections);
    CHECK(r.corrections == 0);
}

TEST_CASE("END is offered at plan ends below the root") {
    auto tree = ActionTree::construct(plans_of({{"[Walk] <bedroom> (1)"}, {"[Walk] <bedroom> (1)", "[Walk] <bed> (1)"}}));
    std::vector<std::string> seen;
    PolicyBackend backend([&](const CompletionRequest& req) {
        auto options = prompt_options(req.prompt);
        seen = options;
        return std::string(1, option_label(options.size() - 1));
    });
    auto r = grounded_deciding_loop(backend, apartment(), nap(apartment()), tree, small_config());
    CHECK(seen == std::vector<std::string>{"[Walk] <bed> (1)", "[END]"});
    CHECK(r.termination == Termination::completed);
    CHECK(r.history.size() == 1);
}

TEST_CASE("a plan end above a dead branch still completes") {
    // [Walk bedroom, Walk bed] is a whole plan; everything beyond it fails two
    // steps down, so the loop returns to Walk bed instead of giving up.
    auto tree = ActionTree::construct(plans_of({{"[Walk] <bedroom> (1)", "[Walk] <bed> (1)"},
                                                {"[Walk] <bedroom> (1)", "[Walk] <bed> (1)", "[Walk] <bathroom> (1)",
                                                 "[Open] <bed> (1)"}}));
    PolicyBackend backend(prefer({"[Walk] <bathroom> (1)"}));
    auto r = grounded_deciding_loop(backend, apartment(), nap(apartment()), tree, small_config());
    CHECK(r.termination == Termination::completed);
    CHECK(r.corrections == 1);
    CHECK(rendered(r.history) == std::vector<std::string>{"[Walk] <bedroom> (1)", "[Walk] <bed> (1)"});
    CHECK(r.final_state.character_room == ObjectRef{"bedroom", 1});
    bool returned = false;
    for (const auto& line : r.log) {
        returned = returned || line.find("\"return_to_plan_end\"") != std::string::npos;
    }
    CHECK(returned);
}

TEST_CASE("tree planner on the nap-failure transcript") {
    auto backend = ScriptedBackend::from_path(testkit::fixture("nap-failure") / "take-nap.transcript");
    auto r = run_tree_planner(backend, seat_only_bed(), nap(seat_only_bed()), PlannerConfig{});
    CHECK(r.termination == Termination::completed);
    CHECK(r.corrections == 1);
    CHECK(r.achieved_goals.size() == nap(seat_only_bed()).goals.size());
    CHECK(r.sampled_plans.size() == 25);
    REQUIRE_FALSE(r.ledger.entries().empty());
    CHECK(r.ledger.entries().front().phase == Phase::plan_sampling);
    CHECK(r.ledger.calls(Phase::plan_sampling) == 1);
    CHECK(r.ledger.calls(Phase::iterative) == 0);
    for (std::size_t i = 1; i < r.ledger.entries().size(); ++i) {
        CHECK(r.ledger.entries()[i].phase == Phase::grounded_deciding);
    }

    auto again = ScriptedBackend::from_path(testkit::fixture("nap-failure") / "take-nap.transcript");
    auto local = run_with_replan(again, seat_only_bed(), nap(seat_only_bed()), ReplanStrategy::local, PlannerConfig{});
    CHECK(local.termination == Termination::completed);
    CHECK(local.corrections >= 2);
}

TEST_CASE("degenerate votes fall back to the first option") {
    auto tree = ActionTree::construct(plans_of(kNapTree));
    PolicyBackend backend([](const CompletionRequest&) { return std::string("no idea"); });
    auto r = grounded_deciding_loop(backend, apartment(), nap(apartment()), tree, small_config());
    CHECK(r.degenerate_votes == 1);
    // Weights tie, so the first option is the alphabetically first text.
    REQUIRE(r.trace.size() > 1);
    CHECK(r.trace[1].text == "[Sit] <bed> (1)");
}

TEST_CASE("iterative planner") {
    PlannerConfig config = small_config();
    SUBCASE("four steps then END") {
        PolicyBackend backend(steps({"[Walk] <bedroom> (1)", "[Walk] <bed> (1)", "[Lie] <bed> (1)", "[Sleep]", "[END]"}));
        auto r = run_iterative_planner(backend, apartment(), nap(apartment()), config);
        CHECK(r.termination == Termination::completed);
        CHECK(r.history.size() == 4);
        CHECK(r.achieved_goals == nap(apartment()).goals);
        CHECK(r.ledger.calls(Phase::iterative) == 5);
        CHECK(backend.tags.back().stream == "iterative");
        CHECK(backend.tags.back().seq == 5);
    }
    SUBCASE("an unparseable step costs a correction") {
        PolicyBackend backend(steps({"[Fly] <bed> (1)", "[Walk] <bedroom> (1)", "[END]"}));
        auto r = run_iterative_planner(backend, apartment(), nap(apartment()), config);
        CHECK(r.corrections == 1);
        CHECK(r.history.size() == 1);
        CHECK_FALSE(r.trace.front().ok);
        CHECK_FALSE(r.trace.front().action.has_value());
    }
    SUBCASE("max_steps") {
        config.max_steps = 2;
        PolicyBackend backend(steps({"[Walk] <bedroom> (1)", "[Walk] <kitchen> (1)"}));
        auto r = run_iterative_planner(backend, apartment(), nap(apartment()), config);
        CHECK(r.termination == Termination::max_steps);
        CHECK(r.exec_ok);
        CHECK(r.history.size() == 2);
    }
}

TEST_CASE("replanning") {
    const auto& scene = seat_only_bed();
    SUBCASE("local keeps progress") {
        PolicyBackend backend(steps({"[Walk] <bedroom> (1)", "[Walk] <bed> (1)", "[Lie] <bed> (1)", "[Sit] <bed> (1)",
                                     "[Sleep]", "[END]"}));
        auto r = run_with_replan(backend, scene, nap(scene), ReplanStrategy::local, small_config());
        CHECK(r.termination == Termination::completed);
        CHECK(r.corrections == 1);
        CHECK(rendered(r.history) ==
              std::vector<std::string>{"[Walk] <bedroom> (1)", "[Walk] <bed> (1)", "[Sit] <bed> (1)", "[Sleep]"});
        CHECK(r.ledger.calls(Phase::iterative) == 3);
        CHECK(r.ledger.calls(Phase::replan) == 3);
        CHECK(backend.tags.front().stream == "local_replan");
    }
    SUBCASE("global restarts from the initial state") {
        PolicyBackend backend(steps({"[Walk] <bedroom> (1)", "[Lie] <bed> (1)", "[Walk] <bedroom> (1)",
                                     "[Walk] <bed> (1)", "[Sit] <bed> (1)", "[Sleep]", "[END]"}));
        auto r = run_with_replan(backend, scene, nap(scene), ReplanStrategy::global, small_config());
        CHECK(r.termination == Termination::completed);
        CHECK(r.corrections == 1);
        CHECK(r.history.size() == 4);
        // Walking to the bedroom only works again because the world was reset.
        CHECK(r.trace[2].text == "[Walk] <bedroom> (1)");
        CHECK(r.trace[2].ok);
    }
    SUBCASE("max_corrections") {
        auto config = small_config();
        config.max_corrections = 1;
        PolicyBackend backend(steps({"[Lie] <bed> (1)", "[Lie] <bed> (1)"}));
        auto r = run_with_replan(backend, scene, nap(scene), ReplanStrategy::local, config);
        CHECK(r.termination == Termination::max_corrections);
        CHECK(r.corrections == 1);
        CHECK_FALSE(r.exec_ok);
    }
}

TEST_CASE("invalid configs are rejected") {
    PolicyBackend backend(prefer({}));
    auto config = small_config();
    config.vote_n = 0;
    CHECK_THROWS_AS(run_method(Method::tree, backend, apartment(), nap(apartment()), config), PlannerError);
    config = small_config();
    config.max_corrections = -1;
    CHECK_THROWS_AS(run_method(Method::iterative, backend, apartment(), nap(apartment()), config), PlannerError);
}

TEST_CASE("random episodes keep the loop invariants") {
    std::mt19937_64 rng(20231);
    const auto& scene = apartment();
    const auto& task = nap(scene);
    int checked_recovery = 0;
    for (int round = 0; round < 150; ++round) {
        // Plans: mostly-successful random walks through the house, sharing prefixes.
        std::vector<Plan> plans;
        int count = std::uniform_int_distribution<int>(1, 12)(rng);
        for (int p = 0; p < count; ++p) {
            Plan plan;
            plan.source_index = p;
            WorldState s = scene.initial;
            if (!plans.empty() && rng() % 2 == 0) {
                const auto& base = plans[rng() % plans.size()];
                auto keep = rng() % (base.actions.size() + 1);
                plan.actions.assign(base.actions.begin(), base.actions.begin() + static_cast<std::ptrdiff_t>(keep));
                s = dry_run(scene.initial, plan.actions).final_state;
            }
            int len = std::uniform_int_distribution<int>(1, 7)(rng);
            while (static_cast<int>(plan.actions.size()) < len) {
                Action a = testkit::random_world_action(rng, s);
                for (int tries = 0; tries < 6 && !execute_action(s, a).ok(); ++tries) {
                    a = testkit::random_world_action(rng, s);
                }
                auto out = execute_action(s, a);
                if (out.ok()) {
                    s = out.state;
                }
                plan.actions.push_back(a);
            }
            plans.push_back(std::move(plan));
        }
        auto tree = ActionTree::construct(plans);
        auto config = small_config();
        config.max_corrections = std::uniform_int_distribution<int>(0, 6)(rng);
        config.correction_enabled = rng() % 5 != 0;
        std::uint64_t vote_seed = rng();
        PolicyBackend backend([vote_seed](const CompletionRequest& req) mutable {
            auto options = prompt_options(req.prompt);
            vote_seed = vote_seed * 6364136223846793005ULL + 1442695040888963407ULL;
            return std::string(1, option_label((vote_seed >> 33) % options.size()));
        });
        auto r = grounded_deciding_loop(backend, scene, task, tree, config);

        CHECK(r.corrections <= config.max_corrections);
        if (!config.correction_enabled) {
            CHECK(r.corrections == 0);
        }
        // The surviving history is a root path of the tree.
        REQUIRE(tree.find_path(r.history));

        // Replay the log: no option may be offered after it was invalidated.
        std::set<std::size_t> invalid;
        bool warned = false;
        for (const auto& line : r.log) {
            auto ev = nlohmann::json::parse(line);
            auto kind = ev["event"].get<std::string>();
            if (kind == "decide") {
                auto node = NodeId{ev["node"].get<std::size_t>()};
                for (const auto& opt : ev["options"]) {
                    if (opt == "[END]") {
                        continue;
                    }
                    bool found = false;
                    for (auto child : tree.node(node).children) {
                        if (render_action(*tree.node(child).action) == opt.get<std::string>()) {
                            found = true;
                            CHECK_FALSE(invalid.contains(child.value));
                        }
                    }
                    CHECK(found);
                }
            } else if (kind == "backtrack" || kind == "invalidate" || kind == "return_to_plan_end") {
                for (const auto& id : ev["invalidated"]) {
                    invalid.insert(id.get<std::size_t>());
                }
            } else if (kind == "warning") {
                warned = true;
            }
        }
        for (const auto& n : tree.nodes()) {
            CHECK(n.valid == !invalid.contains(n.id.value));
        }

        // Undoing reverted steps leaves the restorable part of the world as a
        // clean replay of the surviving history would.
        if (!warned) {
            auto replay = dry_run(scene.initial, r.history);
            REQUIRE_FALSE(replay.error);
            CHECK(restorable_facts(r.final_state) == restorable_facts(replay.final_state));
            checked_recovery += r.corrections > 0 ? 1 : 0;
        }
    }
    CHECK(checked_recovery > 10);
}
