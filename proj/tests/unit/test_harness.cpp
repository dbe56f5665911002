// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <unistd.h>

#include <fmt/format.h>

#include "testkit.hpp"
#include "treeplan/harness.hpp"

using namespace treeplan;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / fmt::format("treeplan-{}-{}", name, ::getpid());
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

const std::vector<Scene>& pack() {
    static const auto scenes = load_scene_pack(testkit::scenes_dir());
    return scenes;
}

Plan plan_of(std::initializer_list<const char*> lines) {
    Plan p;
    for (const auto* l : lines) {
        p.actions.push_back(parse_action(l));
    }
    return p;
}

} // namespace

TEST_CASE("task selection and ids") {
    const auto& scene = pack().front();
    const auto& task = scene.tasks.front();
    CHECK(task_selected(std::nullopt, scene, task));
    CHECK(task_selected(task.name, scene, task));
    CHECK(task_selected(scene.name + "/" + task.name, scene, task));
    CHECK_FALSE(task_selected("other-scene/" + task.name, scene, task));
    CHECK_FALSE(task_selected("Fly to the moon", scene, task));

    CHECK(task_slug("Take nap") == "take_nap");
    CHECK(task_slug("Put alarm clock in bedroom") == "put_alarm_clock_in_bedroom");
    EpisodeRecord r;
    r.method = "tree";
    r.setting = "with_correction";
    r.scene = "apartment-1";
    r.task = "Watch TV";
    r.run = 2;
    CHECK(episode_id(r) == "apartment-1/watch_tv/tree-with_correction-run2");
}

TEST_CASE("tree artifact round trip") {
    std::vector<Plan> plans{plan_of({"[Walk] <bedroom> (1)", "[Walk] <bed> (1)", "[Lie] <bed> (1)", "[Sleep]"}),
                            plan_of({"[Walk] <bedroom> (1)", "[Sit] <bed> (1)"})};
    auto tree = ActionTree::construct(plans);
    auto lie = *tree.find_path(std::span(plans[0].actions).first(3));
    tree.mark_invalid(lie);
    auto path = tree.node_path(*tree.find_path(plans[1].actions));
    auto text = tree_artifact_json(tree, path);
    auto back = parse_tree_artifact(text);
    CHECK(back.path == path);
    CHECK(to_dot(back.tree) == to_dot(tree));
    CHECK(tree_artifact_json(back.tree, back.path) == text);

    auto dir = temp_dir("artifact");
    write_text_file(dir / "episodes" / "s" / "t" / "tree-with_correction-run1.tree.json", text);
    CHECK(load_tree_artifact("s/t/tree-with_correction-run1", dir).path == path);
    CHECK(load_tree_artifact((dir / "episodes" / "s" / "t" / "tree-with_correction-run1.tree.json").string(), dir)
              .tree.size() == tree.size());
    auto kind = [&](const std::string& target) {
        try {
            load_tree_artifact(target, dir);
        } catch (const HarnessError& e) {
            return e.kind();
        }
        FAIL("loaded");
        return HarnessErrorKind::BadArtifact;
    };
    CHECK(kind("") == HarnessErrorKind::NotFound);
    CHECK(kind("s/t/missing") == HarnessErrorKind::NotFound);
    write_text_file(dir / "episodes" / "bad.tree.json", "{\"nodes\": 3}");
    CHECK(kind("bad") == HarnessErrorKind::BadArtifact);
    std::filesystem::remove_all(dir);
}

TEST_CASE("grid over the bundled transcripts") {
    auto backend = ScriptedBackend::from_path(testkit::transcripts_dir());
    GridSpec spec;
    spec.methods = {Method::tree, Method::iterative};
    spec.settings = {false, true};
    spec.task_filter = "apartment-1/Take nap";
    auto out = run_grid(backend, pack(), spec);
    REQUIRE(out.records.size() == 4);
    CHECK(out.records[0].setting == "without_correction");
    CHECK(out.records[0].method == "tree");
    CHECK(out.records[1].method == "iterative");
    CHECK(out.records[2].setting == "with_correction");
    CHECK(out.rows.size() == 4);

    auto dir = temp_dir("grid");
    write_grid_outputs(out, dir);
    for (const char* f : {"results.tsv", "aggregate.tsv", "aggregate.txt", "ledger.tsv"}) {
        CHECK(std::filesystem::is_regular_file(dir / f));
    }
    auto base = dir / "episodes" / "apartment-1" / "take_nap";
    CHECK(std::filesystem::is_regular_file(base / "tree-with_correction-run1.tree.json"));
    CHECK(std::filesystem::is_regular_file(base / "tree-with_correction-run1.dot"));
    CHECK(std::filesystem::is_regular_file(base / "iterative-with_correction-run1.jsonl"));
    CHECK_FALSE(std::filesystem::exists(base / "iterative-with_correction-run1.tree.json"));

    // Same inputs, parallel workers: identical results.
    auto again = ScriptedBackend::from_path(testkit::transcripts_dir());
    spec.jobs = 3;
    auto parallel = run_grid(again, pack(), spec);
    CHECK(results_tsv(parallel.records) == results_tsv(out.records));
    std::filesystem::remove_all(dir);

    spec.task_filter = "No such task";
    CHECK_THROWS_AS(run_grid(again, pack(), spec), HarnessError);
}

TEST_CASE("rate changes cost but not tokens") {
    GridSpec spec;
    spec.task_filter = "apartment-1/Take nap";
    auto a = ScriptedBackend::from_path(testkit::transcripts_dir());
    auto base = run_grid(a, pack(), spec);
    spec.config.rate_per_1k = 0.5;
    auto b = ScriptedBackend::from_path(testkit::transcripts_dir());
    auto pricey = run_grid(b, pack(), spec);
    CHECK(pricey.records[0].metrics.tokens == base.records[0].metrics.tokens);
    CHECK(pricey.records[0].metrics.cost_usd ==
          doctest::Approx(static_cast<double>(base.records[0].metrics.tokens) / 1000.0 * 0.5));
}

TEST_CASE("sampling report") {
    auto backend = ScriptedBackend::from_path(testkit::transcripts_dir());
    auto rows = run_sampling(backend, pack(), std::nullopt, PlannerConfig{});
    CHECK(rows.size() == 10);
    auto tsv = sampling_stats_tsv(rows);
    CHECK(tsv.starts_with("scene\ttask\tn\tparsed\tdistinct_plans\tgcr_max\tgcr_avg\n"));
    for (const auto& r : rows) {
        CHECK(r.n == 25);
        CHECK(r.parsed <= 25);
        CHECK(r.stats.gcr_max >= r.stats.gcr_avg);
    }
}

TEST_CASE("token report on the mock house") {
    auto scenes = load_scene_pack(testkit::fixture("token-mock") / "mock-kitchen.scene");
    auto backend = ScriptedBackend::from_path(testkit::fixture("token-mock"));
    PlannerConfig config;
    config.n_samples = 25;
    config.vote_n = 25;
    config.max_steps = 4;
    auto row = measure_tokens(backend, scenes.front(), scenes.front().tasks.front(), config);
    CHECK(row.deciding_calls == 4);
    CHECK(row.iterative_calls == 4);
    CHECK(row.measured_ours == std::llround(row.predicted.mu_ours));
    CHECK(row.measured_ip == std::llround(row.predicted.mu_ip));
    auto tsv = token_report_tsv({row});
    CHECK(tsv.starts_with("scene\ttask\tN\tM\ta_len\trho_ps\trho_gd\trho_ip\trho_ps_plus_gd\t"));
    CHECK(std::count(tsv.begin(), tsv.end(), '\n') == 2);
}
