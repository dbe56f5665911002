// SPDX-License-Identifier: Apache-2.0
// treeplan: run planners over a scene pack, sample plan sets, render action
// trees and report token usage.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <limits>
#include <memory>

#include <fmt/format.h>

#include "treeplan/harness.hpp"

using namespace treeplan;

namespace {

const CLI::Range kPositive(1, std::numeric_limits<int>::max(), "POSITIVE");

struct Common {
    std::string scenes = "data/scenes";
    std::string backend;
    std::string model = "text-davinci-003";
    std::string api_key_env = "TREEPLAN_API_KEY";
    std::string task;
    std::string out;
    bool strict = false;
    std::uint64_t seed = 0;
    PlannerConfig config;
};

void add_common(CLI::App* cmd, Common& c, bool with_out) {
    cmd->add_option("--scenes", c.scenes, "Scene pack: a .scene file or a directory of them")->capture_default_str();
    cmd->add_option("--backend", c.backend, "scripted:<transcript dir or file> or http:<base url>")->required();
    cmd->add_option("--model", c.model, "Model name sent to the http backend")->capture_default_str();
    cmd->add_option("--api-key-env", c.api_key_env, "Environment variable holding the http credential")
        ->capture_default_str();
    cmd->add_option("--task", c.task, "Only run this task (name or <scene>/<name>)");
    cmd->add_option("--n", c.config.n_samples, "Plans sampled per task (N)")
        ->check(kPositive)
        ->capture_default_str();
    cmd->add_option("--rate", c.config.rate_per_1k, "USD per 1000 tokens")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    cmd->add_option("--sampling-temperature", c.config.sampling_temperature)->capture_default_str();
    cmd->add_option("--sampling-top-p", c.config.sampling_top_p)->capture_default_str();
    cmd->add_flag("--strict", c.strict, "Scripted backend: require transcript prompt hashes to match");
    cmd->add_option("--seed", c.seed, "Scripted backend ballot shuffling seed (0 = recorded order)")
        ->capture_default_str();
    if (with_out) {
        cmd->add_option("--out", c.out, "Output directory")->required();
    }
}

void add_episode_options(CLI::App* cmd, Common& c) {
    cmd->add_option("--vote-n", c.config.vote_n, "Ballots per deciding call")
        ->check(kPositive)
        ->capture_default_str();
    cmd->add_option("--deciding-temperature", c.config.deciding_temperature)->capture_default_str();
    cmd->add_option("--deciding-top-p", c.config.deciding_top_p)->capture_default_str();
    cmd->add_option("--iterative-temperature", c.config.iterative_temperature)->capture_default_str();
    cmd->add_option("--iterative-top-p", c.config.iterative_top_p)->capture_default_str();
    cmd->add_option("--max-corrections", c.config.max_corrections)
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    cmd->add_option("--max-steps", c.config.max_steps)->check(kPositive)->capture_default_str();
}

std::unique_ptr<Backend> make_backend(const Common& c) {
    auto colon = c.backend.find(':');
    if (colon == std::string::npos) {
        throw CLI::ValidationError("--backend", "expected scripted:<path> or http:<url>");
    }
    auto kind = c.backend.substr(0, colon);
    auto target = c.backend.substr(colon + 1);
    if (kind == "scripted") {
        auto backend = std::make_unique<ScriptedBackend>(ScriptedBackend::from_path(target, c.strict));
        backend->set_seed(c.seed);
        return backend;
    }
    if (kind == "http") {
        HttpConfig config;
        config.base_url = target;
        config.model = c.model;
        config.api_key_env = c.api_key_env;
        return std::make_unique<HttpBackend>(config);
    }
    throw CLI::ValidationError("--backend", fmt::format("unknown backend kind '{}'", kind));
}

std::optional<std::string> task_filter(const Common& c) {
    return c.task.empty() ? std::nullopt : std::optional<std::string>(c.task);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Tree-structured task planning over a symbolic household simulator"};
    app.set_config("--config", "", "TOML/INI file with option defaults; command-line flags win");
    app.require_subcommand(1);
    app.allow_config_extras(false);

    Common common;

    // run
    auto* run = app.add_subcommand("run", "Run planners over the scene pack and write transcripts and metrics");
    std::vector<std::string> methods{"tree"};
    std::string setting = "with-correct";
    int runs = 1;
    int jobs = 1;
    add_common(run, common, true);
    add_episode_options(run, common);
    run->add_option("--method", methods, "tree, iterative, local_replan, global_replan or all (repeatable)")
        ->check(CLI::IsMember({"tree", "iterative", "local_replan", "global_replan", "all"}))
        ->capture_default_str();
    run->add_option("--setting", setting, "with-correct, no-correct or both")
        ->check(CLI::IsMember({"with-correct", "no-correct", "both"}))
        ->capture_default_str();
    run->add_flag("--oracle", common.config.oracle, "Add each task's gold plan to the sampled plans");
    run->add_option("--runs", runs, "Independent runs per cell")->check(kPositive)->capture_default_str();
    run->add_option("--jobs", jobs, "Episodes run in parallel")->check(kPositive)->capture_default_str();

    // sample
    auto* sample = app.add_subcommand("sample", "Sample plan sets only and report GCR_max / GCR_avg per task");
    add_common(sample, common, true);
    sample->add_flag("--oracle", common.config.oracle, "Add each task's gold plan to the sampled plans");

    // viz
    auto* viz = app.add_subcommand("viz", "Print a stored action tree as Graphviz DOT");
    std::string viz_target;
    std::string runs_dir = "runs";
    bool mark_path = false;
    viz->add_option("target", viz_target, "A .tree.json file or an episode id under --runs-dir")->required();
    viz->add_option("--runs-dir", runs_dir, "Output directory of an earlier run")->capture_default_str();
    viz->add_flag("--mark-path", mark_path, "Highlight the path the episode ended on");

    // tokens
    auto* tokens = app.add_subcommand("tokens", "Measured vs. predicted token usage and the boundary N*");
    add_common(tokens, common, false);
    add_episode_options(tokens, common);
    tokens->add_option("--out", common.out, "Also write the report to this file");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*viz) {
            auto artifact = load_tree_artifact(viz_target, runs_dir);
            DotOptions options;
            if (mark_path) {
                options.highlighted_path = artifact.path;
            }
            std::cout << to_dot(artifact.tree, options);
            return 0;
        }

        auto scenes = load_scene_pack(common.scenes);
        auto backend = make_backend(common);

        if (*run) {
            GridSpec spec;
            spec.methods.clear();
            for (const auto& m : methods) {
                if (m == "all") {
                    spec.methods = {Method::tree, Method::iterative, Method::local_replan, Method::global_replan};
                    break;
                }
                spec.methods.push_back(*parse_method(m));
            }
            spec.settings.clear();
            if (setting != "with-correct") {
                spec.settings.push_back(false);
            }
            if (setting != "no-correct") {
                spec.settings.push_back(true);
            }
            spec.task_filter = task_filter(common);
            spec.runs = runs;
            spec.jobs = jobs;
            spec.config = common.config;
            auto output = run_grid(*backend, scenes, spec);
            write_grid_outputs(output, common.out);
            std::cout << aggregate_table(output.rows);
            return 0;
        }

        if (*sample) {
            auto rows = run_sampling(*backend, scenes, task_filter(common), common.config);
            for (const auto& row : rows) {
                std::string plans;
                for (const auto& plan : row.plans) {
                    plans += render_plan(plan);
                    plans += '\n';
                }
                write_text_file(std::filesystem::path(common.out) / "plans" / row.scene / (task_slug(row.task) + ".txt"),
                                plans);
            }
            auto tsv = sampling_stats_tsv(rows);
            write_text_file(std::filesystem::path(common.out) / "sampling_stats.tsv", tsv);
            std::cout << tsv;
            return 0;
        }

        if (*tokens) {
            std::vector<TokenReportRow> rows;
            for (const auto& scene : scenes) {
                for (const auto& task : scene.tasks) {
                    if (!task_selected(task_filter(common), scene, task)) {
                        continue;
                    }
                    rows.push_back(measure_tokens(*backend, scene, task, common.config));
                }
            }
            if (rows.empty()) {
                throw HarnessError(HarnessErrorKind::NotFound, "no tasks selected");
            }
            auto tsv = token_report_tsv(rows);
            if (!common.out.empty()) {
                write_text_file(common.out, tsv);
            }
            std::cout << tsv;
            return 0;
        }
    } catch (const CLI::Error& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
