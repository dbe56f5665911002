// SPDX-License-Identifier: Apache-2.0
#include "treeplan/harness.hpp"

#include <atomic>
#include <cctype>
#include <exception>
#include <fstream>
#include <thread>

#include <fmt/format.h>
#include <json.hpp>

namespace treeplan {

using nlohmann::json;

std::string task_slug(std::string_view task) {
    std::string out;
    for (char c : task) {
        out += std::isspace(static_cast<unsigned char>(c)) != 0 ? '_'
                                                                 : static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    return out;
}

bool task_selected(const std::optional<std::string>& filter, const Scene& scene, const TaskSpec& task) {
    return !filter || *filter == task.name || *filter == scene.name + "/" + task.name;
}

std::string episode_id(const EpisodeRecord& record) {
    return fmt::format("{}/{}/{}-{}-run{}", record.scene, task_slug(record.task), record.method, record.setting,
                       record.run);
}

namespace {

struct Job {
    const Scene* scene;
    const TaskSpec* task;
    bool correction;
    Method method;
    int run;
};

} // namespace

GridOutput run_grid(Backend& backend, const std::vector<Scene>& scenes, const GridSpec& spec) {
    std::vector<Job> jobs;
    for (const auto& scene : scenes) {
        for (const auto& task : scene.tasks) {
            if (!task_selected(spec.task_filter, scene, task)) {
                continue;
            }
            for (bool correction : spec.settings) {
                for (auto method : spec.methods) {
                    for (int run = 1; run <= spec.runs; ++run) {
                        jobs.push_back(Job{&scene, &task, correction, method, run});
                    }
                }
            }
        }
    }
    if (jobs.empty()) {
        throw HarnessError(HarnessErrorKind::NotFound, "the grid selects no episodes (check the task filter)");
    }

    std::vector<std::optional<EpisodeResult>> results(jobs.size());
    std::vector<std::exception_ptr> errors(jobs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (auto i = next.fetch_add(1); i < jobs.size(); i = next.fetch_add(1)) {
            const auto& job = jobs[i];
            auto config = spec.config;
            config.correction_enabled = job.correction;
            config.oracle = spec.config.oracle && job.method == Method::tree;
            try {
                results[i] = run_method(job.method, backend, *job.scene, *job.task, config);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    auto workers = static_cast<std::size_t>(std::max(1, spec.jobs));
    std::vector<std::thread> pool;
    for (std::size_t w = 1; w < std::min(workers, jobs.size()); ++w) {
        pool.emplace_back(worker);
    }
    worker();
    for (auto& t : pool) {
        t.join();
    }
    for (const auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }

    GridOutput out;
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        const auto& job = jobs[i];
        EpisodeRecord record{std::string(method_name(job.method)), std::string(setting_name(job.correction)),
                             job.scene->name, job.task->name, job.run,
                             compute_episode_metrics(*results[i], *job.task)};
        out.records.push_back(std::move(record));
        out.results.push_back(std::move(*results[i]));
    }
    out.rows = aggregate(out.records);
    return out;
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw HarnessError(HarnessErrorKind::NotFound, fmt::format("cannot write '{}'", path.string()));
    }
    out << text;
}

std::string tree_artifact_json(const ActionTree& tree, const std::vector<NodeId>& path) {
    json nodes = json::array();
    for (const auto& n : tree.nodes()) {
        json children = json::array();
        for (auto c : n.children) {
            children.push_back(c.value);
        }
        nodes.push_back(json{{"id", n.id.value},
                             {"action", n.action ? json(render_action(*n.action)) : json(nullptr)},
                             {"parent", n.parent ? json(n.parent->value) : json(nullptr)},
                             {"t", n.time_step},
                             {"children", children},
                             {"valid", n.valid},
                             {"weight", n.visit_weight},
                             {"plan_ends", n.plan_ends}});
    }
    json ids = json::array();
    for (auto id : path) {
        ids.push_back(id.value);
    }
    return json{{"nodes", nodes}, {"path", ids}}.dump(1) + "\n";
}

TreeArtifact parse_tree_artifact(std::string_view text) {
    auto doc = json::parse(text, nullptr, false);
    if (doc.is_discarded() || !doc.contains("nodes") || !doc["nodes"].is_array()) {
        throw HarnessError(HarnessErrorKind::BadArtifact, "tree artifact is not valid JSON with a nodes array");
    }
    std::vector<TreeNode> nodes;
    try {
        for (const auto& n : doc["nodes"]) {
            TreeNode node;
            node.id = NodeId{n.at("id").get<std::size_t>()};
            if (!n.at("action").is_null()) {
                node.action = parse_action(n.at("action").get<std::string>());
            }
            if (!n.at("parent").is_null()) {
                node.parent = NodeId{n.at("parent").get<std::size_t>()};
            }
            node.time_step = n.at("t").get<int>();
            for (const auto& c : n.at("children")) {
                node.children.push_back(NodeId{c.get<std::size_t>()});
            }
            node.valid = n.at("valid").get<bool>();
            node.visit_weight = n.at("weight").get<int>();
            node.plan_ends = n.at("plan_ends").get<int>();
            if (node.id.value != nodes.size()) {
                throw HarnessError(HarnessErrorKind::BadArtifact, "tree artifact node ids are not dense");
            }
            nodes.push_back(std::move(node));
        }
    } catch (const json::exception& e) {
        throw HarnessError(HarnessErrorKind::BadArtifact, fmt::format("tree artifact: {}", e.what()));
    }
    TreeArtifact artifact{ActionTree::from_nodes(std::move(nodes)), {}};
    for (const auto& id : doc.value("path", json::array())) {
        artifact.path.push_back(NodeId{id.get<std::size_t>()});
    }
    return artifact;
}

TreeArtifact load_tree_artifact(const std::string& target, const std::filesystem::path& runs_dir) {
    if (target.empty()) {
        throw HarnessError(HarnessErrorKind::NotFound, "empty run id");
    }
    std::filesystem::path path(target);
    if (!std::filesystem::is_regular_file(path)) {
        path = runs_dir / "episodes" / (target + ".tree.json");
    }
    if (!std::filesystem::is_regular_file(path)) {
        throw HarnessError(HarnessErrorKind::NotFound, fmt::format("no tree artifact for '{}'", target));
    }
    return parse_tree_artifact(read_text_file(path));
}

void write_grid_outputs(const GridOutput& output, const std::filesystem::path& out_dir) {
    write_text_file(out_dir / "results.tsv", results_tsv(output.records));
    write_text_file(out_dir / "aggregate.tsv", aggregate_tsv(output.rows));
    write_text_file(out_dir / "aggregate.txt", aggregate_table(output.rows));
    std::string ledger = "episode\tcall\tphase\tprompt_tokens\tgenerated_tokens\tcost_usd\n";
    for (std::size_t i = 0; i < output.records.size(); ++i) {
        const auto id = episode_id(output.records[i]);
        const auto& result = output.results[i];
        std::size_t call = 0;
        for (const auto& e : result.ledger.entries()) {
            ledger += fmt::format("{}\t{}\t{}\t{}\t{}\t{:.6f}\n", id, ++call, phase_name(e.phase), e.prompt_tokens,
                                  e.generated_tokens, e.cost_usd);
        }
        std::string log;
        for (const auto& line : result.log) {
            log += line;
            log += '\n';
        }
        auto base = out_dir / "episodes" / id;
        write_text_file(base.string() + ".jsonl", log);
        if (result.tree) {
            write_text_file(base.string() + ".tree.json", tree_artifact_json(*result.tree, result.final_path));
            DotOptions dot;
            dot.highlighted_path = result.final_path;
            write_text_file(base.string() + ".dot", to_dot(*result.tree, dot));
        }
    }
    write_text_file(out_dir / "ledger.tsv", ledger);
}

std::vector<SamplingReportRow> run_sampling(Backend& backend, const std::vector<Scene>& scenes,
                                            const std::optional<std::string>& task_filter, const PlannerConfig& config) {
    std::vector<SamplingReportRow> rows;
    for (const auto& scene : scenes) {
        for (const auto& task : scene.tasks) {
            if (!task_selected(task_filter, scene, task)) {
                continue;
            }
            TokenLedger ledger(config.rate_per_1k);
            std::vector<Plan> plans;
            try {
                plans = sample_plans(backend, scene, task, config.n_samples, config, ledger);
            } catch (const PlannerError& e) {
                if (e.kind() != PlannerErrorKind::AllPlansEmpty) {
                    throw;
                }
            }
            if (config.oracle) {
                plans = inject_oracle(std::move(plans), task);
            }
            SamplingReportRow row{scene.name, task.name, config.n_samples, static_cast<int>(plans.size()),
                                  plan_set_gcr_stats(plans, task, scene.initial), plans};
            rows.push_back(std::move(row));
        }
    }
    if (rows.empty()) {
        throw HarnessError(HarnessErrorKind::NotFound, "no tasks selected");
    }
    return rows;
}

std::string sampling_stats_tsv(const std::vector<SamplingReportRow>& rows) {
    std::string out = "scene\ttask\tn\tparsed\tdistinct_plans\tgcr_max\tgcr_avg\n";
    for (const auto& r : rows) {
        out += fmt::format("{}\t{}\t{}\t{}\t{}\t{:.4f}\t{:.4f}\n", r.scene, r.task, r.n, r.parsed, r.stats.distinct_plans,
                           r.stats.gcr_max, r.stats.gcr_avg);
    }
    return out;
}

TokenReportRow measure_tokens(Backend& backend, const Scene& scene, const TaskSpec& task, const PlannerConfig& config) {
    auto tree = run_tree_planner(backend, scene, task, config);
    auto iterative = run_iterative_planner(backend, scene, task, config);

    TokenReportRow row;
    row.scene = scene.name;
    row.task = task.name;
    const auto& lt = tree.ledger;
    const auto& li = iterative.ledger;
    row.deciding_calls = lt.calls(Phase::grounded_deciding);
    row.iterative_calls = li.calls(Phase::iterative);

    long action_tokens = 0;
    long action_count = 0;
    for (const auto& plan : tree.sampled_plans) {
        for (const auto& a : plan.actions) {
            action_tokens += count_tokens(render_action(a));
            ++action_count;
        }
    }
    auto mean = [](long total, std::size_t count) {
        return count == 0 ? 0.0 : static_cast<double>(total) / static_cast<double>(count);
    };
    row.model.rho_ps = static_cast<double>(lt.prompt_tokens(Phase::plan_sampling));
    row.model.rho_gd = mean(lt.prompt_tokens(Phase::grounded_deciding), row.deciding_calls);
    row.model.rho_ip = mean(li.prompt_tokens(Phase::iterative), row.iterative_calls);
    row.model.a_len = action_count == 0 ? 1.0 : static_cast<double>(action_tokens) / static_cast<double>(action_count);
    row.model.m = static_cast<double>(std::max<std::size_t>(1, tree.history.size()));
    row.model.n = static_cast<double>(config.n_samples);
    row.measured_ours = lt.total_tokens();
    row.measured_ip = li.total_tokens();
    row.predicted = predicted_tokens(row.model);
    row.n_star = token_boundary(row.model);
    row.cost_ours = lt.total_cost();
    row.cost_ip = li.total_cost();
    return row;
}

std::string token_report_tsv(const std::vector<TokenReportRow>& rows) {
    std::string out = "scene\ttask\tN\tM\ta_len\trho_ps\trho_gd\trho_ip\trho_ps_plus_gd\tmu_ours_measured\tmu_ours_predicted\t"
                      "mu_ip_measured\tmu_ip_predicted\tn_star\tcost_ours\tcost_ip\n";
    for (const auto& r : rows) {
        out += fmt::format("{}\t{}\t{:g}\t{:g}\t{:.4f}\t{:g}\t{:.4f}\t{:.4f}\t{:.4f}\t{}\t{:.4f}\t{}\t{:.4f}\t{:.4f}\t{:.6f}\t{:.6f}\n",
                           r.scene, r.task, r.model.n, r.model.m, r.model.a_len, r.model.rho_ps, r.model.rho_gd,
                           r.model.rho_ip, r.model.rho_ps + r.model.rho_gd, r.measured_ours, r.predicted.mu_ours, r.measured_ip, r.predicted.mu_ip,
                           r.n_star, r.cost_ours, r.cost_ip);
    }
    return out;
}

} // namespace treeplan
