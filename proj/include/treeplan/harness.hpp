// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "treeplan/action_tree.hpp"
#include "treeplan/eval.hpp"
#include "treeplan/llm.hpp"
#include "treeplan/planner.hpp"
#include "treeplan/scene.hpp"

namespace treeplan {

enum class HarnessErrorKind { NotFound, BadArtifact };
using HarnessError = KindedError<HarnessErrorKind>;

struct GridSpec {
    std::vector<Method> methods{Method::tree};
    std::vector<bool> settings{true}; // correction_enabled values
    std::optional<std::string> task_filter;
    int runs = 1;
    int jobs = 1;
    PlannerConfig config;
};

struct GridOutput {
    std::vector<EpisodeRecord> records; // grid order: scene, task, setting, method, run
    std::vector<EpisodeResult> results; // parallel to records
    std::vector<MetricRow> rows;
};

/// Lower-case, spaces to underscores: "Take nap" -> "take_nap".
std::string task_slug(std::string_view task);

/// A filter is a task name or "<scene>/<task name>"; no filter selects all.
bool task_selected(const std::optional<std::string>& filter, const Scene& scene, const TaskSpec& task);

/// "<scene>/<task_slug>/<method>-<setting>-run<k>", relative to episodes/.
std::string episode_id(const EpisodeRecord& record);

/// Runs every (scene, task, setting, method, run) cell, up to `jobs` at a
/// time. Results come back in grid order regardless of completion order.
GridOutput run_grid(Backend& backend, const std::vector<Scene>& scenes, const GridSpec& spec);

/// results.tsv, aggregate.tsv, aggregate.txt, ledger.tsv and one
/// episodes/<id>.jsonl per episode (+ .tree.json and .dot for the tree method).
void write_grid_outputs(const GridOutput& output, const std::filesystem::path& out_dir);

struct TreeArtifact {
    ActionTree tree;
    std::vector<NodeId> path;
};

std::string tree_artifact_json(const ActionTree& tree, const std::vector<NodeId>& path);
TreeArtifact parse_tree_artifact(std::string_view text);

/// Accepts a .tree.json path, or an episode id looked up below `runs_dir`.
TreeArtifact load_tree_artifact(const std::string& target, const std::filesystem::path& runs_dir);

struct SamplingReportRow {
    std::string scene;
    std::string task;
    int n = 0;
    int parsed = 0;
    SamplingStats stats;
    std::vector<Plan> plans;
};

std::vector<SamplingReportRow> run_sampling(Backend& backend, const std::vector<Scene>& scenes,
                                            const std::optional<std::string>& task_filter, const PlannerConfig& config);
std::string sampling_stats_tsv(const std::vector<SamplingReportRow>& rows);

struct TokenReportRow {
    std::string scene;
    std::string task;
    TokenModel model;
    long measured_ours = 0;
    long measured_ip = 0;
    PredictedTokens predicted;
    double n_star = 0.0;
    double cost_ours = 0.0;
    double cost_ip = 0.0;
    std::size_t deciding_calls = 0;
    std::size_t iterative_calls = 0;
};

/// Runs one Tree-Planner and one Iterative-Planner episode per task and fits
/// the token model to what the ledgers recorded.
TokenReportRow measure_tokens(Backend& backend, const Scene& scene, const TaskSpec& task, const PlannerConfig& config);
std::string token_report_tsv(const std::vector<TokenReportRow>& rows);

void write_text_file(const std::filesystem::path& path, std::string_view text);

} // namespace treeplan
