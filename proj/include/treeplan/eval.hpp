// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "treeplan/errors.hpp"
#include "treeplan/grammar.hpp"
#include "treeplan/planner.hpp"
#include "treeplan/world.hpp"

namespace treeplan {

enum class EvalErrorKind { EmptyCell, InvalidModel };
using EvalError = KindedError<EvalErrorKind>;

std::string_view setting_name(bool correction_enabled); // with_correction / without_correction

struct EpisodeMetrics {
    int exec = 0;
    int sr = 0;
    double gcr = 0.0;
    double cost_usd = 0.0;
    int no_ec = 0;
    long tokens = 0;
};

EpisodeMetrics compute_episode_metrics(const EpisodeResult& result, const TaskSpec& task);

struct EpisodeRecord {
    std::string method;
    std::string setting;
    std::string scene;
    std::string task;
    int run = 0;
    EpisodeMetrics metrics;
};

struct MetricStat {
    double mean = 0.0;
    double sd = 0.0; // sample standard deviation across runs
};

struct MetricRow {
    std::string method;
    std::string setting;
    MetricStat exec;
    MetricStat sr;
    MetricStat gcr;
    MetricStat cost_usd;
    MetricStat no_ec;
    int n_tasks = 0;
    int n_runs = 0;
};

/// One row per (method, setting): per run the mean over tasks, then mean and
/// sample deviation over runs. Rows are ordered without-correction first,
/// then by method.
std::vector<MetricRow> aggregate(std::span<const EpisodeRecord> records);

struct SamplingStats {
    std::vector<double> gcr_values;
    double gcr_max = 0.0;
    double gcr_avg = 0.0;
    int distinct_plans = 0;
};

/// Runs every plan open-loop from `initial` (stopping at its first failing
/// action) and scores the goals reached there.
SamplingStats plan_set_gcr_stats(std::span<const Plan> plans, const TaskSpec& task, const WorldState& initial);

struct TokenModel {
    double rho_ps = 0.0; // sampling prompt tokens
    double rho_gd = 0.0; // deciding prompt tokens per step
    double rho_ip = 0.0; // iterative prompt tokens per step
    double a_len = 1.0;  // tokens per action
    double m = 1.0;      // steps per plan
    double n = 1.0;      // samples
};

struct PredictedTokens {
    double mu_ours = 0.0;
    double mu_ip = 0.0;
};

double token_boundary(const TokenModel& model);
PredictedTokens predicted_tokens(const TokenModel& model);

// Report files
std::string results_tsv(std::span<const EpisodeRecord> records);
std::string aggregate_tsv(std::span<const MetricRow> rows);
std::string aggregate_table(std::span<const MetricRow> rows);

} // namespace treeplan
