// SPDX-License-Identifier: Apache-2.0
#include "treeplan/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <tuple>

#include <fmt/format.h>

#include "treeplan/scene.hpp"

namespace treeplan {

std::string_view setting_name(bool correction_enabled) {
    return correction_enabled ? "with_correction" : "without_correction";
}

EpisodeMetrics compute_episode_metrics(const EpisodeResult& result, const TaskSpec& task) {
    EpisodeMetrics m;
    std::size_t achieved = 0;
    for (const auto& goal : task.goals) {
        achieved += std::find(result.achieved_goals.begin(), result.achieved_goals.end(), goal) !=
                            result.achieved_goals.end()
                        ? 1
                        : 0;
    }
    m.gcr = task.goals.empty() ? 0.0 : static_cast<double>(achieved) / static_cast<double>(task.goals.size());
    m.sr = !task.goals.empty() && achieved == task.goals.size() ? 1 : 0;
    m.exec = result.exec_ok ? 1 : 0;
    m.cost_usd = result.ledger.total_cost();
    m.tokens = result.ledger.total_tokens();
    m.no_ec = result.corrections;
    return m;
}

namespace {

MetricStat stat(const std::vector<double>& per_run) {
    MetricStat s;
    if (per_run.empty()) {
        return s;
    }
    double sum = 0.0;
    for (double v : per_run) {
        sum += v;
    }
    s.mean = sum / static_cast<double>(per_run.size());
    if (per_run.size() > 1) {
        double sq = 0.0;
        for (double v : per_run) {
            sq += (v - s.mean) * (v - s.mean);
        }
        s.sd = std::sqrt(sq / static_cast<double>(per_run.size() - 1));
    }
    return s;
}

int method_rank(std::string_view method) {
    auto m = parse_method(method);
    return m ? static_cast<int>(*m) : 99;
}

} // namespace

std::vector<MetricRow> aggregate(std::span<const EpisodeRecord> records) {
    if (records.empty()) {
        throw EvalError(EvalErrorKind::EmptyCell, "no episodes to aggregate");
    }
    using CellKey = std::tuple<int, int, std::string, std::string>; // setting rank, method rank, setting, method
    std::map<CellKey, std::map<int, std::vector<const EpisodeRecord*>>> cells;
    for (const auto& r : records) {
        int setting_rank = r.setting == setting_name(false) ? 0 : 1;
        cells[{setting_rank, method_rank(r.method), r.setting, r.method}][r.run].push_back(&r);
    }
    std::vector<MetricRow> rows;
    for (const auto& [key, runs] : cells) {
        MetricRow row;
        row.setting = std::get<2>(key);
        row.method = std::get<3>(key);
        std::vector<double> exec, sr, gcr, cost, no_ec;
        std::set<std::pair<std::string, std::string>> tasks;
        for (const auto& [run, episodes] : runs) {
            if (episodes.empty()) {
                throw EvalError(EvalErrorKind::EmptyCell, fmt::format("{} / {} has an empty run", row.method, row.setting));
            }
            double e = 0, s = 0, g = 0, c = 0, k = 0;
            for (const auto* ep : episodes) {
                e += ep->metrics.exec;
                s += ep->metrics.sr;
                g += ep->metrics.gcr;
                c += ep->metrics.cost_usd;
                k += ep->metrics.no_ec;
                tasks.emplace(ep->scene, ep->task);
            }
            auto n = static_cast<double>(episodes.size());
            exec.push_back(e / n);
            sr.push_back(s / n);
            gcr.push_back(g / n);
            cost.push_back(c / n);
            no_ec.push_back(k / n);
        }
        row.exec = stat(exec);
        row.sr = stat(sr);
        row.gcr = stat(gcr);
        row.cost_usd = stat(cost);
        row.no_ec = stat(no_ec);
        row.n_tasks = static_cast<int>(tasks.size());
        row.n_runs = static_cast<int>(runs.size());
        rows.push_back(std::move(row));
    }
    return rows;
}

SamplingStats plan_set_gcr_stats(std::span<const Plan> plans, const TaskSpec& task, const WorldState& initial) {
    SamplingStats stats;
    std::set<std::vector<Action>> distinct;
    for (const auto& plan : plans) {
        auto run = dry_run(initial, plan.actions);
        auto achieved = achieved_goal_conditions(run.final_state, task.goals);
        double gcr = task.goals.empty() ? 0.0
                                        : static_cast<double>(achieved.size()) / static_cast<double>(task.goals.size());
        stats.gcr_values.push_back(gcr);
        distinct.insert(plan.actions);
    }
    if (!stats.gcr_values.empty()) {
        stats.gcr_max = *std::max_element(stats.gcr_values.begin(), stats.gcr_values.end());
        double sum = 0.0;
        for (double v : stats.gcr_values) {
            sum += v;
        }
        stats.gcr_avg = sum / static_cast<double>(stats.gcr_values.size());
    }
    stats.distinct_plans = static_cast<int>(distinct.size());
    return stats;
}

double token_boundary(const TokenModel& model) {
    if (model.m < 1.0 || model.a_len <= 0.0 || model.rho_ps < 0.0) {
        throw EvalError(EvalErrorKind::InvalidModel, "token model needs M >= 1, |a| > 0, rho_ps >= 0");
    }
    const double a = model.a_len;
    return (1.0 - 1.0 / model.m) / (1.0 + 1.0 / a) * (model.rho_ps / a) + a / (a + 1.0);
}

PredictedTokens predicted_tokens(const TokenModel& model) {
    PredictedTokens p;
    p.mu_ours = model.rho_ps + model.m * model.n * model.a_len + model.m * (model.rho_gd + model.n);
    p.mu_ip = model.m * (model.rho_ip + model.a_len);
    return p;
}

std::string results_tsv(std::span<const EpisodeRecord> records) {
    std::string out = "method\tsetting\tscene\ttask\trun\texec\tsr\tgcr\tcost_usd\tno_ec\ttokens\n";
    for (const auto& r : records) {
        out += fmt::format("{}\t{}\t{}\t{}\t{}\t{}\t{}\t{:.4f}\t{:.6f}\t{}\t{}\n", r.method, r.setting, r.scene, r.task,
                           r.run, r.metrics.exec, r.metrics.sr, r.metrics.gcr, r.metrics.cost_usd, r.metrics.no_ec,
                           r.metrics.tokens);
    }
    return out;
}

std::string aggregate_tsv(std::span<const MetricRow> rows) {
    std::string out = "method\tsetting\tn_tasks\tn_runs\texec\texec_sd\tsr\tsr_sd\tgcr\tgcr_sd\tcost_usd\tcost_sd\tno_ec\t"
                      "no_ec_sd\n";
    for (const auto& r : rows) {
        out += fmt::format("{}\t{}\t{}\t{}\t{:.4f}\t{:.4f}\t{:.4f}\t{:.4f}\t{:.4f}\t{:.4f}\t{:.6f}\t{:.6f}\t{:.4f}\t{:.4f}\n",
                           r.method, r.setting, r.n_tasks, r.n_runs, r.exec.mean, r.exec.sd, r.sr.mean, r.sr.sd,
                           r.gcr.mean, r.gcr.sd, r.cost_usd.mean, r.cost_usd.sd, r.no_ec.mean, r.no_ec.sd);
    }
    return out;
}

std::string aggregate_table(std::span<const MetricRow> rows) {
    auto pct = [](const MetricStat& s) { return fmt::format("{:6.2f} ± {:5.2f}", s.mean * 100.0, s.sd * 100.0); };
    std::string out = fmt::format("{:<14} {:<19} {:>15} {:>15} {:>15} {:>9} {:>6}\n", "method", "setting", "Exec",
                                  "SR", "GCR", "$Cost", "No.EC");
    for (const auto& r : rows) {
        out += fmt::format("{:<14} {:<19} {:>15} {:>15} {:>15} {:>9.4f} {:>6.2f}\n", r.method, r.setting, pct(r.exec),
                           pct(r.sr), pct(r.gcr), r.cost_usd.mean, r.no_ec.mean);
    }
    return out;
}

} // namespace treeplan
