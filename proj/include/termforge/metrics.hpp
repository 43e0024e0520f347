#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "termforge/bundle.hpp"
#include "termforge/harness.hpp"

namespace termforge {

struct SplitAverage {
    double overall = 0.0;
    double pass = 0.0;
    double fail = 0.0;
};

struct MetricRow {
    std::string agent;
    std::string model;
    double pass_rate_pct = 0.0;
    double resolved_rate_pct = 0.0;
    SplitAverage avg_turns;
    SplitAverage avg_tokens_k;
    SplitAverage avg_time_min;
    double cost_usd = 0.0;
    std::optional<double> usd_per_pass;  // undefined when passes = 0
    double usd_per_pass_task = 0.0;
    double usd_per_fail_task = 0.0;
    bool all_errors = false;
};

struct OverlapStat {
    std::string task_id;
    std::set<std::string> agent_commands;
    std::set<std::string> ref_commands;
    double jaccard = 0.0;
    bool both_empty = false;  // degenerate case, defined as 1.0 and flagged
};

// (pass_pct, resolved_pct) = (100*pass/total, 100*pass/(total-errors)).
std::pair<double, double> pass_rate(const RunSet& set);
std::pair<double, double> pass_rate_from_counts(int passes, int total, int errors);

MetricRow aggregate(const RunSet& set);

double pearson(const std::vector<double>& xs, const std::vector<double>& ys);

// Normalized command-name set: compound lines split on ;, &&, ||, |; wrapper
// prefixes and variable assignments dropped; directory prefixes stripped;
// pure no-ops (true, :) excluded.
std::set<std::string> normalize_commands(const std::vector<std::string>& lines);
std::set<std::string> normalize_trajectory(const Trajectory& trajectory);

double command_overlap(const std::set<std::string>& agent, const std::set<std::string>& ref);

OverlapStat overlap_stat(const std::string& task_id, const Trajectory& trajectory,
                         const ReferenceSolution& solution);

double median(std::vector<double> values);

// Breakdown tables keyed by category and by (command bin, duration bin).
struct BreakdownCell {
    int passes = 0;
    int total = 0;
    double pass_rate_pct() const { return total ? 100.0 * passes / total : 0.0; }
};

struct Breakdowns {
    std::map<std::string, BreakdownCell> by_category;
    std::map<std::pair<std::string, std::string>, BreakdownCell> by_complexity;
};

std::string command_bin(int n_commands);        // 1-5 | 6-10 | 11-20 | 21+
std::string duration_bin(double duration_s);    // <60s | 60-180s | >180s

Breakdowns breakdowns(const RunSet& set, const std::map<std::string, BundleMetadata>& bundles);

// Rounding used by reports: percentages to 1 decimal, dollars to 2.
double round_pct(double v);
double round_usd(double v);

// Human-readable table + machine CSV with MetricRow columns in table order.
std::string render_report_text(const std::vector<MetricRow>& rows, const Breakdowns& breakdown);
std::string render_report_csv(const std::vector<MetricRow>& rows);

}  // namespace termforge
