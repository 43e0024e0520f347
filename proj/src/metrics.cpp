#include "termforge/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "termforge/errors.hpp"
#include "termforge/util.hpp"

namespace termforge {

double round_pct(double v) { return std::round(v * 10.0) / 10.0; }
double round_usd(double v) { return std::round(v * 100.0) / 100.0; }

std::pair<double, double> pass_rate_from_counts(int passes, int total, int errors) {
    if (total <= 0) throw Error("pass_rate: empty run set");
    if (errors >= total) throw AllErrors();
    double pass_pct = 100.0 * passes / total;
    double resolved_pct = 100.0 * passes / (total - errors);
    return {pass_pct, resolved_pct};
}

std::pair<double, double> pass_rate(const RunSet& set) {
    int passes = 0, errors = 0;
    for (const auto& r : set.records) {
        if (r.outcome == Outcome::Pass) ++passes;
        if (r.outcome == Outcome::Error) ++errors;
    }
    return pass_rate_from_counts(passes, static_cast<int>(set.records.size()), errors);
}

MetricRow aggregate(const RunSet& set) {
    if (set.records.empty()) throw Error("aggregate: empty run set");
    MetricRow row;
    row.agent = set.agent;
    row.model = set.model;

    int passes = 0, errors = 0;
    double turns_all = 0, turns_pass = 0, turns_fail = 0;
    double tok_all = 0, tok_pass = 0, tok_fail = 0;
    double min_all = 0, min_pass = 0, min_fail = 0;
    double cost_pass = 0, cost_fail = 0;
    int n_ran = 0, n_pass = 0, n_fail = 0;

    for (const auto& r : set.records) {
        if (r.outcome == Outcome::Error) {
            ++errors;
            continue;  // averages only over tasks where the agent ran
        }
        double turns = 0, tokens_k = 0, minutes = 0, cost = 0;
        if (r.trajectory) {
            turns = static_cast<double>(r.trajectory->turns.size());
            tokens_k = (r.trajectory->usage.input_tokens + r.trajectory->usage.output_tokens) /
                       1000.0;
            minutes = r.trajectory->wall_time_s / 60.0;
            cost = r.trajectory->usage.cost_usd;
        }
        ++n_ran;
        turns_all += turns;
        tok_all += tokens_k;
        min_all += minutes;
        row.cost_usd += cost;
        if (r.outcome == Outcome::Pass) {
            ++passes;
            ++n_pass;
            turns_pass += turns;
            tok_pass += tokens_k;
            min_pass += minutes;
            cost_pass += cost;
        } else {  // fail and timeout (timeout is a subset of fail)
            ++n_fail;
            turns_fail += turns;
            tok_fail += tokens_k;
            min_fail += minutes;
            cost_fail += cost;
        }
    }

    if (n_ran == 0) {
        row.all_errors = true;
        return row;
    }
    auto [pass_pct, resolved_pct] =
        pass_rate_from_counts(passes, static_cast<int>(set.records.size()), errors);
    row.pass_rate_pct = pass_pct;
    row.resolved_rate_pct = resolved_pct;
    row.avg_turns = {turns_all / n_ran, n_pass ? turns_pass / n_pass : 0.0,
                     n_fail ? turns_fail / n_fail : 0.0};
    row.avg_tokens_k = {tok_all / n_ran, n_pass ? tok_pass / n_pass : 0.0,
                        n_fail ? tok_fail / n_fail : 0.0};
    row.avg_time_min = {min_all / n_ran, n_pass ? min_pass / n_pass : 0.0,
                        n_fail ? min_fail / n_fail : 0.0};
    if (passes > 0) row.usd_per_pass = row.cost_usd / passes;
    row.usd_per_pass_task = n_pass ? cost_pass / n_pass : 0.0;
    row.usd_per_fail_task = n_fail ? cost_fail / n_fail : 0.0;
    return row;
}

double pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size()) throw LengthMismatch();
    size_t n = xs.size();
    if (n < 2) throw LengthMismatch();
    double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
    double sxy = 0, sxx = 0, syy = 0;
    for (size_t i = 0; i < n; ++i) {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) throw ConstantSeries();
    return sxy / std::sqrt(sxx * syy);
}

std::set<std::string> normalize_commands(const std::vector<std::string>& lines) {
    std::set<std::string> names;
    for (const auto& line : lines)
        for (const auto& simple : split_compound_command(line)) {
            std::string tok = leading_command_token(simple);
            if (tok.empty() || tok == "true" || tok == ":") continue;
            names.insert(tok);
        }
    return names;
}

std::set<std::string> normalize_trajectory(const Trajectory& trajectory) {
    std::vector<std::string> lines;
    for (const auto& [cmd, out] : trajectory.turns) lines.push_back(cmd);
    return normalize_commands(lines);
}

double command_overlap(const std::set<std::string>& agent, const std::set<std::string>& ref) {
    if (agent.empty() && ref.empty()) return 1.0;
    std::vector<std::string> inter;
    std::set_intersection(agent.begin(), agent.end(), ref.begin(), ref.end(),
                          std::back_inserter(inter));
    size_t uni = agent.size() + ref.size() - inter.size();
    return static_cast<double>(inter.size()) / static_cast<double>(uni);
}

OverlapStat overlap_stat(const std::string& task_id, const Trajectory& trajectory,
                         const ReferenceSolution& solution) {
    OverlapStat stat;
    stat.task_id = task_id;
    stat.agent_commands = normalize_trajectory(trajectory);
    stat.ref_commands = normalize_commands(solution.commands);
    stat.both_empty = stat.agent_commands.empty() && stat.ref_commands.empty();
    stat.jaccard = command_overlap(stat.agent_commands, stat.ref_commands);
    return stat;
}

double median(std::vector<double> values) {
    if (values.empty()) throw Error("median of empty list");
    std::sort(values.begin(), values.end());
    size_t n = values.size();
    return n % 2 ? values[n / 2] : (values[n / 2 - 1] + values[n / 2]) / 2.0;
}

std::string command_bin(int n_commands) {
    if (n_commands <= 5) return "1-5";
    if (n_commands <= 10) return "6-10";
    if (n_commands <= 20) return "11-20";
    return "21+";
}

std::string duration_bin(double duration_s) {
    if (duration_s < 60.0) return "<60s";
    if (duration_s <= 180.0) return "60-180s";
    return ">180s";
}

Breakdowns breakdowns(const RunSet& set, const std::map<std::string, BundleMetadata>& bundles) {
    Breakdowns out;
    for (const auto& r : set.records) {
        auto it = bundles.find(r.task_id);
        if (it == bundles.end()) throw MissingMetadata(r.task_id);
        const BundleMetadata& meta = it->second;
        bool pass = r.outcome == Outcome::Pass;
        auto& cat = out.by_category[meta.category];
        cat.total++;
        if (pass) cat.passes++;
        auto& cell = out.by_complexity[{command_bin(meta.n_commands),
                                        duration_bin(meta.recording_duration_s)}];
        cell.total++;
        if (pass) cell.passes++;
    }
    return out;
}

namespace {

std::string fmt1(double v) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(1) << round_pct(v);
    return out.str();
}

std::string fmt2(double v) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(2) << round_usd(v);
    return out.str();
}

}  // namespace

std::string render_report_text(const std::vector<MetricRow>& rows, const Breakdowns& breakdown) {
    std::ostringstream out;
    out << "Agent / model results\n";
    out << "agent  model  pass%  resolved%  turns(all/pass/fail)  tokens_k(all/pass/fail)  "
           "time_min(all/pass/fail)  cost$  $/pass  $/pass-task  $/fail-task\n";
    for (const auto& r : rows) {
        if (r.all_errors) {
            out << r.agent << "  " << r.model << "  all-errors: averages undefined\n";
            continue;
        }
        out << r.agent << "  " << r.model << "  " << fmt1(r.pass_rate_pct) << "  "
            << fmt1(r.resolved_rate_pct) << "  " << fmt1(r.avg_turns.overall) << "/"
            << fmt1(r.avg_turns.pass) << "/" << fmt1(r.avg_turns.fail) << "  "
            << fmt1(r.avg_tokens_k.overall) << "/" << fmt1(r.avg_tokens_k.pass) << "/"
            << fmt1(r.avg_tokens_k.fail) << "  " << fmt1(r.avg_time_min.overall) << "/"
            << fmt1(r.avg_time_min.pass) << "/" << fmt1(r.avg_time_min.fail) << "  "
            << fmt2(r.cost_usd) << "  "
            << (r.usd_per_pass ? fmt2(*r.usd_per_pass) : std::string("undefined")) << "  "
            << fmt2(r.usd_per_pass_task) << "  " << fmt2(r.usd_per_fail_task) << "\n";
    }
    if (!breakdown.by_category.empty()) {
        out << "\nPass rate by category\n";
        for (const auto& [cat, cell] : breakdown.by_category)
            out << "  " << cat << ": " << fmt1(cell.pass_rate_pct()) << "% (" << cell.passes << "/"
                << cell.total << ")\n";
    }
    if (!breakdown.by_complexity.empty()) {
        out << "\nPass rate by complexity (commands x duration)\n";
        for (const auto& [key, cell] : breakdown.by_complexity)
            out << "  " << key.first << " x " << key.second << ": " << fmt1(cell.pass_rate_pct())
                << "% (" << cell.passes << "/" << cell.total << ")\n";
    }
    return out.str();
}

std::string render_report_csv(const std::vector<MetricRow>& rows) {
    std::ostringstream out;
    out << "agent,model,pass_rate_pct,resolved_rate_pct,avg_turns,avg_turns_pass,avg_turns_fail,"
           "avg_tokens_k,avg_tokens_k_pass,avg_tokens_k_fail,avg_time_min,avg_time_min_pass,"
           "avg_time_min_fail,cost_usd,usd_per_pass,usd_per_pass_task,usd_per_fail_task\n";
    for (const auto& r : rows) {
        out << r.agent << "," << r.model << "," << fmt1(r.pass_rate_pct) << ","
            << fmt1(r.resolved_rate_pct) << "," << fmt1(r.avg_turns.overall) << ","
            << fmt1(r.avg_turns.pass) << "," << fmt1(r.avg_turns.fail) << ","
            << fmt1(r.avg_tokens_k.overall) << "," << fmt1(r.avg_tokens_k.pass) << ","
            << fmt1(r.avg_tokens_k.fail) << "," << fmt1(r.avg_time_min.overall) << ","
            << fmt1(r.avg_time_min.pass) << "," << fmt1(r.avg_time_min.fail) << ","
            << fmt2(r.cost_usd) << ","
            << (r.usd_per_pass ? fmt2(*r.usd_per_pass) : std::string("")) << ","
            << fmt2(r.usd_per_pass_task) << "," << fmt2(r.usd_per_fail_task) << "\n";
    }
    return out.str();
}

}  // namespace termforge
