#pragma once

// Scoring and failure attribution: normalized memory score against random and
// truth-injected baselines, plus the write/read/utilization failure taxonomy
// driven by state probes.

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "amemgym/log.hpp"
#include "amemgym/model.hpp"
#include "amemgym/util.hpp"

namespace amemgym {

// ─── Core scores ─────────────────────────────────────────────────────────────

/// Normalized memory score: 0 = guessing, 1 = the agent's own ceiling with
/// perfect state knowledge. Undefined when the ceiling equals chance.
inline double memory_score(double overall, double random_baseline, double upper_bound) {
    if (upper_bound == random_baseline)
        throw Error(ErrorKind::validation,
                    "memory score undefined: upper bound equals the random baseline");
    return (overall - random_baseline) / (upper_bound - random_baseline);
}

/// Expected accuracy of uniform guessing at one position: the mean over
/// questions of one over that question's presented option count.
inline double random_baseline_at(const Blueprint& bp, int position) {
    if (bp.questions.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& q : bp.questions) sum += 1.0 / double(options_for(bp, q, position).size());
    return sum / double(bp.questions.size());
}

/// Largest period w <= t that updated `var`; 0 when only the initial state set it.
inline int write_position(const Blueprint& bp, const std::string& var, int t) {
    int w = 0;
    for (const auto& p : bp.periods) {
        if (p.index > t) break;
        if (p.updates.count(var)) w = p.index;
    }
    return w;
}

// ─── Failure taxonomy ────────────────────────────────────────────────────────

enum class FailureLabel { none, write, read, utilization };

inline std::string failure_name(FailureLabel f) {
    switch (f) {
        case FailureLabel::none: return "none";
        case FailureLabel::write: return "write";
        case FailureLabel::read: return "read";
        default: return "utilization";
    }
}

/// Per-variable probe correctness across every evaluation position.
struct ProbeMatrix {
    // correct[var][t] = probe at position t matched the true state
    std::map<std::string, std::vector<bool>> correct;

    static ProbeMatrix from(const Blueprint& bp, const EpisodeTrace& trace) {
        ProbeMatrix m;
        for (const auto& v : bp.schema.variables)
            m.correct[v.name] = std::vector<bool>(trace.periods.size(), false);
        for (std::size_t t = 0; t < trace.periods.size(); ++t) {
            const StateAssignment sigma = state_at(bp, int(t));
            for (const auto& v : bp.schema.variables) {
                auto it = trace.periods[t].probe.find(v.name);
                std::string probed = it == trace.periods[t].probe.end() ? "" : it->second;
                m.correct[v.name][t] = probed == sigma.at(v.name);
            }
        }
        return m;
    }

    bool at(const std::string& var, int t) const {
        auto it = correct.find(var);
        if (it == correct.end() || t < 0 || std::size_t(t) >= it->second.size()) return false;
        return it->second[std::size_t(t)];
    }
};

/// Attribute one failed evaluation to the memory stage that broke first.
/// Write failures dominate read failures; utilization means memory held the
/// right values yet the answer still missed.
inline FailureLabel classify_failure(const EvaluationRecord& rec, const EvaluationQuestion& q,
                                     const Blueprint& bp, const ProbeMatrix& probes, int t) {
    if (rec.chosen == rec.truth) return FailureLabel::none;

    std::vector<std::string> wrong_now;
    for (const auto& var : q.required)
        if (!probes.at(var, t)) wrong_now.push_back(var);

    if (wrong_now.empty()) return FailureLabel::utilization;

    for (const auto& var : wrong_now)
        if (!probes.at(var, write_position(bp, var, t))) return FailureLabel::write;
    return FailureLabel::read;
}

// ─── Report assembly ─────────────────────────────────────────────────────────

inline PositionScores score_position(const Blueprint& bp, const EpisodeTrace& trace,
                                     const ProbeMatrix& probes, int t) {
    const auto& entry = trace.periods.at(std::size_t(t));
    PositionScores s;
    s.position = t;
    s.random_baseline = random_baseline_at(bp, t);

    int correct = 0, ub_correct = 0, writes = 0, reads = 0, utils = 0;
    for (const auto& rec : entry.evaluations) {
        const EvaluationQuestion* q = nullptr;
        for (const auto& cand : bp.questions)
            if (cand.id == rec.question_id) q = &cand;
        if (!q)
            throw Error(ErrorKind::validation,
                        "trace references unknown question id " + std::to_string(rec.question_id));
        if (rec.chosen == rec.truth) ++correct;
        if (rec.ub_chosen == rec.truth) ++ub_correct;
        switch (classify_failure(rec, *q, bp, probes, t)) {
            case FailureLabel::write: ++writes; break;
            case FailureLabel::read: ++reads; break;
            case FailureLabel::utilization: ++utils; break;
            case FailureLabel::none: break;
        }
    }

    const double n = double(entry.evaluations.size());
    if (n == 0)
        throw Error(ErrorKind::validation,
                    "position " + std::to_string(t) + " holds no evaluations");
    s.overall = correct / n;
    s.upper_bound = ub_correct / n;
    s.write_rate = writes / n;
    s.read_rate = reads / n;
    s.utilization_rate = utils / n;
    if (s.upper_bound == s.random_baseline) {
        log_warn("position " + std::to_string(t) +
                 ": upper bound equals random baseline, memory score undefined");
        s.memory = std::numeric_limits<double>::quiet_NaN();
    } else {
        s.memory = memory_score(s.overall, s.random_baseline, s.upper_bound);
    }
    return s;
}

/// Full scorecard for one episode: a row per position plus the unweighted
/// mean over positions, position 0 included.
inline ReportBundle aggregate_report(const Blueprint& bp, const EpisodeTrace& trace) {
    if (trace.blueprint_ref != bp.ref())
        throw Error(ErrorKind::compatibility,
                    "trace belongs to blueprint '" + trace.blueprint_ref + "', not '" +
                        bp.ref() + "'");
    ProbeMatrix probes = ProbeMatrix::from(bp, trace);

    ReportBundle r;
    for (std::size_t t = 0; t < trace.periods.size(); ++t)
        r.per_position.push_back(score_position(bp, trace, probes, int(t)));

    PositionScores agg;
    agg.position = -1;
    double mem_sum = 0.0;
    int mem_n = 0;
    for (const auto& s : r.per_position) {
        agg.overall += s.overall;
        agg.random_baseline += s.random_baseline;
        agg.upper_bound += s.upper_bound;
        agg.write_rate += s.write_rate;
        agg.read_rate += s.read_rate;
        agg.utilization_rate += s.utilization_rate;
        if (!std::isnan(s.memory)) {
            mem_sum += s.memory;
            ++mem_n;
        }
    }
    const double n = double(r.per_position.size());
    agg.overall /= n;
    agg.random_baseline /= n;
    agg.upper_bound /= n;
    agg.write_rate /= n;
    agg.read_rate /= n;
    agg.utilization_rate /= n;
    agg.memory = mem_n > 0 ? mem_sum / double(mem_n) : std::numeric_limits<double>::quiet_NaN();
    r.aggregate = agg;

    r.metadata["blueprint"] = bp.ref();
    r.metadata["agent"] = trace.agent_descriptor;
    r.metadata["mode"] = trace.mode;
    r.metadata["positions"] = std::to_string(r.per_position.size());
    r.metadata["sessions"] = std::to_string(trace.total_sessions());
    r.metadata["exchanges"] = std::to_string(trace.total_exchanges());
    return r;
}

// ─── Merging ─────────────────────────────────────────────────────────────────

/// Mean of several reports position by position (e.g. across users). Requires
/// identical position layouts.
inline ReportBundle merge_reports(const std::vector<ReportBundle>& reports) {
    if (reports.empty()) throw Error(ErrorKind::validation, "no reports to merge");
    const std::size_t positions = reports.front().per_position.size();
    for (const auto& r : reports)
        if (r.per_position.size() != positions)
            throw Error(ErrorKind::compatibility, "reports disagree on position count");

    auto mean_field = [&](auto getter, std::size_t t) {
        double sum = 0.0;
        int n = 0;
        for (const auto& r : reports) {
            double v = getter(t == SIZE_MAX ? r.aggregate : r.per_position[t]);
            if (std::isnan(v)) continue;
            sum += v;
            ++n;
        }
        return n > 0 ? sum / double(n) : std::numeric_limits<double>::quiet_NaN();
    };

    ReportBundle out;
    auto fill = [&](PositionScores& s, std::size_t t) {
        s.overall = mean_field([](const PositionScores& p) { return p.overall; }, t);
        s.random_baseline =
            mean_field([](const PositionScores& p) { return p.random_baseline; }, t);
        s.upper_bound = mean_field([](const PositionScores& p) { return p.upper_bound; }, t);
        s.memory = mean_field([](const PositionScores& p) { return p.memory; }, t);
        s.write_rate = mean_field([](const PositionScores& p) { return p.write_rate; }, t);
        s.read_rate = mean_field([](const PositionScores& p) { return p.read_rate; }, t);
        s.utilization_rate =
            mean_field([](const PositionScores& p) { return p.utilization_rate; }, t);
    };
    for (std::size_t t = 0; t < positions; ++t) {
        PositionScores s;
        s.position = reports.front().per_position[t].position;
        fill(s, t);
        out.per_position.push_back(s);
    }
    out.aggregate.position = -1;
    fill(out.aggregate, SIZE_MAX);
    out.metadata["merged_reports"] = std::to_string(reports.size());
    return out;
}

/// Mean and sample standard deviation of the aggregate memory score across
/// repeated runs (n-1 denominator).
inline std::pair<double, double> memory_mean_stdev(const std::vector<ReportBundle>& reports) {
    std::vector<double> xs;
    for (const auto& r : reports)
        if (!std::isnan(r.aggregate.memory)) xs.push_back(r.aggregate.memory);
    if (xs.empty()) return {std::numeric_limits<double>::quiet_NaN(), 0.0};
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= double(xs.size());
    if (xs.size() < 2) return {mean, 0.0};
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    var /= double(xs.size() - 1);
    return {mean, std::sqrt(var)};
}

// ─── CSV rendering ───────────────────────────────────────────────────────────

inline std::string report_csv(const ReportBundle& r) {
    std::string out = "position,overall,random,ub,memory,write_rate,read_rate,util_rate\n";
    auto row = [&](const std::string& label, const PositionScores& s) {
        out += label + "," + fmt_fixed(s.overall) + "," + fmt_fixed(s.random_baseline) + "," +
               fmt_fixed(s.upper_bound) + "," +
               (std::isnan(s.memory) ? "nan" : fmt_fixed(s.memory)) + "," +
               fmt_fixed(s.write_rate) + "," + fmt_fixed(s.read_rate) + "," +
               fmt_fixed(s.utilization_rate) + "\n";
    };
    for (const auto& s : r.per_position) row(std::to_string(s.position), s);
    row("aggregate", r.aggregate);
    return out;
}

}  // namespace amemgym
