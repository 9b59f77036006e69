// Scoring oracles: every number checked here was computed by hand from the
// mini blueprint (three variables, two periods, two six-option questions).

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>

#include "amemgym/metrics.hpp"
#include "helpers.hpp"

using namespace amemgym;
using Catch::Approx;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

EpisodeTrace trace_shell(const Blueprint& bp) {
    EpisodeTrace tr;
    tr.blueprint_ref = bp.ref();
    tr.agent_descriptor = "awi-(1,0,30)";
    tr.mode = "onpolicy";
    tr.seed = 9;
    return tr;
}

PeriodTraceEntry entry_at(int position, StateAssignment probe) {
    PeriodTraceEntry e;
    e.position = position;
    e.probe = std::move(probe);
    e.sessions.push_back({{Role::user, "hi"}, {Role::assistant, "hello"}});
    return e;
}

EvaluationRecord record(int question_id, int truth, int chosen, int ub_chosen) {
    EvaluationRecord r;
    r.question_id = question_id;
    r.options = {"a", "b", "c", "d", "e", "f"};
    r.truth = truth;
    r.chosen = chosen;
    r.ub_chosen = ub_chosen;
    return r;
}

/// Probe matrix built directly from per-variable correctness flags, one flag
/// per evaluation position.
ProbeMatrix probes_of(std::vector<bool> coffee, std::vector<bool> bike, std::vector<bool> app) {
    ProbeMatrix m;
    m.correct["coffee"] = std::move(coffee);
    m.correct["bike"] = std::move(bike);
    m.correct["app"] = std::move(app);
    return m;
}

}  // namespace

// ─── Memory score ────────────────────────────────────────────────────────────

TEST_CASE("memory score normalizes between chance and the agent ceiling") {
    CHECK(memory_score(1.0, 0.25, 1.0) == Approx(1.0).margin(1e-15));
    CHECK(memory_score(0.25, 0.25, 1.0) == Approx(0.0).margin(1e-15));
    CHECK(memory_score(0.625, 0.25, 1.0) == Approx(0.5).margin(1e-15));
    CHECK(memory_score(0.1, 0.25, 1.0) == Approx(-0.2).margin(1e-15));
    CHECK(memory_score(0.9, 1.0 / 6.0, 0.9) == Approx(1.0).margin(1e-15));

    SECTION("matches a long-double evaluation of the same ratio across a grid") {
        for (int o = 0; o <= 10; ++o)
            for (int r = 0; r <= 9; ++r)
                for (int u = 0; u <= 10; ++u) {
                    double overall = o / 10.0, random = r / 10.0, ub = u / 10.0;
                    if (ub == random) continue;
                    long double expect = (static_cast<long double>(overall) - random) /
                                         (static_cast<long double>(ub) - random);
                    CHECK(memory_score(overall, random, ub) ==
                          Approx(double(expect)).margin(1e-12));
                }
    }

    SECTION("undefined when the ceiling equals chance") {
        CHECK_THROWS_AS(memory_score(0.5, 0.25, 0.25), Error);
        try {
            memory_score(0.5, 1.0, 1.0);
            FAIL("expected a validation error");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::validation);
        }
    }
}

TEST_CASE("random baseline is the mean reciprocal option count") {
    Blueprint bp = testutil::mini_blueprint();
    for (int t = 0; t <= 2; ++t)
        CHECK(random_baseline_at(bp, t) == Approx(1.0 / 6.0).margin(1e-15));

    SECTION("capping the option count raises the baseline") {
        bp.config.max_options_per_question = 4;
        CHECK(random_baseline_at(bp, 0) == Approx(0.25).margin(1e-15));
    }

    SECTION("no questions means no chance of guessing right") {
        bp.questions.clear();
        CHECK(random_baseline_at(bp, 0) == 0.0);
    }
}

TEST_CASE("write position finds the latest period that touched a variable") {
    Blueprint bp = testutil::mini_blueprint();
    // bike changes in period 1; coffee and app change in period 2.
    CHECK(write_position(bp, "coffee", 0) == 0);
    CHECK(write_position(bp, "bike", 0) == 0);
    CHECK(write_position(bp, "app", 0) == 0);
    CHECK(write_position(bp, "coffee", 1) == 0);
    CHECK(write_position(bp, "bike", 1) == 1);
    CHECK(write_position(bp, "app", 1) == 0);
    CHECK(write_position(bp, "coffee", 2) == 2);
    CHECK(write_position(bp, "bike", 2) == 1);
    CHECK(write_position(bp, "app", 2) == 2);
    // Beyond the last period the final write stands; unknown variables never wrote.
    CHECK(write_position(bp, "coffee", 7) == 2);
    CHECK(write_position(bp, "piano", 2) == 0);
}

// ─── Probe matrix ────────────────────────────────────────────────────────────

TEST_CASE("probe matrix grades each probe against the true state") {
    Blueprint bp = testutil::mini_blueprint();
    EpisodeTrace tr = trace_shell(bp);
    // Position 0 probed perfectly; position 1 misses the bike change; position 2
    // reports stale coffee and omits app entirely.
    tr.periods.push_back(entry_at(0, {{"coffee", "black"}, {"bike", "road"}, {"app", "ios"}}));
    tr.periods.push_back(entry_at(1, {{"coffee", "black"}, {"bike", "road"}, {"app", "ios"}}));
    tr.periods.push_back(entry_at(2, {{"coffee", "black"}, {"bike", "mtb"}}));

    ProbeMatrix m = ProbeMatrix::from(bp, tr);
    CHECK(m.at("coffee", 0));
    CHECK(m.at("bike", 0));
    CHECK(m.at("app", 0));
    CHECK(m.at("coffee", 1));
    CHECK_FALSE(m.at("bike", 1));
    CHECK(m.at("app", 1));
    CHECK_FALSE(m.at("coffee", 2));
    CHECK(m.at("bike", 2));
    CHECK_FALSE(m.at("app", 2));

    SECTION("unknown variables and out-of-range positions read as wrong") {
        CHECK_FALSE(m.at("piano", 0));
        CHECK_FALSE(m.at("coffee", -1));
        CHECK_FALSE(m.at("coffee", 3));
    }
}

// ─── Failure taxonomy ────────────────────────────────────────────────────────

TEST_CASE("failure labels attribute misses to write, read, or utilization") {
    Blueprint bp = testutil::mini_blueprint();
    const EvaluationQuestion& q1 = bp.questions[0];  // requires coffee, bike
    const EvaluationQuestion& q2 = bp.questions[1];  // requires bike, app

    const EvaluationRecord hit = record(1, 0, 0, 0);
    const EvaluationRecord miss = record(1, 0, 1, 0);
    const EvaluationRecord abstain = record(1, 0, -1, 0);

    // Flags are indexed by position: {t0, t1, t2}. Write positions at t=2 are
    // coffee->2, bike->1, app->2; at t=1 coffee->0, bike->1.
    struct Row {
        const EvaluationQuestion* q;
        int t;
        const EvaluationRecord* rec;
        std::vector<bool> coffee, bike, app;
        FailureLabel want;
    };
    const std::vector<Row> rows = {
        // Correct answers are never failures, whatever the probes say.
        {&q1, 2, &hit, {0, 0, 0}, {0, 0, 0}, {0, 0, 0}, FailureLabel::none},
        {&q1, 2, &hit, {1, 1, 1}, {1, 1, 1}, {1, 1, 1}, FailureLabel::none},
        // Memory holds the right values yet the answer missed.
        {&q1, 2, &miss, {1, 1, 1}, {1, 1, 1}, {1, 1, 1}, FailureLabel::utilization},
        // Coffee was written at t=2, so a wrong coffee now is a write failure.
        {&q1, 2, &miss, {1, 1, 0}, {1, 1, 1}, {1, 1, 1}, FailureLabel::write},
        // Bike wrong now and wrong at its write position 1: never captured.
        {&q1, 2, &miss, {1, 1, 1}, {1, 0, 0}, {1, 1, 1}, FailureLabel::write},
        // Bike wrong now but correct at write time: captured, then lost.
        {&q1, 2, &miss, {1, 1, 1}, {1, 1, 0}, {1, 1, 1}, FailureLabel::read},
        // Mixed case: coffee write failure outranks the bike read failure.
        {&q1, 2, &miss, {1, 1, 0}, {1, 1, 0}, {1, 1, 1}, FailureLabel::write},
        // Abstention scores as a miss; perfect probes make it utilization.
        {&q1, 2, &abstain, {1, 1, 1}, {1, 1, 1}, {1, 1, 1}, FailureLabel::utilization},
        // At t=1 coffee writes at position 0: correct then, wrong now -> read.
        {&q1, 1, &miss, {1, 0, 0}, {1, 1, 1}, {1, 1, 1}, FailureLabel::read},
        // Wrong from the very first write.
        {&q1, 1, &miss, {0, 0, 0}, {1, 1, 1}, {1, 1, 1}, FailureLabel::write},
        // At t=0 the write position is 0 itself, so wrong-now is wrong-at-write.
        {&q1, 0, &miss, {0, 1, 1}, {1, 1, 1}, {1, 1, 1}, FailureLabel::write},
        {&q1, 0, &miss, {1, 1, 1}, {0, 1, 1}, {1, 1, 1}, FailureLabel::write},
        {&q1, 0, &miss, {1, 1, 1}, {1, 1, 1}, {0, 0, 0}, FailureLabel::utilization},
        // Second question depends on bike and app instead.
        {&q2, 2, &miss, {1, 1, 1}, {1, 1, 1}, {1, 1, 0}, FailureLabel::write},
        {&q2, 2, &miss, {0, 0, 0}, {1, 1, 0}, {1, 1, 1}, FailureLabel::read},
        {&q2, 2, &miss, {1, 1, 1}, {1, 0, 0}, {1, 1, 1}, FailureLabel::write},
    };

    for (std::size_t i = 0; i < rows.size(); ++i) {
        const Row& row = rows[i];
        INFO("row " << i << " (question " << row.q->id << ", t=" << row.t << ")");
        ProbeMatrix m = probes_of(row.coffee, row.bike, row.app);
        CHECK(classify_failure(*row.rec, *row.q, bp, m, row.t) == row.want);
    }
}

// ─── Position scoring ────────────────────────────────────────────────────────

namespace {

/// Three-position trace with hand-planned outcomes:
///   t=0 both right; t=1 one utilization miss; t=2 one write and one read miss.
EpisodeTrace planned_trace(const Blueprint& bp) {
    EpisodeTrace tr = trace_shell(bp);

    PeriodTraceEntry e0 = entry_at(0, {{"coffee", "black"}, {"bike", "road"}, {"app", "ios"}});
    e0.evaluations = {record(1, 2, 2, 2), record(2, 3, 3, 3)};
    tr.periods.push_back(e0);

    PeriodTraceEntry e1 = entry_at(1, {{"coffee", "black"}, {"bike", "mtb"}, {"app", "ios"}});
    e1.evaluations = {record(1, 2, 0, 2), record(2, 3, 3, 3)};
    tr.periods.push_back(e1);

    // Probe at t=2 misreports coffee (write slot) and bike (written correctly
    // at t=1 above, so a read slip), while app stays right.
    PeriodTraceEntry e2 = entry_at(2, {{"coffee", "black"}, {"bike", "road"}, {"app", "android"}});
    e2.evaluations = {record(1, 4, 1, 4), record(2, 3, 0, 3)};
    tr.periods.push_back(e2);
    return tr;
}

}  // namespace

TEST_CASE("position scores match hand-computed fractions") {
    Blueprint bp = testutil::mini_blueprint();
    EpisodeTrace tr = planned_trace(bp);
    ProbeMatrix probes = ProbeMatrix::from(bp, tr);

    PositionScores s0 = score_position(bp, tr, probes, 0);
    CHECK(s0.position == 0);
    CHECK(s0.overall == Approx(1.0).margin(1e-15));
    CHECK(s0.upper_bound == Approx(1.0).margin(1e-15));
    CHECK(s0.random_baseline == Approx(1.0 / 6.0).margin(1e-15));
    CHECK(s0.memory == Approx(1.0).margin(1e-15));
    CHECK(s0.write_rate == 0.0);
    CHECK(s0.read_rate == 0.0);
    CHECK(s0.utilization_rate == 0.0);

    PositionScores s1 = score_position(bp, tr, probes, 1);
    CHECK(s1.overall == Approx(0.5).margin(1e-15));
    CHECK(s1.upper_bound == Approx(1.0).margin(1e-15));
    CHECK(s1.memory == Approx(0.4).margin(1e-12));
    CHECK(s1.write_rate == 0.0);
    CHECK(s1.read_rate == 0.0);
    CHECK(s1.utilization_rate == Approx(0.5).margin(1e-15));

    PositionScores s2 = score_position(bp, tr, probes, 2);
    CHECK(s2.overall == 0.0);
    CHECK(s2.upper_bound == Approx(1.0).margin(1e-15));
    CHECK(s2.memory == Approx(-0.2).margin(1e-12));
    CHECK(s2.write_rate == Approx(0.5).margin(1e-15));
    CHECK(s2.read_rate == Approx(0.5).margin(1e-15));
    CHECK(s2.utilization_rate == 0.0);

    SECTION("unknown question ids are rejected") {
        tr.periods[0].evaluations[0].question_id = 77;
        CHECK_THROWS_AS(score_position(bp, tr, probes, 0), Error);
    }

    SECTION("a position without evaluations is rejected") {
        tr.periods[1].evaluations.clear();
        CHECK_THROWS_AS(score_position(bp, tr, probes, 1), Error);
    }
}

TEST_CASE("a ceiling stuck at chance yields an undefined memory score") {
    Blueprint bp = testutil::mini_blueprint();
    EpisodeTrace tr = trace_shell(bp);
    PeriodTraceEntry e0 = entry_at(0, {{"coffee", "black"}, {"bike", "road"}, {"app", "ios"}});
    // Six answers to the same question, exactly one truth-injected hit: the
    // upper bound lands on 1/6 and cancels the random baseline.
    e0.evaluations = {record(1, 0, 0, 0), record(1, 0, 0, 1), record(1, 0, 0, 1),
                      record(1, 0, 1, 1), record(1, 0, 1, 1), record(1, 0, 1, 1)};
    tr.periods.push_back(e0);

    ProbeMatrix probes = ProbeMatrix::from(bp, tr);
    PositionScores s = score_position(bp, tr, probes, 0);
    CHECK(s.overall == Approx(0.5).margin(1e-15));
    CHECK(s.upper_bound == Approx(1.0 / 6.0).margin(1e-15));
    CHECK(std::isnan(s.memory));
}

// ─── Whole-episode reports ───────────────────────────────────────────────────

TEST_CASE("episode report averages positions with position zero included") {
    Blueprint bp = testutil::mini_blueprint();
    EpisodeTrace tr = planned_trace(bp);
    ReportBundle r = aggregate_report(bp, tr);

    REQUIRE(r.per_position.size() == 3);
    CHECK(r.per_position[0].position == 0);
    CHECK(r.per_position[2].position == 2);

    CHECK(r.aggregate.position == -1);
    CHECK(r.aggregate.overall == Approx((1.0 + 0.5 + 0.0) / 3.0).margin(1e-12));
    CHECK(r.aggregate.random_baseline == Approx(1.0 / 6.0).margin(1e-12));
    CHECK(r.aggregate.upper_bound == Approx(1.0).margin(1e-12));
    CHECK(r.aggregate.memory == Approx((1.0 + 0.4 - 0.2) / 3.0).margin(1e-12));
    CHECK(r.aggregate.write_rate == Approx(0.5 / 3.0).margin(1e-12));
    CHECK(r.aggregate.read_rate == Approx(0.5 / 3.0).margin(1e-12));
    CHECK(r.aggregate.utilization_rate == Approx(0.5 / 3.0).margin(1e-12));

    CHECK(r.metadata.at("blueprint") == bp.ref());
    CHECK(r.metadata.at("agent") == "awi-(1,0,30)");
    CHECK(r.metadata.at("mode") == "onpolicy");
    CHECK(r.metadata.at("positions") == "3");
    CHECK(r.metadata.at("sessions") == "3");
    CHECK(r.metadata.at("exchanges") == "3");

    SECTION("a trace from another blueprint is rejected") {
        tr.blueprint_ref = "someone-else-s1";
        try {
            aggregate_report(bp, tr);
            FAIL("expected a compatibility error");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::compatibility);
        }
    }
}

TEST_CASE("undefined positions drop out of the aggregate memory mean") {
    Blueprint bp = testutil::mini_blueprint();
    EpisodeTrace tr = planned_trace(bp);
    // Rewrite position 1 so its ceiling equals chance (see the NaN test above).
    tr.periods[1].evaluations = {record(1, 0, 0, 0), record(1, 0, 0, 1), record(1, 0, 0, 1),
                                 record(1, 0, 1, 1), record(1, 0, 1, 1), record(1, 0, 1, 1)};

    ReportBundle r = aggregate_report(bp, tr);
    CHECK(std::isnan(r.per_position[1].memory));
    CHECK(r.aggregate.memory == Approx((1.0 - 0.2) / 2.0).margin(1e-12));
    CHECK(r.aggregate.overall == Approx((1.0 + 0.5 + 0.0) / 3.0).margin(1e-12));
}

// ─── Merging ─────────────────────────────────────────────────────────────────

namespace {

ReportBundle flat_report(double overall, double memory, double aggregate_memory) {
    ReportBundle r;
    for (int t = 0; t < 2; ++t) {
        PositionScores s;
        s.position = t;
        s.overall = overall;
        s.random_baseline = 0.25;
        s.upper_bound = 1.0;
        s.memory = memory;
        s.write_rate = 0.1;
        s.read_rate = 0.05;
        s.utilization_rate = 0.05;
        r.per_position.push_back(s);
    }
    r.aggregate = r.per_position[0];
    r.aggregate.position = -1;
    r.aggregate.memory = aggregate_memory;
    r.metadata["agent"] = "rag-(2,2,8)";
    return r;
}

}  // namespace

TEST_CASE("merging reports averages position by position") {
    ReportBundle a = flat_report(0.5, 0.4, 0.4);
    ReportBundle b = flat_report(0.9, 0.8, 0.8);
    ReportBundle m = merge_reports({a, b});

    REQUIRE(m.per_position.size() == 2);
    CHECK(m.per_position[0].position == 0);
    CHECK(m.per_position[1].position == 1);
    CHECK(m.per_position[0].overall == Approx(0.7).margin(1e-12));
    CHECK(m.per_position[0].memory == Approx(0.6).margin(1e-12));
    CHECK(m.per_position[0].random_baseline == Approx(0.25).margin(1e-12));
    CHECK(m.aggregate.position == -1);
    CHECK(m.aggregate.memory == Approx(0.6).margin(1e-12));
    CHECK(m.aggregate.overall == Approx(0.7).margin(1e-12));

    SECTION("per-run metadata does not leak through, only the merge count") {
        CHECK(m.metadata.size() == 1);
        CHECK(m.metadata.at("merged_reports") == "2");
    }

    SECTION("undefined scores are skipped, not poisoned") {
        a.per_position[1].memory = kNaN;
        a.aggregate.memory = kNaN;
        ReportBundle m2 = merge_reports({a, b});
        CHECK(m2.per_position[1].memory == Approx(0.8).margin(1e-12));
        CHECK(m2.aggregate.memory == Approx(0.8).margin(1e-12));

        b.per_position[1].memory = kNaN;
        ReportBundle m3 = merge_reports({a, b});
        CHECK(std::isnan(m3.per_position[1].memory));
    }

    SECTION("mismatched position layouts cannot be merged") {
        b.per_position.pop_back();
        try {
            merge_reports({a, b});
            FAIL("expected a compatibility error");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::compatibility);
        }
    }

    SECTION("an empty merge is rejected") {
        CHECK_THROWS_AS(merge_reports({}), Error);
    }
}

TEST_CASE("memory mean and spread use the sample standard deviation") {
    auto with_aggregate = [](double memory) {
        ReportBundle r = flat_report(0.5, memory, memory);
        return r;
    };

    std::vector<ReportBundle> rs = {with_aggregate(0.2), with_aggregate(0.4),
                                    with_aggregate(0.9)};
    auto [mean, stdev] = memory_mean_stdev(rs);
    CHECK(mean == Approx(0.5).margin(1e-12));
    CHECK(stdev == Approx(std::sqrt(0.13)).margin(1e-12));

    SECTION("undefined aggregates are excluded") {
        rs.push_back(with_aggregate(kNaN));
        auto [mean2, stdev2] = memory_mean_stdev(rs);
        CHECK(mean2 == Approx(0.5).margin(1e-12));
        CHECK(stdev2 == Approx(std::sqrt(0.13)).margin(1e-12));
    }

    SECTION("a single run has no spread") {
        auto [mean1, stdev1] = memory_mean_stdev({with_aggregate(0.4)});
        CHECK(mean1 == Approx(0.4).margin(1e-15));
        CHECK(stdev1 == 0.0);
    }

    SECTION("no defined runs at all") {
        auto [mean0, stdev0] = memory_mean_stdev({});
        CHECK(std::isnan(mean0));
        CHECK(stdev0 == 0.0);
    }
}

// ─── CSV ─────────────────────────────────────────────────────────────────────

TEST_CASE("csv rendering is stable to the sixth decimal") {
    ReportBundle r;
    PositionScores s0;
    s0.position = 0;
    s0.overall = 0.5;
    s0.random_baseline = 1.0 / 6.0;
    s0.upper_bound = 1.0;
    s0.memory = 0.4;
    s0.write_rate = 0.0;
    s0.read_rate = 0.0;
    s0.utilization_rate = 0.5;
    PositionScores s1;
    s1.position = 1;
    s1.overall = 0.25;
    s1.random_baseline = 1.0 / 6.0;
    s1.upper_bound = 1.0 / 6.0;
    s1.memory = kNaN;
    s1.write_rate = 0.0;
    s1.read_rate = 0.0;
    s1.utilization_rate = 0.75;
    r.per_position = {s0, s1};
    r.aggregate.position = -1;
    r.aggregate.overall = 0.375;
    r.aggregate.random_baseline = 1.0 / 6.0;
    r.aggregate.upper_bound = 7.0 / 12.0;
    r.aggregate.memory = 0.4;
    r.aggregate.write_rate = 0.0;
    r.aggregate.read_rate = 0.0;
    r.aggregate.utilization_rate = 0.625;

    const std::string want =
        "position,overall,random,ub,memory,write_rate,read_rate,util_rate\n"
        "0,0.500000,0.166667,1.000000,0.400000,0.000000,0.000000,0.500000\n"
        "1,0.250000,0.166667,0.166667,nan,0.000000,0.000000,0.750000\n"
        "aggregate,0.375000,0.166667,0.583333,0.400000,0.000000,0.000000,0.625000\n";
    CHECK(report_csv(r) == want);
}
