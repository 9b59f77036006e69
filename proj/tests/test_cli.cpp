// The command-line surface, driven in process: every subcommand writes its
// documented files, exit codes map to error classes, and a repeated run is
// byte-identical apart from the timestamped manifest.

#include <catch2/catch_amalgamated.hpp>

#include <atomic>
#include <chrono>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "amemgym/cli.hpp"
#include "amemgym/config.hpp"

using namespace amemgym;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        static std::atomic<int> counter{0};
        auto tick = std::chrono::steady_clock::now().time_since_epoch().count();
        path = fs::temp_directory_path() /
               ("amemgym_cli_" + std::to_string(tick) + "_" + std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    std::string sub(const std::string& name) const { return (path / name).string(); }
};

int run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "--quiet");
    return cli::dispatch(args);
}

json json_of(const std::string& path) { return json::parse(read_file(path)); }

/// Relative path -> bytes for every regular file except the manifest.
std::map<std::string, std::string> snapshot(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (!e.is_regular_file() || e.path().filename() == "manifest.json") continue;
        out[fs::relative(e.path(), root).string()] = read_file(e.path().string());
    }
    return out;
}

}  // namespace

// ─── Happy path ──────────────────────────────────────────────────────────────

TEST_CASE("the pipeline runs end to end through the dispatcher") {
    TempDir dir;
    REQUIRE(run_cli({"gen", "--count", "1", "--seed", "7", "--out", dir.sub("bp")}) == 0);

    const std::string bp_path = dir.sub("bp") + "/blueprint_000.json";
    REQUIRE(fs::exists(bp_path));
    REQUIRE(fs::exists(dir.sub("bp") + "/manifest.json"));

    json bj = json_of(bp_path);
    CHECK(bj.at("amemgym_version") == kSchemaVersion);
    Blueprint bp = blueprint_from_json(bj);
    CHECK(validate_blueprint(bp).empty());

    json manifest = json_of(dir.sub("bp") + "/manifest.json");
    CHECK(manifest.at("command") == "gen");
    CHECK(manifest.at("outputs") == json::array({"blueprint_000.json"}));
    CHECK(manifest.at("created_at").get<std::string>().back() == 'Z');

    REQUIRE(run_cli({"run", bp_path, "--agent", "awi-(1,0,30)", "--seed", "9", "--out",
                     dir.sub("tr")}) == 0);
    const std::string trace_path = dir.sub("tr") + "/trace_blueprint_000_awi-1-0-30.json";
    REQUIRE(fs::exists(trace_path));
    json tj = json_of(trace_path);
    CHECK(tj.at("mode") == "onpolicy");
    CHECK(tj.at("agent_descriptor") == "awi-(1,0,30)");
    CHECK(tj.at("periods").size() == std::size_t(bp.config.n_periods) + 1);

    REQUIRE(run_cli({"eval", "--blueprint", bp_path, trace_path, "--out", dir.sub("rep")}) ==
            0);
    const std::string rep_path =
        dir.sub("rep") + "/report_trace_blueprint_000_awi-1-0-30.json";
    REQUIRE(fs::exists(rep_path));
    REQUIRE(fs::exists(dir.sub("rep") + "/report_trace_blueprint_000_awi-1-0-30.csv"));

    json rj = json_of(rep_path);
    CHECK(rj.at("aggregate").at("memory") == 1.0);  // this agent never forgets here
    CHECK(rj.at("metadata").at("agent") == "awi-(1,0,30)");
    CHECK(rj.at("per_position").size() == std::size_t(bp.config.n_periods) + 1);

    std::string csv = read_file(dir.sub("rep") + "/report_trace_blueprint_000_awi-1-0-30.csv");
    CHECK(csv.rfind("position,overall,random,ub,memory,write_rate,read_rate,util_rate\n", 0) ==
          0);

    SECTION("diagnose tallies the taxonomy over the same trace") {
        REQUIRE(run_cli({"diagnose", "--blueprint", bp_path, trace_path, "--out",
                         dir.sub("diag")}) == 0);
        json dj = json_of(dir.sub("diag") + "/diagnose_trace_blueprint_000_awi-1-0-30.json");
        const auto& totals = dj.at("totals");
        int sum = totals.at("none").get<int>() + totals.at("write").get<int>() +
                  totals.at("read").get<int>() + totals.at("utilization").get<int>();
        CHECK(sum == (bp.config.n_periods + 1) * bp.config.num_questions);
        CHECK(totals.at("none") == sum);  // a perfect run has nothing to attribute
        CHECK(dj.at("positions").size() == std::size_t(bp.config.n_periods) + 1);
    }

    SECTION("report merges evaluated runs") {
        REQUIRE(run_cli({"report", rep_path, rep_path, "--name", "combo", "--out",
                         dir.sub("merged")}) == 0);
        json mj = json_of(dir.sub("merged") + "/report_combo.json");
        CHECK(mj.at("metadata").at("merged_reports") == "2");
        CHECK(mj.at("metadata").at("memory_mean") == "1.000000");
        CHECK(mj.at("metadata").at("memory_stdev") == "0.000000");
        CHECK(fs::exists(dir.sub("merged") + "/report_combo.csv"));
    }

    SECTION("evolve writes a cycle log") {
        REQUIRE(run_cli({"evolve", bp_path, "--cycles", "1", "--feedback", "none", "--seed",
                         "3", "--out", dir.sub("evo")}) == 0);
        json ej = json_of(dir.sub("evo") + "/evolution.json");
        CHECK(ej.at("feedback_mode") == "none");
        CHECK(ej.at("agent") == "awi-(1,0,30)");
        CHECK_FALSE(ej.at("initial_prompt").get<std::string>().empty());
        REQUIRE(ej.at("cycles").size() == 1);
        CHECK(ej.at("cycles")[0].at("prompt_version") == 1);
        CHECK(ej.at("cycles")[0].at("fact_recall") == 1.0);
    }
}

TEST_CASE("a persona pool file feeds generation") {
    TempDir dir;
    const std::string pool = dir.sub("pool.jsonl");
    atomic_write_file(pool,
                      R"({"id": "alice", "name": "Alice", "occupation": "florist"})"
                      "\n");
    REQUIRE(run_cli({"gen", "--count", "1", "--seed", "5", "--personas", pool, "--out",
                     dir.sub("bp")}) == 0);
    json bj = json_of(dir.sub("bp") + "/blueprint_000.json");
    CHECK(bj.at("persona").at("source_id") == "alice");
}

// ─── Exit codes ──────────────────────────────────────────────────────────────

TEST_CASE("operator mistakes exit with their documented codes") {
    TempDir dir;
    REQUIRE(run_cli({"gen", "--count", "2", "--seed", "11", "--out", dir.sub("bp")}) == 0);
    const std::string bp0 = dir.sub("bp") + "/blueprint_000.json";
    const std::string bp1 = dir.sub("bp") + "/blueprint_001.json";
    REQUIRE(run_cli({"run", bp0, "--agent", "awi-(1,0,30)", "--out", dir.sub("tr")}) == 0);
    const std::string trace = dir.sub("tr") + "/trace_blueprint_000_awi-1-0-30.json";

    SECTION("bad invocations are usage errors") {
        CHECK(cli::dispatch({"frobnicate"}) == 2);
        CHECK(cli::dispatch({}) == 2);
        CHECK(cli::dispatch({"gen", "--bogus-flag"}) == 2);
        CHECK(cli::dispatch({"report"}) == 2);  // missing required positional
        CHECK(run_cli({"run", bp0, "--agent", "gpt4"}) == 2);
        CHECK(run_cli({"run", bp0, "--mode", "sideways"}) == 2);
        CHECK(run_cli({"run", bp0, "--mode", "offpolicy"}) == 2);  // no --replay
        CHECK(run_cli({"evolve", bp0, "--cycles", "1", "--feedback", "sometimes"}) == 2);
    }

    SECTION("help is not an error") {
        CHECK(cli::dispatch({"--help"}) == 0);
        CHECK(cli::dispatch({"gen", "--help"}) == 0);
    }

    SECTION("missing files are io errors") {
        CHECK(run_cli({"run", dir.sub("nope.json"), "--agent", "awi-(1,0,30)"}) == 3);
        CHECK(run_cli({"eval", "--blueprint", dir.sub("nope.json"), trace}) == 3);
    }

    SECTION("mismatched blueprint and trace is a compatibility error") {
        CHECK(run_cli({"eval", "--blueprint", bp1, trace, "--out", dir.sub("rep")}) == 5);
        CHECK(run_cli({"diagnose", "--blueprint", bp1, trace, "--out", dir.sub("diag")}) == 5);
    }

    SECTION("corrupt json is a parse error") {
        const std::string junk = dir.sub("junk.json");
        atomic_write_file(junk, "{not json");
        CHECK(run_cli({"run", junk, "--agent", "awi-(1,0,30)"}) == 4);
    }
}

// ─── Config files ────────────────────────────────────────────────────────────

TEST_CASE("ini settings parse section by section") {
    Settings s = settings_from_ini(
        "# comment\n"
        "; also a comment\n"
        "[gen]\n"
        "n_periods = 3\n"
        "states_per_question = 2\n"
        "turns_per_exposure = 2\n"
        "num_questions = 4\n"
        "num_choices_per_state = 3\n"
        "max_changes_per_state = 2\n"
        "num_changes_per_period = 1\n"
        "max_options_per_question = 5\n"
        "language = German\n"
        "\n"
        "[backend]\n"
        "mode = scripted\n"
        "chat_model = test-chat\n"
        "embed_model = test-embed\n"
        "timeout_s = 12.5\n"
        "max_attempts = 2\n");
    CHECK(s.gen.n_periods == 3);
    CHECK(s.gen.states_per_question == 2);
    CHECK(s.gen.turns_per_exposure == 2);
    CHECK(s.gen.num_questions == 4);
    CHECK(s.gen.num_choices_per_state == 3);
    CHECK(s.gen.max_changes_per_state == 2);
    CHECK(s.gen.num_changes_per_period == 1);
    CHECK(s.gen.max_options_per_question == 5);
    CHECK(s.gen.language == "German");
    CHECK(s.backend.mode == "scripted");
    CHECK(s.backend.chat_model == "test-chat");
    CHECK(s.backend.embed_model == "test-embed");
    CHECK(s.backend.timeout_s == 12.5);
    CHECK(s.backend.max_attempts == 2);

    SECTION("malformed lines are rejected with positions") {
        CHECK_THROWS_AS(settings_from_ini("[gen\nn_periods = 3\n"), Error);
        CHECK_THROWS_AS(settings_from_ini("[gen]\njust some words\n"), Error);
        CHECK_THROWS_AS(settings_from_ini("[gen]\nn_periods = many\n"), Error);
        CHECK_THROWS_AS(settings_from_ini("[backend]\nmode = martian\n"), Error);
    }

    SECTION("presets resolve without touching the filesystem") {
        Settings base = resolve_settings("base");
        CHECK(base.gen.n_periods == 10);
        CHECK(base.gen.states_per_question == 2);
        CHECK(base.gen.turns_per_exposure == 4);
        Settings extra = resolve_settings("extra");
        CHECK(extra.gen.n_periods == 20);
        CHECK(extra.gen.states_per_question == 3);
        CHECK(extra.gen.turns_per_exposure == 10);
    }
}

TEST_CASE("a config file reshapes generation end to end") {
    TempDir dir;
    const std::string ini = dir.sub("small.ini");
    atomic_write_file(ini,
                      "[gen]\n"
                      "n_periods = 3\n"
                      "num_questions = 4\n"
                      "turns_per_exposure = 2\n");

    REQUIRE(run_cli({"gen", "--config", ini, "--count", "1", "--seed", "3", "--out",
                     dir.sub("bp")}) == 0);
    const std::string bp_path = dir.sub("bp") + "/blueprint_000.json";
    Blueprint bp = blueprint_from_json(json_of(bp_path));
    CHECK(bp.periods.size() == 3);
    CHECK(bp.questions.size() == 4);
    CHECK(bp.config.turns_per_exposure == 2);

    REQUIRE(run_cli({"run", bp_path, "--config", ini, "--agent", "awi-(1,0,30)", "--out",
                     dir.sub("tr")}) == 0);
    json tj = json_of(dir.sub("tr") + "/trace_blueprint_000_awi-1-0-30.json");
    REQUIRE(tj.at("periods").size() == 4);
    // Two rounds per session, straight from the blueprint's own config.
    CHECK(tj.at("periods")[0].at("sessions")[0].size() == 4);

    SECTION("a bad backend mode in the file surfaces as a usage error") {
        const std::string bad = dir.sub("bad.ini");
        atomic_write_file(bad, "[backend]\nmode = martian\n");
        CHECK(run_cli({"gen", "--config", bad, "--out", dir.sub("x")}) == 2);
    }
}

// ─── Reproducibility ─────────────────────────────────────────────────────────

TEST_CASE("two identical invocations write byte-identical files") {
    TempDir a, b;
    auto pipeline = [](const TempDir& d) {
        REQUIRE(run_cli({"gen", "--count", "1", "--seed", "7", "--out", d.sub("bp")}) == 0);
        const std::string bp = d.sub("bp") + "/blueprint_000.json";
        REQUIRE(run_cli({"run", bp, "--agent", "awe-(2,4,30)", "--seed", "7", "--out",
                         d.sub("tr")}) == 0);
        const std::string tr = d.sub("tr") + "/trace_blueprint_000_awe-2-4-30.json";
        REQUIRE(run_cli({"eval", "--blueprint", bp, tr, "--out", d.sub("rep")}) == 0);
        REQUIRE(run_cli({"report", d.sub("rep") + "/report_trace_blueprint_000_awe-2-4-30.json",
                         "--out", d.sub("merged")}) == 0);
    };
    pipeline(a);
    pipeline(b);

    auto sa = snapshot(a.path), sb = snapshot(b.path);
    REQUIRE(sa.size() == sb.size());
    CHECK(sa.size() >= 6);  // blueprint, trace, report json+csv, merged json+csv
    for (const auto& [rel, bytes] : sa) {
        INFO(rel);
        REQUIRE(sb.count(rel) == 1);
        CHECK(bytes == sb.at(rel));
    }
}
