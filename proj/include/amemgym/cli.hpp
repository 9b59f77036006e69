#pragma once

// Command-line surface: gen, run, eval, diagnose, evolve, report. Kept in a
// header with a `dispatch(args)` entry point so tests can drive the CLI
// in-process and assert on files and exit codes.

#include <atomic>
#include <cstdint>
#include <ctime>
#include <exception>
#include <filesystem>
#include <functional>
#include <iostream>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "amemgym/arena.hpp"
#include "amemgym/backend.hpp"
#include "amemgym/config.hpp"
#include "amemgym/evolve.hpp"
#include "amemgym/genesis.hpp"
#include "amemgym/live_backend.hpp"
#include "amemgym/log.hpp"
#include "amemgym/memory.hpp"
#include "amemgym/metrics.hpp"
#include "amemgym/model.hpp"
#include "amemgym/scripted.hpp"
#include "amemgym/util.hpp"

namespace amemgym::cli {

namespace fs = std::filesystem;

// ─── Shared plumbing ─────────────────────────────────────────────────────────

struct BackendBundle {
    std::shared_ptr<ChatBackend> chat;
    std::shared_ptr<EmbeddingBackend> embed;
};

inline BackendBundle make_backends(const BackendSettings& bs, std::uint64_t seed) {
    if (bs.mode == "live") {
        LiveEndpoint ep = LiveEndpoint::from_env();
        ep.timeout_s = bs.timeout_s;
        return {std::make_shared<LiveChatBackend>(ep, bs.chat_model),
                std::make_shared<LiveEmbeddingBackend>(ep, bs.embed_model)};
    }
    return {scripted::make_chat(seed), scripted::make_embed(seed)};
}

inline RetryPolicy retry_from(const BackendSettings& bs) {
    RetryPolicy p;
    p.max_attempts = bs.max_attempts;
    return p;
}

inline std::string stem_of(const std::string& path) { return fs::path(path).stem().string(); }

/// "awe-(2,4,30)" -> "awe-2-4-30" for use in file names.
inline std::string sanitize_descriptor(const std::string& d) {
    std::string out;
    for (char c : d) {
        if (c == '(' || c == ')') continue;
        out += c == ',' ? '-' : c;
    }
    return out;
}

inline void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(ErrorKind::io, "cannot create directory " + dir + ": " + ec.message());
}

inline std::string join_path(const std::string& dir, const std::string& name) {
    return (fs::path(dir) / name).string();
}

inline void write_json_file(const std::string& path, const json& j) {
    atomic_write_file(path, j.dump(2) + "\n");
}

inline json read_json_file(const std::string& path) {
    json j = json::parse(read_file(path), nullptr, false);
    if (j.is_discarded()) throw Error(ErrorKind::parse, path + ": invalid JSON");
    return j;
}

/// Run metadata for operators. The only output that carries a timestamp, so
/// byte-level reproducibility checks compare everything except this file.
inline void write_manifest(const std::string& dir, const std::string& command,
                           const std::vector<std::string>& outputs) {
    char stamp[32] = {0};
    std::time_t now = std::time(nullptr);
    std::tm tm_utc{};
    gmtime_r(&now, &tm_utc);
    std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    json m = {{"amemgym_version", kSchemaVersion},
              {"command", command},
              {"outputs", outputs},
              {"created_at", stamp}};
    atomic_write_file(join_path(dir, "manifest.json"), m.dump(2) + "\n");
}

inline void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
    jobs = std::max(1, std::min(jobs, int(n == 0 ? 1 : n)));
    if (jobs == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex err_mu;
    std::exception_ptr first_err;
    std::vector<std::thread> workers;
    for (int w = 0; w < jobs; ++w)
        workers.emplace_back([&] {
            while (true) {
                std::size_t i = next.fetch_add(1);
                if (i >= n) break;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> g(err_mu);
                    if (!first_err) first_err = std::current_exception();
                }
            }
        });
    for (auto& t : workers) t.join();
    if (first_err) std::rethrow_exception(first_err);
}

// ─── Command options ─────────────────────────────────────────────────────────

struct GenArgs {
    std::string config = "base";
    std::string personas;
    std::string out = ".";
    std::string start_date = "2025-06-01";
    int count = 1;
    std::uint64_t seed = 7;
    int jobs = 1;
};

struct RunArgs {
    std::vector<std::string> blueprints;
    std::string config = "base";
    std::string agent = "awe-(2,4,30)";
    std::string mode = "onpolicy";
    std::string replay;
    std::string out = ".";
    std::uint64_t seed = 7;
    int jobs = 1;
};

struct EvalArgs {
    std::string blueprint;
    std::vector<std::string> traces;
    std::string out = ".";
};

struct DiagnoseArgs {
    std::string blueprint;
    std::string trace;
    std::string out = ".";
};

struct EvolveArgs {
    std::vector<std::string> blueprints;
    std::string config = "base";
    std::string agent = "awi-(1,0,30)";
    std::string feedback = "complete";
    std::string out = ".";
    int cycles = 5;
    std::uint64_t seed = 1;
};

struct ReportArgs {
    std::vector<std::string> reports;
    std::string out = ".";
    std::string name = "merged";
};

// ─── Commands ────────────────────────────────────────────────────────────────

inline int cmd_gen(const GenArgs& a) {
    Settings settings = resolve_settings(a.config);
    ensure_dir(a.out);
    std::vector<PoolEntry> pool = a.personas.empty()
                                      ? make_builtin_pool(std::size_t(a.count), a.seed)
                                      : load_persona_pool(a.personas);

    std::vector<std::string> outputs(std::size_t(a.count));
    parallel_for(std::size_t(a.count), a.jobs, [&](std::size_t i) {
        const PoolEntry& entry = pool[i % pool.size()];
        std::uint64_t bp_seed = a.seed + i;
        BackendBundle bundle = make_backends(settings.backend, bp_seed);
        GenesisOptions opt;
        opt.config = settings.gen;
        opt.start_date = a.start_date;
        opt.retry = retry_from(settings.backend);
        Blueprint bp = generate_blueprint(bundle.chat, entry, opt, bp_seed);
        char name[32];
        std::snprintf(name, sizeof name, "blueprint_%03zu.json", i);
        write_json_file(join_path(a.out, name), to_json(bp));
        outputs[i] = name;
    });

    write_manifest(a.out, "gen", outputs);
    if (!log_quiet())
        std::cout << "wrote " << outputs.size() << " blueprint(s) to " << a.out << "\n";
    return 0;
}

inline int cmd_run(const RunArgs& a) {
    Settings settings = resolve_settings(a.config);
    ensure_dir(a.out);
    AgentConfig agent_cfg = AgentConfig::parse(a.agent);
    if (a.mode != "onpolicy" && a.mode != "offpolicy")
        throw Error(ErrorKind::usage, "mode must be onpolicy or offpolicy");
    if (a.mode == "offpolicy" && a.replay.empty())
        throw Error(ErrorKind::usage, "offpolicy mode needs --replay <trace.json>");

    EpisodeTrace replay;
    if (!a.replay.empty()) replay = trace_from_json(read_json_file(a.replay));

    std::vector<std::string> outputs(a.blueprints.size());
    parallel_for(a.blueprints.size(), a.jobs, [&](std::size_t i) {
        Blueprint bp = blueprint_from_json(read_json_file(a.blueprints[i]));
        std::uint64_t run_seed = mix64(a.seed, fnv1a64(bp.ref()));
        BackendBundle bundle = make_backends(settings.backend, run_seed);
        auto agent = make_agent(agent_cfg, bundle.chat, bundle.embed);

        EpisodeTrace trace;
        if (a.mode == "onpolicy") {
            UserSimulator sim(bundle.chat, bp, retry_from(settings.backend));
            trace = run_episode(*agent, sim, bp, a.seed);
        } else {
            trace = replay_episode(*agent, bp, replay, a.seed);
        }
        std::string name = "trace_" + stem_of(a.blueprints[i]) + "_" +
                           sanitize_descriptor(agent_cfg.descriptor()) + ".json";
        write_json_file(join_path(a.out, name), to_json(trace));
        outputs[i] = name;
    });

    write_manifest(a.out, "run", outputs);
    if (!log_quiet())
        std::cout << "wrote " << outputs.size() << " trace(s) to " << a.out << "\n";
    return 0;
}

inline int cmd_eval(const EvalArgs& a) {
    ensure_dir(a.out);
    Blueprint bp = blueprint_from_json(read_json_file(a.blueprint));
    std::vector<std::string> outputs;
    for (const auto& trace_path : a.traces) {
        EpisodeTrace trace = trace_from_json(read_json_file(trace_path));
        ReportBundle report = aggregate_report(bp, trace);
        std::string stem = stem_of(trace_path);
        write_json_file(join_path(a.out, "report_" + stem + ".json"), to_json(report));
        atomic_write_file(join_path(a.out, "report_" + stem + ".csv"), report_csv(report));
        outputs.push_back("report_" + stem + ".json");
        outputs.push_back("report_" + stem + ".csv");
        if (!log_quiet())
            std::cout << stem << ": aggregate memory " << fmt_fixed(report.aggregate.memory, 4)
                      << ", overall " << fmt_fixed(report.aggregate.overall, 4) << "\n";
    }
    write_manifest(a.out, "eval", outputs);
    return 0;
}

inline int cmd_diagnose(const DiagnoseArgs& a) {
    ensure_dir(a.out);
    Blueprint bp = blueprint_from_json(read_json_file(a.blueprint));
    EpisodeTrace trace = trace_from_json(read_json_file(a.trace));
    if (trace.blueprint_ref != bp.ref())
        throw Error(ErrorKind::compatibility, "trace belongs to blueprint '" +
                                                  trace.blueprint_ref + "', not '" + bp.ref() +
                                                  "'");
    ProbeMatrix probes = ProbeMatrix::from(bp, trace);

    json positions = json::array();
    std::map<std::string, int> totals{{"none", 0}, {"write", 0}, {"read", 0}, {"utilization", 0}};
    for (std::size_t t = 0; t < trace.periods.size(); ++t) {
        json questions = json::array();
        for (const auto& rec : trace.periods[t].evaluations) {
            const EvaluationQuestion* q = nullptr;
            for (const auto& cand : bp.questions)
                if (cand.id == rec.question_id) q = &cand;
            if (!q) continue;
            FailureLabel label = classify_failure(rec, *q, bp, probes, int(t));
            ++totals[failure_name(label)];
            json entry = {{"question_id", rec.question_id},
                          {"chosen", rec.chosen},
                          {"truth", rec.truth},
                          {"label", failure_name(label)}};
            json writes = json::object();
            for (const auto& var : q->required)
                writes[var] = write_position(bp, var, int(t));
            entry["write_positions"] = writes;
            questions.push_back(std::move(entry));
        }
        json probe_ok = json::object();
        for (const auto& v : bp.schema.variables)
            probe_ok[v.name] = probes.at(v.name, int(t));
        positions.push_back(json{{"position", int(t)},
                                 {"questions", questions},
                                 {"probe_correct", probe_ok}});
    }

    json doc = {{"amemgym_version", kSchemaVersion},
                {"blueprint", bp.ref()},
                {"agent", trace.agent_descriptor},
                {"totals", totals},
                {"positions", positions}};
    std::string name = "diagnose_" + stem_of(a.trace) + ".json";
    write_json_file(join_path(a.out, name), doc);
    write_manifest(a.out, "diagnose", {name});
    if (!log_quiet())
        std::cout << "failures: write " << totals["write"] << ", read " << totals["read"]
                  << ", utilization " << totals["utilization"] << " (correct " << totals["none"]
                  << ")\n";
    return 0;
}

inline int cmd_evolve(const EvolveArgs& a) {
    Settings settings = resolve_settings(a.config);
    ensure_dir(a.out);
    std::vector<Blueprint> bps;
    for (const auto& path : a.blueprints)
        bps.push_back(blueprint_from_json(read_json_file(path)));

    EvolutionOptions opt;
    opt.cycles = a.cycles;
    opt.mode = feedback_mode_from(a.feedback);
    opt.agent = AgentConfig::parse(a.agent);
    opt.episode_seed = a.seed;
    opt.retry = retry_from(settings.backend);

    BackendBundle bundle = make_backends(settings.backend, a.seed);
    EvolutionRun run = run_evolution(bundle.chat, bundle.embed, bps, opt);

    json cycles = json::array();
    for (const auto& c : run.cycles) {
        cycles.push_back(json{{"cycle", c.cycle},
                              {"prompt_version", c.prompt.version},
                              {"prompt_text", c.prompt.full_text},
                              {"changes", c.prompt.changes},
                              {"fact_recall", c.fact_recall},
                              {"report", to_json(c.report)},
                              {"feedback", c.feedback}});
        if (!log_quiet())
            std::cout << "cycle " << c.cycle << ": memory "
                      << fmt_fixed(c.report.aggregate.memory, 4) << ", factual recall "
                      << fmt_fixed(c.fact_recall, 4) << "\n";
    }
    json doc = {{"amemgym_version", kSchemaVersion},
                {"feedback_mode", a.feedback},
                {"agent", opt.agent.descriptor()},
                {"initial_prompt", run.initial.full_text},
                {"cycles", cycles}};
    write_json_file(join_path(a.out, "evolution.json"), doc);
    write_manifest(a.out, "evolve", {"evolution.json"});
    return 0;
}

inline int cmd_report(const ReportArgs& a) {
    ensure_dir(a.out);
    std::vector<ReportBundle> reports;
    for (const auto& path : a.reports)
        reports.push_back(report_from_json(read_json_file(path)));
    ReportBundle merged = merge_reports(reports);
    auto [mean, stdev] = memory_mean_stdev(reports);
    merged.metadata["memory_mean"] = fmt_fixed(mean);
    merged.metadata["memory_stdev"] = fmt_fixed(stdev);

    std::string base = "report_" + a.name;
    write_json_file(join_path(a.out, base + ".json"), to_json(merged));
    atomic_write_file(join_path(a.out, base + ".csv"), report_csv(merged));
    write_manifest(a.out, "report", {base + ".json", base + ".csv"});
    if (!log_quiet())
        std::cout << "merged " << reports.size() << " report(s): memory " << fmt_fixed(mean, 4)
                  << " +/- " << fmt_fixed(stdev, 4) << "\n";
    return 0;
}

// ─── Dispatch ────────────────────────────────────────────────────────────────

inline int dispatch(const std::vector<std::string>& args) {
    CLI::App app{"interactive gym for long-horizon conversational memory"};
    app.require_subcommand(1);
    bool quiet = false;
    app.add_flag("--quiet", quiet, "silence warnings and progress logs");

    GenArgs gen;
    auto* sub_gen = app.add_subcommand("gen", "generate blueprints");
    sub_gen->add_option("--config", gen.config, "preset name (base|extra) or INI path")
        ->capture_default_str();
    sub_gen->add_option("--personas", gen.personas, "persona pool JSONL file");
    sub_gen->add_option("--count", gen.count, "number of blueprints")->capture_default_str();
    sub_gen->add_option("--seed", gen.seed, "base seed")->capture_default_str();
    sub_gen->add_option("--out", gen.out, "output directory")->capture_default_str();
    sub_gen->add_option("--start-date", gen.start_date, "trajectory start date (YYYY-MM-DD)")
        ->capture_default_str();
    sub_gen->add_option("--jobs", gen.jobs, "parallel workers")->capture_default_str();

    RunArgs runa;
    auto* sub_run = app.add_subcommand("run", "run episodes against blueprints");
    sub_run->add_option("blueprints", runa.blueprints, "blueprint JSON files")->required();
    sub_run->add_option("--config", runa.config, "preset name or INI path")
        ->capture_default_str();
    sub_run->add_option("--agent", runa.agent, "agent descriptor, e.g. awe-(2,4,30)")
        ->capture_default_str();
    sub_run->add_option("--mode", runa.mode, "onpolicy|offpolicy")->capture_default_str();
    sub_run->add_option("--replay", runa.replay, "source trace for offpolicy replay");
    sub_run->add_option("--seed", runa.seed, "episode seed")->capture_default_str();
    sub_run->add_option("--out", runa.out, "output directory")->capture_default_str();
    sub_run->add_option("--jobs", runa.jobs, "parallel workers")->capture_default_str();

    EvalArgs eva;
    auto* sub_eval = app.add_subcommand("eval", "score traces into reports");
    sub_eval->add_option("--blueprint", eva.blueprint, "blueprint JSON file")->required();
    sub_eval->add_option("traces", eva.traces, "trace JSON files")->required();
    sub_eval->add_option("--out", eva.out, "output directory")->capture_default_str();

    DiagnoseArgs dia;
    auto* sub_diag = app.add_subcommand("diagnose", "failure taxonomy breakdown for a trace");
    sub_diag->add_option("--blueprint", dia.blueprint, "blueprint JSON file")->required();
    sub_diag->add_option("trace", dia.trace, "trace JSON file")->required();
    sub_diag->add_option("--out", dia.out, "output directory")->capture_default_str();

    EvolveArgs evo;
    auto* sub_evolve = app.add_subcommand("evolve", "evolve the extraction prompt");
    sub_evolve->add_option("blueprints", evo.blueprints, "blueprint JSON files")->required();
    sub_evolve->add_option("--config", evo.config, "preset name or INI path")
        ->capture_default_str();
    sub_evolve->add_option("--agent", evo.agent, "awi agent descriptor")->capture_default_str();
    sub_evolve->add_option("--cycles", evo.cycles, "evolution cycles")->capture_default_str();
    sub_evolve->add_option("--feedback", evo.feedback, "none|question_only|complete")
        ->capture_default_str();
    sub_evolve->add_option("--seed", evo.seed, "episode seed replayed every cycle")
        ->capture_default_str();
    sub_evolve->add_option("--out", evo.out, "output directory")->capture_default_str();

    ReportArgs rep;
    auto* sub_report = app.add_subcommand("report", "merge reports across runs");
    sub_report->add_option("reports", rep.reports, "report JSON files")->required();
    sub_report->add_option("--out", rep.out, "output directory")->capture_default_str();
    sub_report->add_option("--name", rep.name, "merged report name")->capture_default_str();

    std::vector<const char*> argv;
    argv.push_back("amemgym");
    for (const auto& a : args) argv.push_back(a.c_str());

    try {
        app.parse(int(argv.size()), argv.data());
        set_log_quiet(quiet);
        if (sub_gen->parsed()) return cmd_gen(gen);
        if (sub_run->parsed()) return cmd_run(runa);
        if (sub_eval->parsed()) return cmd_eval(eva);
        if (sub_diag->parsed()) return cmd_diagnose(dia);
        if (sub_evolve->parsed()) return cmd_evolve(evo);
        if (sub_report->parsed()) return cmd_report(rep);
        throw Error(ErrorKind::usage, "no subcommand given");
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace amemgym::cli
