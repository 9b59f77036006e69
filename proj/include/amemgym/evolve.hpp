#pragma once

// Self-evolution of the memory extraction policy: the mutable "types of
// information" section of the extraction prompt is rewritten from usage
// feedback, cycle after cycle, while everything around it stays byte-stable.

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "amemgym/arena.hpp"
#include "amemgym/backend.hpp"
#include "amemgym/log.hpp"
#include "amemgym/memory.hpp"
#include "amemgym/metrics.hpp"
#include "amemgym/model.hpp"
#include "amemgym/prompts.hpp"
#include "amemgym/util.hpp"

namespace amemgym {

// ─── Policy prompt ───────────────────────────────────────────────────────────

inline const std::string& policy_section_begin() {
    static const std::string s = "Types of Information to Remember:";
    return s;
}

inline const std::string& policy_section_end() {
    static const std::string s =
        "Here are current memories recorded for the same user (mapping from";
    return s;
}

/// An extraction prompt with one evolvable region between two sentinel lines.
struct PolicyPrompt {
    int version = 0;
    std::string full_text;
    std::vector<std::string> changes;  // model-reported edits at this version

    static PolicyPrompt initial() { return {0, prompt("c4_memory_update").body, {}}; }

    std::size_t section_start() const {
        std::size_t b = full_text.find(policy_section_begin());
        if (b == std::string::npos)
            throw Error(ErrorKind::validation, "policy prompt lost its opening sentinel");
        return b + policy_section_begin().size();
    }

    std::size_t section_stop() const {
        std::size_t e = full_text.find(policy_section_end());
        if (e == std::string::npos || e < section_start())
            throw Error(ErrorKind::validation, "policy prompt lost its closing sentinel");
        return e;
    }

    /// The evolvable region (trimmed).
    std::string mutable_section() const {
        return trim(full_text.substr(section_start(), section_stop() - section_start()));
    }

    /// Identity of every byte outside the evolvable region.
    std::uint64_t exterior_fingerprint() const {
        return mix64(fnv1a64(full_text.substr(0, section_start())),
                     fnv1a64(full_text.substr(section_stop())));
    }

    /// Next version with a spliced-in section. Braces in the new text are
    /// doubled so later template rendering treats them as literals.
    PolicyPrompt with_section(const std::string& new_types,
                              std::vector<std::string> new_changes) const {
        std::string escaped;
        for (char c : trim(new_types)) {
            escaped += c;
            if (c == '{' || c == '}') escaped += c;
        }
        PolicyPrompt next;
        next.version = version + 1;
        next.full_text = full_text.substr(0, section_start()) + "\n" + escaped + "\n\n" +
                         full_text.substr(section_stop());
        next.changes = std::move(new_changes);
        return next;
    }

    PolicyPrompt unchanged_next(std::string note) const {
        PolicyPrompt next = *this;
        next.version = version + 1;
        next.changes = {std::move(note)};
        return next;
    }
};

// ─── Feedback ────────────────────────────────────────────────────────────────

enum class FeedbackMode { none, question_only, complete };

inline std::string feedback_mode_name(FeedbackMode m) {
    switch (m) {
        case FeedbackMode::none: return "none";
        case FeedbackMode::question_only: return "question_only";
        default: return "complete";
    }
}

inline FeedbackMode feedback_mode_from(const std::string& s) {
    if (s == "none") return FeedbackMode::none;
    if (s == "question_only") return FeedbackMode::question_only;
    if (s == "complete") return FeedbackMode::complete;
    throw Error(ErrorKind::usage, "unknown feedback mode '" + s + "'");
}

inline std::string option_letter(int index) {
    return "(" + std::string(1, char('A' + index)) + ")";
}

/// Usage feedback distilled from evaluated traces: the question/answer record
/// with lettered options, and (in complete mode) what the user's values were
/// and which memories the agent saw while answering.
inline json build_feedback(const std::vector<const Blueprint*>& blueprints,
                           const std::vector<const EpisodeTrace*>& traces, FeedbackMode mode) {
    if (mode == FeedbackMode::none) return json::object();
    if (blueprints.size() != traces.size())
        throw Error(ErrorKind::validation, "feedback needs one trace per blueprint");

    json history = json::array();
    json updates = json::object();

    for (std::size_t b = 0; b < blueprints.size(); ++b) {
        const Blueprint& bp = *blueprints[b];
        const EpisodeTrace& trace = *traces[b];

        if (mode == FeedbackMode::complete) {
            for (const auto& [var, val] : bp.initial_state) updates[var] = val;
            for (const auto& p : bp.periods)
                for (const auto& [var, val] : p.updates) updates[var] = val;
        }

        for (const auto& entry : trace.periods) {
            for (const auto& rec : entry.evaluations) {
                const EvaluationQuestion* q = nullptr;
                for (const auto& cand : bp.questions)
                    if (cand.id == rec.question_id) q = &cand;
                if (!q) continue;

                std::string formatted = "Question: " + q->text + ";\n";
                for (std::size_t i = 0; i < rec.options.size(); ++i)
                    formatted +=
                        option_letter(int(i)) + " " + q->variants.at(rec.options[i]) + ";\n";

                json item;
                item["question"] = formatted;
                item["assistant_response"] =
                    rec.chosen < 0 ? "none" : option_letter(rec.chosen);
                item["ground_truth"] = option_letter(rec.truth);
                if (mode == FeedbackMode::complete)
                    item["retrieved_memories"] = rec.retrieved;
                history.push_back(std::move(item));
            }
        }
    }

    json out;
    out["question_answer_history"] = history;
    if (mode == FeedbackMode::complete) out["user_information_updates"] = updates;
    return out;
}

// ─── Evolution step ──────────────────────────────────────────────────────────

/// One generation: ask for an improved section given feedback. A skipped or
/// malformed response still advances the version, with the text unchanged.
inline PolicyPrompt evolve_prompt(ChatBackend& chat, const PolicyPrompt& current,
                                  const json& feedback, FeedbackMode mode,
                                  const RetryPolicy& retry = {}) {
    if (mode == FeedbackMode::none)
        return current.unchanged_next("feedback disabled; prompt carried forward");

    ChatRequest req;
    req.messages.push_back({Role::system, prompt("c6_evolve_system").body});
    req.messages.push_back(
        {Role::user,
         render_template(prompt("c6_evolve_user").body,
                         {{"current_memory_types_section", current.mutable_section()},
                          {"feedback_summary", feedback.dump(2)}})});
    req.tag = "c6_evolve";

    try {
        json j = complete_json(chat, req, retry);
        if (!j.is_object() || !j.contains("new_types") || !j["new_types"].is_string() ||
            trim(j["new_types"].get<std::string>()).empty())
            throw Error(ErrorKind::parse, "evolution reply lacked usable 'new_types'");
        std::vector<std::string> changes;
        if (j.contains("changes") && j["changes"].is_array())
            for (const auto& c : j["changes"])
                if (c.is_string()) changes.push_back(c.get<std::string>());
        return current.with_section(j["new_types"].get<std::string>(), std::move(changes));
    } catch (const Error& e) {
        log_warn(std::string("evolution step failed, keeping prompt text: ") + e.what());
        return current.unchanged_next(std::string("evolution failed: ") + e.what());
    }
}

// ─── Factual recall ──────────────────────────────────────────────────────────

/// Fraction of final state values the agent's memory store still supports,
/// judged claim by claim. Malformed judgements count as unsupported.
inline double factual_recall(ChatBackend& chat, const MemoryAgent& agent, const Blueprint& bp,
                             const RetryPolicy& retry = {}) {
    std::string document;
    if (agent.config().kind == "awi") {
        for (const auto& [k, v] : agent.facts().items()) document += k + ": " + v + "\n";
    } else {
        for (const auto& t : agent.index().texts()) document += t + "\n";
    }
    if (document.empty()) document = "(no memories recorded)";

    const StateAssignment final_state = state_at(bp, bp.config.n_periods);
    std::vector<std::string> claim_keys;
    std::string claims;
    int i = 1;
    for (const auto& v : bp.schema.variables) {
        claims += std::to_string(i) + ". " + v.name + ": " + final_state.at(v.name) + "\n";
        claim_keys.push_back(std::to_string(i));
        ++i;
    }

    ChatRequest req = make_request("c6_fact_check",
                                   {{"document", trim(document)}, {"claims", trim(claims)}});
    req.tag = "c6_fact_check";

    json j;
    try {
        j = complete_json(chat, req, retry);
    } catch (const Error& e) {
        log_warn(std::string("fact check failed entirely: ") + e.what());
        return 0.0;
    }
    int yes = 0;
    for (const auto& key : claim_keys)
        if (j.is_object() && j.contains(key) && j[key].is_string() &&
            lower(j[key].get<std::string>()) == "yes")
            ++yes;
    return claim_keys.empty() ? 0.0 : double(yes) / double(claim_keys.size());
}

// ─── Evolution loop ──────────────────────────────────────────────────────────

struct EvolutionOptions {
    int cycles = 5;
    FeedbackMode mode = FeedbackMode::complete;
    AgentConfig agent{.kind = "awi", .freq = 1, .ns = 0, .topk = 30};
    std::uint64_t episode_seed = 1;
    RetryPolicy retry;
};

struct EvolutionCycle {
    int cycle = 0;          // 1-based
    PolicyPrompt prompt;    // the prompt produced by this cycle (P_k)
    ReportBundle report;    // scores of the prompt evaluated this cycle (P_{k-1})
    json feedback;          // what the evolver saw
    double fact_recall = std::numeric_limits<double>::quiet_NaN();
};

struct EvolutionRun {
    PolicyPrompt initial;  // P_0
    std::vector<EvolutionCycle> cycles;
};

/// K generations of evaluate-then-evolve. Every cycle replays the same episode
/// seed, so the extraction prompt is the only varying factor between cycles.
inline EvolutionRun run_evolution(std::shared_ptr<ChatBackend> chat,
                                  std::shared_ptr<EmbeddingBackend> embed,
                                  const std::vector<Blueprint>& blueprints,
                                  const EvolutionOptions& opt) {
    if (opt.agent.kind != "awi")
        throw Error(ErrorKind::usage,
                    "evolution targets the extraction prompt and needs an awi agent, got '" +
                        opt.agent.kind + "'");
    if (blueprints.empty()) throw Error(ErrorKind::validation, "evolution needs blueprints");
    if (opt.cycles < 1) throw Error(ErrorKind::usage, "evolution needs at least one cycle");

    EvolutionRun run;
    run.initial = PolicyPrompt::initial();
    PolicyPrompt current = run.initial;

    for (int k = 1; k <= opt.cycles; ++k) {
        std::vector<EpisodeTrace> traces;
        std::vector<ReportBundle> reports;
        double fact_sum = 0.0;

        for (const auto& bp : blueprints) {
            auto agent = make_agent(opt.agent, chat, embed);
            agent->set_policy_text(current.full_text);
            UserSimulator sim(chat, bp, opt.retry);
            EpisodeTrace trace = run_episode(*agent, sim, bp, opt.episode_seed);
            reports.push_back(aggregate_report(bp, trace));
            fact_sum += factual_recall(*chat, *agent, bp, opt.retry);
            traces.push_back(std::move(trace));
        }

        std::vector<const Blueprint*> bps;
        std::vector<const EpisodeTrace*> trs;
        for (std::size_t i = 0; i < blueprints.size(); ++i) {
            bps.push_back(&blueprints[i]);
            trs.push_back(&traces[i]);
        }
        json feedback = build_feedback(bps, trs, opt.mode);

        EvolutionCycle cycle;
        cycle.cycle = k;
        cycle.report = reports.size() == 1 ? reports.front() : merge_reports(reports);
        cycle.feedback = feedback;
        cycle.fact_recall = fact_sum / double(blueprints.size());
        current = evolve_prompt(*chat, current, feedback, opt.mode, opt.retry);
        cycle.prompt = current;
        run.cycles.push_back(std::move(cycle));
    }
    return run;
}

}  // namespace amemgym
