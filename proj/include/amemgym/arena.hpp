#pragma once

// Episode execution: a simulated user converses with the evaluated assistant
// session by session, and an evaluation battery runs at every position along
// the evolution trajectory.

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "amemgym/backend.hpp"
#include "amemgym/log.hpp"
#include "amemgym/memory.hpp"
#include "amemgym/model.hpp"
#include "amemgym/prompts.hpp"
#include "amemgym/util.hpp"

namespace amemgym {

// ─── User simulation ─────────────────────────────────────────────────────────

class UserSimulator {
public:
    UserSimulator(std::shared_ptr<ChatBackend> chat, const Blueprint& bp,
                  RetryPolicy retry = {})
        : chat_(std::move(chat)), bp_(bp), retry_(retry) {}

    /// Session openers are spoken verbatim from the blueprint.
    const std::string& opener(const ExposureUtterance& exposure) const { return exposure.query; }

    /// In-session continuation. Instructed never to end the conversation and
    /// never to reveal schema values beyond the opener.
    std::string follow_up(const ExposureUtterance& exposure, int position,
                          const std::vector<Message>& transcript) {
        std::string context;
        std::size_t from = transcript.size() > 6 ? transcript.size() - 6 : 0;
        for (std::size_t i = from; i < transcript.size(); ++i)
            context += (transcript[i].role == Role::user ? "User: " : "Assistant: ") +
                       transcript[i].content + "\n";

        json sj = json::object();
        for (const auto& v : bp_.schema.variables) sj[v.name] = v.choices;

        ChatRequest req = make_request(
            "c4_followup",
            {{"start_date", bp_.start_date},
             {"user_profile_formatted_str", format_persona(bp_.persona)},
             {"current_date", add_months(bp_.start_date, position)},
             {"query", exposure.query},
             {"context", trim(context)},
             {"state_schema_json", sj.dump(2)}});
        std::string reply = trim(complete_with_retry(*chat_, req, retry_));
        warn_on_schema_leak(reply);
        return reply;
    }

private:
    static std::string format_persona(const PersonaRecord& p) {
        return "Name: " + p.name + "\n" + p.profile;
    }

    /// Follow-ups must not reveal tracked values; the opener is the only
    /// sanctioned exposure channel. Violations are reported, not fixed.
    void warn_on_schema_leak(const std::string& text) const {
        for (const auto& v : bp_.schema.variables)
            for (const auto& c : v.choices)
                if (contains(text, c))
                    log_warn("follow-up leaked schema value '" + c + "'");
    }

    std::shared_ptr<ChatBackend> chat_;
    const Blueprint& bp_;
    RetryPolicy retry_;
};

// ─── Sessions and batteries ──────────────────────────────────────────────────

/// One conversation session: the exposure opener followed by simulated
/// follow-ups, `rounds` user/assistant exchanges in total.
inline std::vector<Message> run_session(AssistantHandle& agent, UserSimulator& sim,
                                        const ExposureUtterance& exposure, int rounds,
                                        int position) {
    std::vector<Message> transcript;
    for (int r = 0; r < rounds; ++r) {
        std::string user_msg =
            r == 0 ? sim.opener(exposure) : sim.follow_up(exposure, position, transcript);
        std::string reply = agent.respond(user_msg);
        transcript.push_back({Role::user, user_msg});
        transcript.push_back({Role::assistant, reply});
    }
    return transcript;
}

/// Read-only evaluation battery at one position: every question, then a full
/// state probe, then the truth-injected upper-bound pass.
inline PeriodTraceEntry run_battery(AssistantHandle& agent, const Blueprint& bp, int position) {
    PeriodTraceEntry entry;
    entry.position = position;
    const StateAssignment sigma = state_at(bp, position);

    for (const auto& q : bp.questions) {
        EvaluationRecord rec;
        rec.question_id = q.id;
        rec.options = options_for(bp, q, position);
        std::vector<std::string> texts;
        for (const auto& key : rec.options) texts.push_back(q.variants.at(key));
        const std::string truth_key = ground_truth_variant(bp, q, sigma);
        for (std::size_t i = 0; i < rec.options.size(); ++i)
            if (rec.options[i] == truth_key) rec.truth = int(i);

        EvalAnswer ans = agent.evaluate(q.text, texts);
        rec.chosen = ans.index;
        rec.retrieved = ans.retrieved;
        entry.evaluations.push_back(std::move(rec));
    }

    auto probed = agent.probe(bp.schema);
    for (const auto& v : bp.schema.variables)
        entry.probe[v.name] = probed.count(v.name) ? probed[v.name] : "";

    for (auto& rec : entry.evaluations) {
        const EvaluationQuestion* q = nullptr;
        for (const auto& cand : bp.questions)
            if (cand.id == rec.question_id) q = &cand;
        std::vector<std::string> texts;
        for (const auto& key : rec.options) texts.push_back(q->variants.at(key));
        StateAssignment relevant;
        for (const auto& name : q->required) relevant[name] = sigma.at(name);
        rec.ub_chosen = agent.evaluate_with_truth(q->text, texts, relevant).index;
    }
    return entry;
}

inline const std::vector<ExposureUtterance>& exposures_at(const Blueprint& bp, int position) {
    if (position == 0) return bp.initial_queries;
    return bp.periods.at(std::size_t(position - 1)).update_queries;
}

// ─── Episodes ────────────────────────────────────────────────────────────────

/// Live the whole trajectory: converse through each position's sessions, then
/// evaluate. Position 0 runs right after the initial exposure sessions.
inline EpisodeTrace run_episode(AssistantHandle& agent, UserSimulator& sim, const Blueprint& bp,
                                std::uint64_t seed) {
    EpisodeTrace trace;
    trace.blueprint_ref = bp.ref();
    trace.agent_descriptor = agent.descriptor();
    trace.mode = "onpolicy";
    trace.seed = seed;

    for (int t = 0; t <= bp.config.n_periods; ++t) {
        PeriodTraceEntry entry;
        std::vector<std::vector<Message>> sessions;
        for (const auto& exposure : exposures_at(bp, t))
            sessions.push_back(
                run_session(agent, sim, exposure, bp.config.turns_per_exposure, t));
        entry = run_battery(agent, bp, t);
        entry.sessions = std::move(sessions);
        trace.periods.push_back(std::move(entry));
    }
    return trace;
}

/// Replay a recorded trace's conversations into a fresh agent, re-running the
/// evaluation battery at each position. The agent never speaks; it ingests.
inline EpisodeTrace replay_episode(AssistantHandle& agent, const Blueprint& bp,
                                   const EpisodeTrace& source, std::uint64_t seed) {
    if (source.blueprint_ref != bp.ref())
        throw Error(ErrorKind::compatibility,
                    "replay trace was recorded against blueprint '" + source.blueprint_ref +
                        "', not '" + bp.ref() + "'");
    if (int(source.periods.size()) != bp.config.n_periods + 1)
        throw Error(ErrorKind::compatibility,
                    "replay trace has " + std::to_string(source.periods.size()) +
                        " positions, blueprint expects " +
                        std::to_string(bp.config.n_periods + 1));

    EpisodeTrace trace;
    trace.blueprint_ref = bp.ref();
    trace.agent_descriptor = agent.descriptor();
    trace.mode = "offpolicy";
    trace.replay_ref = source.agent_descriptor;
    trace.seed = seed;

    for (int t = 0; t <= bp.config.n_periods; ++t) {
        const auto& src = source.periods.at(std::size_t(t));
        for (const auto& session : src.sessions) agent.ingest_replay(session);
        PeriodTraceEntry entry = run_battery(agent, bp, t);
        entry.sessions = src.sessions;
        trace.periods.push_back(std::move(entry));
    }
    return trace;
}

}  // namespace amemgym
