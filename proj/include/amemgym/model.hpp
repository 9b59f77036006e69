#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "amemgym/util.hpp"

namespace amemgym {

using json = nlohmann::json;

inline constexpr const char* kSchemaVersion = "1";

// ─── Persona and state schema ────────────────────────────────────────────────

struct PersonaRecord {
    std::string name;
    std::string profile;    // <= 500-word behavioural summary
    std::string source_id;  // pool record this persona came from
};

struct StateVariable {
    std::string name;
    std::vector<std::string> choices;  // >= 2 distinct values
};

/// Canonical user-state schema. Variable order is meaningful: it defines the
/// canonical variant-key order and the default exposure grouping order.
struct StateSchema {
    std::vector<StateVariable> variables;
    std::map<std::string, std::string> alias_map;  // original name -> canonical name

    const StateVariable* find(const std::string& name) const {
        for (const auto& v : variables)
            if (v.name == name) return &v;
        return nullptr;
    }

    bool has(const std::string& name) const { return find(name) != nullptr; }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        out.reserve(variables.size());
        for (const auto& v : variables) out.push_back(v.name);
        return out;
    }
};

/// Full or partial assignment of schema variables to values.
using StateAssignment = std::map<std::string, std::string>;

// ─── Evolution trajectory ────────────────────────────────────────────────────

struct LifeEvent {
    std::vector<std::string> states;  // variables this event accounts for
    std::string narrative;
};

/// One user utterance crafted to reveal specific state values implicitly.
struct ExposureUtterance {
    std::string query;
    StateAssignment exposed;
};

struct PeriodPlan {
    int index = 0;  // 1-based period number
    std::string summary;
    StateAssignment updates;  // variables changed this period, new values
    std::vector<LifeEvent> events;
    std::vector<ExposureUtterance> update_queries;  // one per event
};

// ─── Evaluation questions ────────────────────────────────────────────────────

struct EvaluationQuestion {
    int id = 0;
    std::string text;
    std::vector<std::string> required;         // schema variables the answer depends on
    std::map<std::string, std::string> variants;  // canonical variant key -> answer text
};

// ─── Generation configuration ────────────────────────────────────────────────

struct GenConfig {
    int n_periods = 10;            // N_p
    int states_per_question = 2;   // N_s
    int turns_per_exposure = 4;    // N_i rounds per session
    int num_questions = 10;
    int num_choices_per_state = 3;
    int max_changes_per_state = 3;
    int num_changes_per_period = 0;  // 0 = auto: ceil(M / n_periods) + 1
    int max_options_per_question = 7;
    std::string language = "English";

    static GenConfig base() { return GenConfig{}; }

    static GenConfig extra() {
        GenConfig c;
        c.n_periods = 20;
        c.states_per_question = 3;
        c.turns_per_exposure = 10;
        return c;
    }

    /// Effective per-period change budget once the schema size M is known.
    int resolved_changes_per_period(int schema_size) const {
        if (num_changes_per_period > 0) return num_changes_per_period;
        if (n_periods <= 0) return 1;
        return (schema_size + n_periods - 1) / n_periods + 1;
    }
};

// ─── Blueprint ───────────────────────────────────────────────────────────────

struct Blueprint {
    PersonaRecord persona;
    StateSchema schema;
    StateAssignment initial_state;
    std::vector<PeriodPlan> periods;
    std::vector<ExposureUtterance> initial_queries;
    std::vector<EvaluationQuestion> questions;
    GenConfig config;
    std::string start_date = "2025-06-01";
    std::uint64_t seed = 0;

    /// Stable identity used to pair traces with blueprints.
    std::string ref() const { return persona.source_id + "-s" + std::to_string(seed); }
};

// ─── Conversations and traces ────────────────────────────────────────────────

enum class Role { system, user, assistant };

inline std::string role_name(Role r) {
    switch (r) {
        case Role::system: return "system";
        case Role::user: return "user";
        default: return "assistant";
    }
}

inline Role role_from(const std::string& s) {
    if (s == "system") return Role::system;
    if (s == "user") return Role::user;
    if (s == "assistant") return Role::assistant;
    throw Error(ErrorKind::validation, "unknown role: " + s);
}

struct Message {
    Role role = Role::user;
    std::string content;
};

struct EvaluationRecord {
    int question_id = 0;
    std::vector<std::string> options;  // variant keys in presented order
    int chosen = -1;                   // 0-based presented index, -1 = abstention
    int truth = 0;                     // 0-based index of the ground-truth option
    int ub_chosen = -1;                // choice under truth injection
    std::vector<std::string> retrieved;  // memory snippets visible at answer time
};

struct PeriodTraceEntry {
    int position = 0;  // 0 = right after initial exposure
    std::vector<std::vector<Message>> sessions;
    std::vector<EvaluationRecord> evaluations;
    StateAssignment probe;  // every schema variable -> probed value ("" = unknown)
};

struct EpisodeTrace {
    std::string blueprint_ref;
    std::string agent_descriptor;
    std::string mode = "onpolicy";  // "onpolicy" | "offpolicy"
    std::string replay_ref;         // source trace identity when off-policy
    std::uint64_t seed = 0;
    std::vector<PeriodTraceEntry> periods;

    int total_sessions() const {
        int n = 0;
        for (const auto& p : periods) n += int(p.sessions.size());
        return n;
    }

    int total_exchanges() const {
        int n = 0;
        for (const auto& p : periods)
            for (const auto& s : p.sessions) n += int(s.size()) / 2;
        return n;
    }
};

// ─── Reports ─────────────────────────────────────────────────────────────────

struct PositionScores {
    int position = 0;
    double overall = 0.0;
    double random_baseline = 0.0;
    double upper_bound = 0.0;
    double memory = 0.0;  // NaN when upper bound equals the random baseline
    double write_rate = 0.0;
    double read_rate = 0.0;
    double utilization_rate = 0.0;
};

struct ReportBundle {
    std::vector<PositionScores> per_position;  // one row per evaluation position
    PositionScores aggregate;                  // unweighted mean over positions
    std::map<std::string, std::string> metadata;
};

// ─── State trajectory ────────────────────────────────────────────────────────

/// Left-fold of period updates over the initial state.
/// t = 0 returns the initial state; t = N_p the final one.
inline StateAssignment state_at(const Blueprint& bp, int t) {
    if (t < 0 || t > int(bp.periods.size()))
        throw std::out_of_range("state_at: position " + std::to_string(t) + " outside [0, " +
                                std::to_string(bp.periods.size()) + "]");
    StateAssignment s = bp.initial_state;
    for (int p = 0; p < t; ++p)
        for (const auto& [k, v] : bp.periods[std::size_t(p)].updates) s[k] = v;
    return s;
}

// ─── Variant keys ────────────────────────────────────────────────────────────

/// Canonical key for a (partial) assignment: schema-ordered "name=value"
/// pairs joined with "|". Insertion order of the input never matters.
inline std::string variant_key(const StateSchema& schema, const StateAssignment& assignment) {
    std::string key;
    for (const auto& var : schema.variables) {
        auto it = assignment.find(var.name);
        if (it == assignment.end()) continue;
        if (!key.empty()) key += '|';
        key += var.name;
        key += '=';
        key += it->second;
    }
    return key;
}

/// Key of the variant a question's correct answer belongs to under state s.
inline std::string ground_truth_variant(const Blueprint& bp, const EvaluationQuestion& q,
                                        const StateAssignment& s) {
    StateAssignment restricted;
    for (const auto& name : q.required) {
        auto it = s.find(name);
        if (it == s.end())
            throw Error(ErrorKind::validation, "question " + std::to_string(q.id) +
                                                   ": required variable '" + name +
                                                   "' missing from state");
        restricted[name] = it->second;
    }
    return variant_key(bp.schema, restricted);
}

/// All variant keys of a question, enumerated in schema order with the last
/// required variable cycling fastest. Deterministic.
inline std::vector<std::string> enumerate_variants(const StateSchema& schema,
                                                   const EvaluationQuestion& q) {
    std::vector<const StateVariable*> vars;
    for (const auto& v : schema.variables)
        for (const auto& r : q.required)
            if (v.name == r) vars.push_back(&v);
    std::vector<std::string> keys;
    std::vector<std::size_t> odo(vars.size(), 0);
    if (vars.empty()) return keys;
    while (true) {
        StateAssignment a;
        for (std::size_t i = 0; i < vars.size(); ++i) a[vars[i]->name] = vars[i]->choices[odo[i]];
        keys.push_back(variant_key(schema, a));
        std::size_t i = vars.size();
        while (i > 0) {
            --i;
            if (++odo[i] < vars[i]->choices.size()) break;
            odo[i] = 0;
            if (i == 0) return keys;
        }
    }
}

/// Option list (variant keys, presented order) for question q at position t.
/// Always contains the position's ground-truth variant; when the variant space
/// exceeds the cap, distractors are sampled without replacement. Both the
/// sample and the final shuffle are keyed on (blueprint seed, question id, t).
inline std::vector<std::string> options_for(const Blueprint& bp, const EvaluationQuestion& q,
                                            int t) {
    std::vector<std::string> keys = enumerate_variants(bp.schema, q);
    const std::string truth = ground_truth_variant(bp, q, state_at(bp, t));
    const std::size_t cap = std::size_t(std::max(1, bp.config.max_options_per_question));
    std::uint64_t salt = mix64(mix64(bp.seed, std::uint64_t(q.id)), std::uint64_t(t));

    std::vector<std::string> opts;
    if (keys.size() <= cap) {
        opts = keys;
    } else {
        std::vector<std::string> pool;
        pool.reserve(keys.size() - 1);
        for (const auto& k : keys)
            if (k != truth) pool.push_back(k);
        opts.push_back(truth);
        for (std::size_t i : deterministic_sample(pool.size(), cap - 1, mix64(salt, 0xd15ac7))) {
            opts.push_back(pool[i]);
        }
    }
    deterministic_shuffle(opts, mix64(salt, 0x0b7a1e5ull));
    return opts;
}

// ─── Validation ──────────────────────────────────────────────────────────────

struct Violation {
    std::string code;
    std::string detail;
};

/// Structural and semantic checks over an assembled blueprint.
/// Returns every violation found; an empty list means the blueprint is valid.
inline std::vector<Violation> validate_blueprint(const Blueprint& bp) {
    std::vector<Violation> out;
    auto flag = [&](const std::string& code, const std::string& detail) {
        out.push_back({code, detail});
    };

    if (trim(bp.persona.name).empty()) flag("persona_name_empty", "persona has no name");
    if (trim(bp.persona.profile).empty()) flag("persona_profile_empty", "persona has no profile");

    // Schema.
    if (bp.schema.variables.empty()) flag("schema_empty", "no state variables");
    std::set<std::string> names;
    for (const auto& v : bp.schema.variables) {
        if (!names.insert(v.name).second) flag("schema_duplicate_variable", v.name);
        std::set<std::string> distinct(v.choices.begin(), v.choices.end());
        if (distinct.size() < 2 || distinct.size() != v.choices.size())
            flag("schema_bad_choices", v.name + " needs >= 2 distinct choices");
        for (const auto& c : v.choices)
            if (trim(c).empty()) flag("schema_empty_choice", v.name);
    }
    for (const auto& [orig, canon] : bp.schema.alias_map)
        if (!names.count(canon)) flag("alias_target_missing", orig + " -> " + canon);

    auto value_ok = [&](const std::string& var, const std::string& val) {
        const StateVariable* sv = bp.schema.find(var);
        if (!sv) return false;
        return std::find(sv->choices.begin(), sv->choices.end(), val) != sv->choices.end();
    };

    // Initial state: full and legal.
    for (const auto& v : bp.schema.variables) {
        auto it = bp.initial_state.find(v.name);
        if (it == bp.initial_state.end())
            flag("initial_state_incomplete", v.name);
        else if (!value_ok(v.name, it->second))
            flag("initial_state_bad_value", v.name + "=" + it->second);
    }
    for (const auto& [k, _] : bp.initial_state)
        if (!names.count(k)) flag("initial_state_unknown_variable", k);

    if (int(bp.periods.size()) != bp.config.n_periods)
        flag("period_count_mismatch", std::to_string(bp.periods.size()) + " periods, config says " +
                                          std::to_string(bp.config.n_periods));

    // Periods: structure, no-op detection, event coverage, exposure scoping.
    StateAssignment running = bp.initial_state;
    for (std::size_t i = 0; i < bp.periods.size(); ++i) {
        const PeriodPlan& p = bp.periods[i];
        const std::string tag = "period " + std::to_string(i + 1);
        if (p.index != int(i) + 1) flag("period_index_mismatch", tag);
        for (const auto& [k, v] : p.updates) {
            if (!names.count(k)) {
                flag("update_unknown_variable", tag + ": " + k);
                continue;
            }
            if (!value_ok(k, v)) flag("update_bad_value", tag + ": " + k + "=" + v);
            auto prev = running.find(k);
            if (prev != running.end() && prev->second == v)
                flag("noop_update", tag + ": " + k + " already " + v);
        }
        std::set<std::string> covered;
        for (const auto& ev : p.events) {
            if (ev.states.empty()) flag("event_without_states", tag);
            for (const auto& s : ev.states) {
                if (!names.count(s)) flag("event_unknown_variable", tag + ": " + s);
                covered.insert(s);
            }
            if (trim(ev.narrative).empty()) flag("event_without_narrative", tag);
        }
        for (const auto& [k, _] : p.updates)
            if (!covered.count(k)) flag("update_not_covered_by_event", tag + ": " + k);
        for (const auto& uq : p.update_queries) {
            if (trim(uq.query).empty()) flag("exposure_query_empty", tag);
            if (uq.exposed.empty()) flag("exposure_set_empty", tag);
            for (const auto& [k, v] : uq.exposed) {
                if (!p.updates.count(k))
                    flag("exposure_outside_updates", tag + ": " + k);
                else if (!value_ok(k, v))
                    flag("exposure_bad_value", tag + ": " + k + "=" + v);
            }
        }
        for (const auto& [k, v] : p.updates) running[k] = v;
    }

    // Initial exposure: 1-3 variables per query, joint coverage of the schema.
    std::set<std::string> exposed_initially;
    for (const auto& q : bp.initial_queries) {
        if (trim(q.query).empty()) flag("exposure_query_empty", "initial");
        if (q.exposed.empty() || q.exposed.size() > 3)
            flag("initial_exposure_bad_arity", q.query);
        for (const auto& [k, v] : q.exposed) {
            if (!names.count(k))
                flag("exposure_unknown_variable", "initial: " + k);
            else if (!value_ok(k, v))
                flag("exposure_bad_value", "initial: " + k + "=" + v);
            exposed_initially.insert(k);
        }
    }
    for (const auto& v : bp.schema.variables)
        if (!exposed_initially.count(v.name)) flag("variable_never_exposed", v.name);

    // Questions: required sets, full variant coverage, distinct answers.
    std::set<int> qids;
    for (const auto& q : bp.questions) {
        const std::string tag = "question " + std::to_string(q.id);
        if (!qids.insert(q.id).second) flag("question_duplicate_id", tag);
        if (trim(q.text).empty()) flag("question_text_empty", tag);
        if (int(q.required.size()) != bp.config.states_per_question)
            flag("question_required_count", tag + ": " + std::to_string(q.required.size()) +
                                                " required, config says " +
                                                std::to_string(bp.config.states_per_question));
        std::set<std::string> req(q.required.begin(), q.required.end());
        if (req.size() != q.required.size()) flag("question_duplicate_required", tag);
        bool resolvable = true;
        for (const auto& r : q.required)
            if (!names.count(r)) {
                flag("question_unknown_variable", tag + ": " + r);
                resolvable = false;
            }
        if (!resolvable) continue;
        std::vector<std::string> keys = enumerate_variants(bp.schema, q);
        for (const auto& k : keys)
            if (!q.variants.count(k)) flag("variant_missing", tag + ": " + k);
        std::set<std::string> expected(keys.begin(), keys.end());
        std::set<std::string> answers;
        for (const auto& [k, a] : q.variants) {
            if (!expected.count(k)) flag("variant_unknown_key", tag + ": " + k);
            if (trim(a).empty()) flag("variant_answer_empty", tag + ": " + k);
            if (!answers.insert(a).second) flag("variant_answer_duplicate", tag + ": " + k);
        }
    }
    return out;
}

// ─── JSON serialization ──────────────────────────────────────────────────────
// Object keys come out sorted (std::map-backed json), so identical documents
// serialize to identical bytes regardless of construction order.

inline json to_json(const GenConfig& c) {
    return json{{"n_periods", c.n_periods},
                {"states_per_question", c.states_per_question},
                {"turns_per_exposure", c.turns_per_exposure},
                {"num_questions", c.num_questions},
                {"num_choices_per_state", c.num_choices_per_state},
                {"max_changes_per_state", c.max_changes_per_state},
                {"num_changes_per_period", c.num_changes_per_period},
                {"max_options_per_question", c.max_options_per_question},
                {"language", c.language}};
}

inline GenConfig gen_config_from_json(const json& j) {
    GenConfig c;
    c.n_periods = j.value("n_periods", c.n_periods);
    c.states_per_question = j.value("states_per_question", c.states_per_question);
    c.turns_per_exposure = j.value("turns_per_exposure", c.turns_per_exposure);
    c.num_questions = j.value("num_questions", c.num_questions);
    c.num_choices_per_state = j.value("num_choices_per_state", c.num_choices_per_state);
    c.max_changes_per_state = j.value("max_changes_per_state", c.max_changes_per_state);
    c.num_changes_per_period = j.value("num_changes_per_period", c.num_changes_per_period);
    c.max_options_per_question = j.value("max_options_per_question", c.max_options_per_question);
    c.language = j.value("language", c.language);
    return c;
}

inline json to_json(const Blueprint& bp) {
    json schema_vars = json::array();
    for (const auto& v : bp.schema.variables)
        schema_vars.push_back(json{{"name", v.name}, {"choices", v.choices}});

    json periods = json::array();
    for (const auto& p : bp.periods) {
        json events = json::array();
        for (const auto& e : p.events)
            events.push_back(json{{"states", e.states}, {"narrative", e.narrative}});
        json queries = json::array();
        for (const auto& q : p.update_queries)
            queries.push_back(json{{"query", q.query}, {"exposed", q.exposed}});
        periods.push_back(json{{"index", p.index},
                               {"summary", p.summary},
                               {"updates", p.updates},
                               {"events", events},
                               {"update_queries", queries}});
    }

    json initial_queries = json::array();
    for (const auto& q : bp.initial_queries)
        initial_queries.push_back(json{{"query", q.query}, {"exposed", q.exposed}});

    json questions = json::array();
    for (const auto& q : bp.questions)
        questions.push_back(json{{"id", q.id},
                                 {"text", q.text},
                                 {"required", q.required},
                                 {"variants", q.variants}});

    return json{{"amemgym_version", kSchemaVersion},
                {"persona",
                 json{{"name", bp.persona.name},
                      {"profile", bp.persona.profile},
                      {"source_id", bp.persona.source_id}}},
                {"schema", json{{"variables", schema_vars}, {"alias_map", bp.schema.alias_map}}},
                {"initial_state", bp.initial_state},
                {"periods", periods},
                {"initial_queries", initial_queries},
                {"questions", questions},
                {"config", to_json(bp.config)},
                {"start_date", bp.start_date},
                {"seed", bp.seed}};
}

inline void require_version(const json& j, const std::string& what) {
    if (!j.is_object() || !j.contains("amemgym_version"))
        throw Error(ErrorKind::io, what + ": missing amemgym_version field");
    if (j["amemgym_version"] != kSchemaVersion)
        throw Error(ErrorKind::io, what + ": unsupported schema version " +
                                       j["amemgym_version"].dump() + " (want \"" +
                                       kSchemaVersion + "\")");
}

inline Blueprint blueprint_from_json(const json& j) {
    require_version(j, "blueprint");
    Blueprint bp;
    const json& p = j.at("persona");
    bp.persona = {p.at("name").get<std::string>(), p.at("profile").get<std::string>(),
                  p.at("source_id").get<std::string>()};
    for (const auto& v : j.at("schema").at("variables"))
        bp.schema.variables.push_back(
            {v.at("name").get<std::string>(), v.at("choices").get<std::vector<std::string>>()});
    bp.schema.alias_map =
        j.at("schema").at("alias_map").get<std::map<std::string, std::string>>();
    bp.initial_state = j.at("initial_state").get<StateAssignment>();
    for (const auto& jp : j.at("periods")) {
        PeriodPlan period;
        period.index = jp.at("index").get<int>();
        period.summary = jp.at("summary").get<std::string>();
        period.updates = jp.at("updates").get<StateAssignment>();
        for (const auto& je : jp.at("events"))
            period.events.push_back({je.at("states").get<std::vector<std::string>>(),
                                     je.at("narrative").get<std::string>()});
        for (const auto& jq : jp.at("update_queries"))
            period.update_queries.push_back(
                {jq.at("query").get<std::string>(), jq.at("exposed").get<StateAssignment>()});
        bp.periods.push_back(std::move(period));
    }
    for (const auto& jq : j.at("initial_queries"))
        bp.initial_queries.push_back(
            {jq.at("query").get<std::string>(), jq.at("exposed").get<StateAssignment>()});
    for (const auto& jq : j.at("questions")) {
        EvaluationQuestion q;
        q.id = jq.at("id").get<int>();
        q.text = jq.at("text").get<std::string>();
        q.required = jq.at("required").get<std::vector<std::string>>();
        q.variants = jq.at("variants").get<std::map<std::string, std::string>>();
        bp.questions.push_back(std::move(q));
    }
    bp.config = gen_config_from_json(j.at("config"));
    bp.start_date = j.at("start_date").get<std::string>();
    bp.seed = j.at("seed").get<std::uint64_t>();
    return bp;
}

inline json to_json(const Message& m) {
    return json{{"role", role_name(m.role)}, {"content", m.content}};
}

inline json to_json(const EpisodeTrace& t) {
    json periods = json::array();
    for (const auto& p : t.periods) {
        json sessions = json::array();
        for (const auto& s : p.sessions) {
            json msgs = json::array();
            for (const auto& m : s) msgs.push_back(to_json(m));
            sessions.push_back(msgs);
        }
        json evals = json::array();
        for (const auto& e : p.evaluations)
            evals.push_back(json{{"question_id", e.question_id},
                                 {"options", e.options},
                                 {"chosen", e.chosen},
                                 {"truth", e.truth},
                                 {"ub_chosen", e.ub_chosen},
                                 {"retrieved", e.retrieved}});
        periods.push_back(json{{"position", p.position},
                               {"sessions", sessions},
                               {"evaluations", evals},
                               {"probe", p.probe}});
    }
    return json{{"amemgym_version", kSchemaVersion},
                {"blueprint_ref", t.blueprint_ref},
                {"agent_descriptor", t.agent_descriptor},
                {"mode", t.mode},
                {"replay_ref", t.replay_ref},
                {"seed", t.seed},
                {"stats",
                 json{{"sessions", t.total_sessions()}, {"exchanges", t.total_exchanges()}}},
                {"periods", periods}};
}

inline EpisodeTrace trace_from_json(const json& j) {
    require_version(j, "trace");
    EpisodeTrace t;
    t.blueprint_ref = j.at("blueprint_ref").get<std::string>();
    t.agent_descriptor = j.at("agent_descriptor").get<std::string>();
    t.mode = j.at("mode").get<std::string>();
    t.replay_ref = j.value("replay_ref", std::string());
    t.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& jp : j.at("periods")) {
        PeriodTraceEntry p;
        p.position = jp.at("position").get<int>();
        for (const auto& js : jp.at("sessions")) {
            std::vector<Message> session;
            for (const auto& jm : js)
                session.push_back(
                    {role_from(jm.at("role").get<std::string>()), jm.at("content").get<std::string>()});
            p.sessions.push_back(std::move(session));
        }
        for (const auto& je : jp.at("evaluations")) {
            EvaluationRecord e;
            e.question_id = je.at("question_id").get<int>();
            e.options = je.at("options").get<std::vector<std::string>>();
            e.chosen = je.at("chosen").get<int>();
            e.truth = je.at("truth").get<int>();
            e.ub_chosen = je.at("ub_chosen").get<int>();
            e.retrieved = je.at("retrieved").get<std::vector<std::string>>();
            p.evaluations.push_back(std::move(e));
        }
        p.probe = jp.at("probe").get<StateAssignment>();
        t.periods.push_back(std::move(p));
    }
    return t;
}

inline json to_json(const PositionScores& s) {
    json j{{"position", s.position},
           {"overall", s.overall},
           {"random", s.random_baseline},
           {"ub", s.upper_bound},
           {"write_rate", s.write_rate},
           {"read_rate", s.read_rate},
           {"util_rate", s.utilization_rate}};
    if (std::isnan(s.memory))
        j["memory"] = nullptr;
    else
        j["memory"] = s.memory;
    return j;
}

inline PositionScores position_scores_from_json(const json& j) {
    PositionScores s;
    s.position = j.at("position").get<int>();
    s.overall = j.at("overall").get<double>();
    s.random_baseline = j.at("random").get<double>();
    s.upper_bound = j.at("ub").get<double>();
    s.memory = j.at("memory").is_null() ? std::nan("") : j.at("memory").get<double>();
    s.write_rate = j.at("write_rate").get<double>();
    s.read_rate = j.at("read_rate").get<double>();
    s.utilization_rate = j.at("util_rate").get<double>();
    return s;
}

inline json to_json(const ReportBundle& r) {
    json rows = json::array();
    for (const auto& p : r.per_position) rows.push_back(to_json(p));
    return json{{"amemgym_version", kSchemaVersion},
                {"per_position", rows},
                {"aggregate", to_json(r.aggregate)},
                {"metadata", r.metadata}};
}

inline ReportBundle report_from_json(const json& j) {
    require_version(j, "report");
    ReportBundle r;
    for (const auto& row : j.at("per_position")) r.per_position.push_back(position_scores_from_json(row));
    r.aggregate = position_scores_from_json(j.at("aggregate"));
    r.metadata = j.at("metadata").get<std::map<std::string, std::string>>();
    return r;
}

}  // namespace amemgym
