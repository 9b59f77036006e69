#pragma once

// Blueprint generation pipeline: persona summary, question and schema
// synthesis, trajectory planning, exposure query crafting with verification,
// and per-variant answer generation with verification.

#include <algorithm>
#include <cstdint>
#include <map>
#include <memory>
#include <regex>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "amemgym/backend.hpp"
#include "amemgym/log.hpp"
#include "amemgym/model.hpp"
#include "amemgym/prompts.hpp"
#include "amemgym/util.hpp"

namespace amemgym {

// ─── Persona pools ───────────────────────────────────────────────────────────

struct PoolEntry {
    json record;            // raw persona record
    std::string source_id;  // stable identity within the pool
};

/// Load persona records from a JSONL file; one JSON object per line.
inline std::vector<PoolEntry> load_persona_pool(const std::string& path) {
    std::vector<PoolEntry> out;
    std::size_t line_no = 0;
    for (const auto& line : split_lines(read_file(path))) {
        ++line_no;
        if (trim(line).empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object())
            throw Error(ErrorKind::parse,
                        path + ":" + std::to_string(line_no) + ": not a JSON object");
        std::string id = j.value("id", "pool-" + std::to_string(line_no));
        out.push_back({std::move(j), id});
    }
    if (out.empty()) throw Error(ErrorKind::validation, path + ": persona pool is empty");
    return out;
}

/// Synthetic persona records used when no pool file is supplied.
inline std::vector<PoolEntry> make_builtin_pool(std::size_t n, std::uint64_t seed) {
    static const std::vector<std::string> first = {"Jordan", "Riley",  "Casey", "Morgan",
                                                   "Avery",  "Quinn",  "Rowan", "Sage",
                                                   "Emerson", "Harper", "Kai",   "Devon"};
    static const std::vector<std::string> last = {"Avery",  "Bennett", "Calloway", "Dalton",
                                                  "Ellison", "Foster",  "Granger",  "Hale",
                                                  "Iverson", "Jensen",  "Keller",   "Landry"};
    static const std::vector<std::string> jobs = {
        "data analyst",     "school teacher",   "nurse practitioner", "product designer",
        "civil engineer",   "chef",             "librarian",          "sales manager",
        "software developer", "physical therapist", "accountant",     "research assistant"};
    static const std::vector<std::string> cities = {
        "Portland", "Austin",   "Madison",  "Raleigh", "Denver",  "Pittsburgh",
        "Tucson",   "Columbus", "Savannah", "Boise",   "Hartford", "Omaha"};
    static const std::vector<std::string> homes = {
        "lives alone with a cat", "shares an apartment with a roommate",
        "lives with a partner",   "lives with family nearby"};
    static const std::vector<std::string> hobbies = {
        "trail running", "board games",  "home cooking", "photography",
        "gardening",     "club cycling", "pottery",      "chess"};

    std::vector<PoolEntry> out;
    for (std::size_t i = 0; i < n; ++i) {
        Rng rng(mix64(seed, std::uint64_t(i) + 0x9e00));
        std::string name =
            first[rng.below(first.size())] + " " + last[rng.below(last.size())];
        std::string job = jobs[rng.below(jobs.size())];
        std::string city = cities[rng.below(cities.size())];
        std::string hobby1 = hobbies[rng.below(hobbies.size())];
        std::string hobby2 = hobbies[rng.below(hobbies.size())];
        json rec = {{"name", name},
                    {"age", 27 + int(rng.below(26))},
                    {"occupation", job},
                    {"city", city},
                    {"household", homes[rng.below(homes.size())]},
                    {"interests", hobby1 + (hobby2 == hobby1 ? "" : " and " + hobby2)},
                    {"notes", name + " works as a " + job + " in " + city +
                                  ", keeps a weekly planning habit, and enjoys " + hobby1 + "."}};
        out.push_back({std::move(rec), "builtin-" + std::to_string(i)});
    }
    return out;
}

// ─── Pipeline ────────────────────────────────────────────────────────────────

struct GenesisOptions {
    GenConfig config;
    std::string start_date = "2025-06-01";
    int max_refinements = 3;  // verifier-driven retries per item
    RetryPolicy retry;
};

inline std::string format_user_profile(const PersonaRecord& p) {
    return "Name: " + p.name + "\n" + p.profile;
}

inline json schema_json(const StateSchema& schema) {
    json j = json::object();
    for (const auto& v : schema.variables) j[v.name] = v.choices;
    return j;
}

/// Turn "a=x|b=y" variant keys into readable "a=x, b=y" descriptors.
inline std::string variant_descriptor(const std::string& key) {
    std::string out = key;
    std::size_t pos = 0;
    while ((pos = out.find('|', pos)) != std::string::npos) out.replace(pos, 1, ", ");
    return out;
}

class Genesis {
public:
    Genesis(std::shared_ptr<ChatBackend> chat, GenesisOptions options)
        : chat_(std::move(chat)), opt_(std::move(options)) {}

    /// Condense a raw pool record into a named persona.
    PersonaRecord summarize_persona(const PoolEntry& entry) {
        std::string basic, complementary;
        for (const auto& [k, v] : entry.record.items()) {
            if (k == "notes" || k == "complementary") {
                complementary += v.is_string() ? v.get<std::string>() : v.dump();
                complementary += "\n";
                continue;
            }
            basic += k + ": " + (v.is_string() ? v.get<std::string>() : v.dump()) + "\n";
        }
        if (complementary.empty()) complementary = "(none provided)";
        json j = ask_validated("c3_sample_profile",
                               {{"basic_profile_str", trim(basic)},
                                {"complementary_info", trim(complementary)}},
                               [](const json& r) -> std::string {
                                   if (!r.is_object() || !r.contains("name") ||
                                       !r.contains("profile"))
                                       return "expected keys 'name' and 'profile'";
                                   if (!r["name"].is_string() || trim(r["name"].get<std::string>()).empty())
                                       return "'name' must be a non-empty string";
                                   if (!r["profile"].is_string() || trim(r["profile"].get<std::string>()).empty())
                                       return "'profile' must be a non-empty string";
                                   return "";
                               });
        return {trim(j["name"].get<std::string>()), trim(j["profile"].get<std::string>()),
                entry.source_id};
    }

    /// Generate a complete, validated blueprint for one persona.
    Blueprint generate(const PoolEntry& entry, std::uint64_t seed) {
        Blueprint bp;
        bp.config = opt_.config;
        bp.start_date = opt_.start_date;
        bp.seed = seed;
        bp.persona = summarize_persona(entry);
        const std::string profile = format_user_profile(bp.persona);

        auto raw_questions = sample_questions(profile, opt_.config.num_questions, "");
        build_schema(profile, raw_questions, bp);
        bp.initial_state = generate_initial_state(profile, bp.schema);
        plan_trajectory(profile, bp);
        generate_initial_queries(profile, bp);

        for (std::size_t qi = 0; qi < raw_questions.size(); ++qi) {
            EvaluationQuestion q = make_question(int(qi) + 1, raw_questions[qi], bp.schema);
            if (!fill_answers(bp.schema, q)) {
                log_warn("question " + std::to_string(q.id) +
                         ": answers failed verification, regenerating question");
                auto replacement = sample_questions(
                    profile, 1,
                    "Note: this replaces a question whose answers could not be verified: \"" +
                        raw_questions[qi].text +
                        "\". Reuse information types already established for this user.");
                q = make_question(int(qi) + 1, replacement.at(0), bp.schema);
                if (!fill_answers(bp.schema, q))
                    throw Error(ErrorKind::generation,
                                "question " + std::to_string(q.id) +
                                    ": replacement answers failed verification");
            }
            bp.questions.push_back(std::move(q));
        }

        auto violations = validate_blueprint(bp);
        if (!violations.empty()) {
            std::string detail;
            for (const auto& v : violations) detail += "\n  [" + v.code + "] " + v.detail;
            throw Error(ErrorKind::generation, "generated blueprint is invalid:" + detail);
        }
        return bp;
    }

private:
    struct RawRequired {
        std::string info_type;
        std::vector<std::string> choices;
    };
    struct RawQuestion {
        std::string text;
        std::vector<RawRequired> required;
    };

    std::shared_ptr<ChatBackend> chat_;
    GenesisOptions opt_;

    using Bindings = std::map<std::string, std::string>;

    template <class Validate>
    json ask_validated(const std::string& template_id, const Bindings& bindings, Validate check) {
        ChatRequest req = make_request(template_id, bindings);
        for (int attempt = 0;; ++attempt) {
            json j = complete_json(*chat_, req, opt_.retry);
            std::string err = check(j);
            if (err.empty()) return j;
            if (attempt >= opt_.max_refinements)
                throw Error(ErrorKind::generation, template_id + ": " + err);
            req.messages.push_back({Role::assistant, j.dump()});
            req.messages.push_back(
                {Role::user, "The previous response was not acceptable: " + err +
                                 ". Please answer again following the required format."});
        }
    }

    Bindings common(const std::string& profile) const {
        return {{"start_date", opt_.start_date},
                {"user_profile", profile},
                {"prompt_lang", opt_.config.language}};
    }

    // ── Questions ──

    std::vector<RawQuestion> sample_questions(const std::string& profile, int count,
                                              const std::string& note) {
        const auto& cfg = opt_.config;
        Bindings b = common(profile);
        b["num_questions"] = std::to_string(count);
        b["num_total_months"] = std::to_string(cfg.n_periods);
        b["num_states_per_question"] = std::to_string(cfg.states_per_question);
        b["num_choices_per_state"] = std::to_string(cfg.num_choices_per_state);

        ChatRequest req = make_request("c3_sample_questions", b);
        if (!note.empty()) req.messages.push_back({Role::user, note});

        auto check = [&](const json& r) -> std::string {
            if (!r.is_object() || !r.contains("questions") || !r["questions"].is_array())
                return "expected object with a 'questions' array";
            if (int(r["questions"].size()) != count)
                return "expected exactly " + std::to_string(count) + " questions";
            std::set<std::string> texts;
            for (const auto& q : r["questions"]) {
                if (!q.contains("question") || !q["question"].is_string() ||
                    trim(q["question"].get<std::string>()).empty())
                    return "every question needs non-empty text";
                if (!texts.insert(q["question"].get<std::string>()).second)
                    return "duplicate question text";
                if (!q.contains("required_info") || !q["required_info"].is_array() ||
                    int(q["required_info"].size()) != cfg.states_per_question)
                    return "each question needs exactly " +
                           std::to_string(cfg.states_per_question) + " required_info items";
                std::set<std::string> types;
                for (const auto& ri : q["required_info"]) {
                    if (!ri.contains("info_type") || !ri["info_type"].is_string() ||
                        trim(ri["info_type"].get<std::string>()).empty())
                        return "required_info items need a non-empty info_type";
                    if (!types.insert(ri["info_type"].get<std::string>()).second)
                        return "duplicate info_type within one question";
                    if (!ri.contains("info_choices") || !ri["info_choices"].is_array() ||
                        int(ri["info_choices"].size()) != cfg.num_choices_per_state)
                        return "each info_type needs exactly " +
                               std::to_string(cfg.num_choices_per_state) + " info_choices";
                    std::set<std::string> cs;
                    for (const auto& c : ri["info_choices"]) {
                        if (!c.is_string() || trim(c.get<std::string>()).empty())
                            return "info_choices must be non-empty strings";
                        if (!cs.insert(c.get<std::string>()).second)
                            return "info_choices must be distinct";
                    }
                }
            }
            return "";
        };

        json j;
        for (int attempt = 0;; ++attempt) {
            j = complete_json(*chat_, req, opt_.retry);
            std::string err = check(j);
            if (err.empty()) break;
            if (attempt >= opt_.max_refinements)
                throw Error(ErrorKind::generation, "c3_sample_questions: " + err);
            req.messages.push_back({Role::assistant, j.dump()});
            req.messages.push_back(
                {Role::user, "The previous response was not acceptable: " + err +
                                 ". Please answer again following the required format."});
        }

        std::vector<RawQuestion> out;
        for (const auto& q : j["questions"]) {
            RawQuestion rq;
            rq.text = trim(q["question"].get<std::string>());
            for (const auto& ri : q["required_info"]) {
                RawRequired rr;
                rr.info_type = trim(ri["info_type"].get<std::string>());
                for (const auto& c : ri["info_choices"]) rr.choices.push_back(c);
                rq.required.push_back(std::move(rr));
            }
            out.push_back(std::move(rq));
        }
        return out;
    }

    // ── Schema refinement and unification ──

    void build_schema(const std::string& profile, const std::vector<RawQuestion>& questions,
                      Blueprint& bp) {
        json questions_json = json::array();
        for (const auto& q : questions) {
            json required = json::array();
            for (const auto& r : q.required)
                required.push_back(json{{"info_type", r.info_type}, {"info_choices", r.choices}});
            questions_json.push_back(json{{"question", q.text}, {"required_info", required}});
        }

        std::set<std::string> originals;
        for (const auto& q : questions)
            for (const auto& r : q.required) originals.insert(r.info_type);

        Bindings b = common(profile);
        b.erase("start_date");
        b["questions_json"] = questions_json.dump(2);
        json groups = ask_validated(
            "c3_refine_schema", b, [&](const json& r) -> std::string {
                if (!r.is_object() || r.empty()) return "expected a non-empty group object";
                std::set<std::string> covered;
                for (const auto& [canon, raws] : r.items()) {
                    if (trim(canon).empty()) return "group names must be non-empty";
                    if (!raws.is_array() || raws.empty())
                        return "each group needs a non-empty list of original types";
                    for (const auto& raw : raws) {
                        if (!raw.is_string()) return "original type names must be strings";
                        if (!originals.count(raw.get<std::string>()))
                            return "unknown original type '" + raw.get<std::string>() + "'";
                        if (!covered.insert(raw.get<std::string>()).second)
                            return "original type '" + raw.get<std::string>() +
                                   "' mapped to two groups";
                    }
                }
                for (const auto& o : originals)
                    if (!covered.count(o)) return "original type '" + o + "' left unmapped";
                return "";
            });

        std::map<std::string, std::string> to_canonical;
        for (const auto& [canon, raws] : groups.items())
            for (const auto& raw : raws) to_canonical[raw.get<std::string>()] = canon;

        // Canonical order follows first appearance across questions.
        std::vector<std::string> order;
        for (const auto& q : questions)
            for (const auto& r : q.required) {
                const std::string& canon = to_canonical.at(r.info_type);
                if (std::find(order.begin(), order.end(), canon) == order.end())
                    order.push_back(canon);
            }

        // Collect choice sets per canonical variable; detect conflicts.
        std::map<std::string, std::vector<std::vector<std::string>>> choice_sets;
        std::map<std::string, std::set<std::string>> group_questions;
        for (const auto& q : questions)
            for (const auto& r : q.required) {
                const std::string& canon = to_canonical.at(r.info_type);
                auto& sets = choice_sets[canon];
                if (std::find(sets.begin(), sets.end(), r.choices) == sets.end())
                    sets.push_back(r.choices);
                group_questions[canon].insert(q.text);
            }

        json conflicts = json::object();
        for (const auto& [canon, raws] : groups.items()) {
            if (choice_sets[canon].size() <= 1 && raws.size() <= 1) continue;
            json qs = json::array();
            for (const auto& t : group_questions[canon]) qs.push_back(t);
            conflicts[canon] = json{{"original_types", raws},
                                    {"choice_sets", choice_sets[canon]},
                                    {"questions", qs}};
        }

        std::map<std::string, std::vector<std::string>> unified;
        if (!conflicts.empty()) {
            Bindings fb = common(profile);
            fb["conflict_groups_json"] = conflicts.dump(2);
            fb["num_total_months"] = std::to_string(opt_.config.n_periods);
            fb["num_choices_per_state"] = std::to_string(opt_.config.num_choices_per_state);
            json fixed = ask_validated(
                "c3_fix_schema", fb, [&](const json& r) -> std::string {
                    if (!r.is_object()) return "expected an object of unified choice lists";
                    for (const auto& [canon, _] : conflicts.items())
                        if (!r.contains(canon))
                            return "missing unified choices for '" + canon + "'";
                    for (const auto& [canon, choices] : r.items()) {
                        if (!conflicts.contains(canon))
                            return "unexpected type '" + canon + "' in unified choices";
                        if (!choices.is_array() ||
                            int(choices.size()) != opt_.config.num_choices_per_state)
                            return "'" + canon + "' needs exactly " +
                                   std::to_string(opt_.config.num_choices_per_state) + " choices";
                        std::set<std::string> seen;
                        for (const auto& c : choices) {
                            if (!c.is_string() || trim(c.get<std::string>()).empty())
                                return "choices must be non-empty strings";
                            if (!seen.insert(c.get<std::string>()).second)
                                return "choices for '" + canon + "' must be distinct";
                        }
                    }
                    return "";
                });
            for (const auto& [canon, choices] : fixed.items())
                unified[canon] = choices.get<std::vector<std::string>>();
        }

        for (const auto& canon : order) {
            StateVariable v;
            v.name = canon;
            v.choices = unified.count(canon) ? unified[canon] : choice_sets[canon].front();
            bp.schema.variables.push_back(std::move(v));
        }
        for (const auto& [raw, canon] : to_canonical)
            if (raw != canon) bp.schema.alias_map[raw] = canon;
    }

    EvaluationQuestion make_question(int id, const RawQuestion& raw, const StateSchema& schema) {
        EvaluationQuestion q;
        q.id = id;
        q.text = raw.text;
        for (const auto& r : raw.required) {
            auto it = schema.alias_map.find(r.info_type);
            std::string canon = it != schema.alias_map.end() ? it->second : r.info_type;
            if (!schema.has(canon))
                throw Error(ErrorKind::generation, "question " + std::to_string(id) +
                                                       ": info type '" + r.info_type +
                                                       "' does not map into the schema");
            if (std::find(q.required.begin(), q.required.end(), canon) != q.required.end())
                throw Error(ErrorKind::generation,
                            "question " + std::to_string(id) +
                                ": required types collapse onto '" + canon + "'");
            q.required.push_back(canon);
        }
        return q;
    }

    // ── Initial state and trajectory ──

    StateAssignment generate_initial_state(const std::string& profile, const StateSchema& schema) {
        Bindings b = common(profile);
        b.erase("prompt_lang");
        b["num_total_months"] = std::to_string(opt_.config.n_periods);
        b["state_schema_json"] = schema_json(schema).dump(2);
        json j = ask_validated(
            "c3_initial_state", b, [&](const json& r) -> std::string {
                if (!r.is_object()) return "expected an object mapping variables to values";
                for (const auto& v : schema.variables) {
                    if (!r.contains(v.name)) return "missing variable '" + v.name + "'";
                    if (!r[v.name].is_string() ||
                        std::find(v.choices.begin(), v.choices.end(),
                                  r[v.name].get<std::string>()) == v.choices.end())
                        return "value for '" + v.name + "' is not one of its choices";
                }
                for (const auto& [k, _] : r.items())
                    if (!schema.has(k)) return "unknown variable '" + k + "'";
                return "";
            });
        StateAssignment s;
        for (const auto& [k, v] : j.items()) s[k] = v.get<std::string>();
        return s;
    }

    void plan_trajectory(const std::string& profile, Blueprint& bp) {
        const auto& cfg = bp.config;
        const int num_changes = cfg.resolved_changes_per_period(int(bp.schema.variables.size()));
        StateAssignment current = bp.initial_state;
        std::map<std::string, int> counts;
        StateAssignment prior;

        for (int t = 1; t <= cfg.n_periods; ++t) {
            json counts_json = json::object();
            for (const auto& v : bp.schema.variables)
                counts_json[v.name] = counts.count(v.name) ? counts[v.name] : 0;

            Bindings b = common(profile);
            b.erase("prompt_lang");
            b["num_months"] = "1";
            b["total_steps"] = std::to_string(cfg.n_periods);
            b["total_steps - remaining_steps + 1"] = std::to_string(t);
            b["remaining_steps - 1"] = std::to_string(cfg.n_periods - t);
            b["current_date_str"] = add_months(bp.start_date, t - 1);
            b["end_date_str"] = add_months(bp.start_date, t);
            b["state_schema_json"] = schema_json(bp.schema).dump(2);
            b["latest_state_json"] = json(current).dump(2);
            b["prior_updates_json"] = json(prior).dump(2);
            b["max_changes_per_state"] = std::to_string(cfg.max_changes_per_state);
            b["update_cnts_json"] = counts_json.dump(2);
            b["num_changes_per_period"] = std::to_string(num_changes);

            json j = ask_validated(
                "c3_state_updates", b, [&](const json& r) -> std::string {
                    if (!r.is_object() || !r.contains("updated") || !r["updated"].is_object())
                        return "expected object with 'updated'";
                    if (r["updated"].empty()) return "'updated' must change at least one variable";
                    for (const auto& [var, val] : r["updated"].items()) {
                        const StateVariable* sv = bp.schema.find(var);
                        if (!sv) return "unknown variable '" + var + "'";
                        if (!val.is_string() ||
                            std::find(sv->choices.begin(), sv->choices.end(),
                                      val.get<std::string>()) == sv->choices.end())
                            return "value for '" + var + "' is not one of its choices";
                        if (val.get<std::string>() == current.at(var))
                            return "update for '" + var + "' does not change its value";
                    }
                    return "";
                });

            PeriodPlan plan;
            plan.index = t;
            plan.summary = j.value("period_summary", "Period " + std::to_string(t));
            for (const auto& [var, val] : j["updated"].items()) {
                plan.updates[var] = val.get<std::string>();
                ++counts[var];
                if (counts[var] > cfg.max_changes_per_state)
                    log_warn("period " + std::to_string(t) + ": variable '" + var +
                             "' exceeded the soft change cap");
            }

            elaborate_period(profile, bp, plan, current);
            generate_update_queries(profile, bp, plan, current);

            for (const auto& [var, val] : plan.updates) current[var] = val;
            prior = plan.updates;
            bp.periods.push_back(std::move(plan));
        }
    }

    void elaborate_period(const std::string& profile, const Blueprint& bp, PeriodPlan& plan,
                          const StateAssignment& before) {
        json changes = json::object();
        for (const auto& [var, val] : plan.updates)
            changes[var] = json{{"from", before.at(var)}, {"to", val}};
        json untouched = json::array();
        for (const auto& v : bp.schema.variables)
            if (!plan.updates.count(v.name)) untouched.push_back(v.name);

        Bindings b = common(profile);
        b.erase("prompt_lang");
        b["period_start"] = add_months(bp.start_date, plan.index - 1);
        b["period_end"] = add_months(bp.start_date, plan.index);
        b["period_summary"] = plan.summary;
        b["state_changes_json"] = changes.dump(2);
        b["states_not_updated_json"] = untouched.dump(2);

        json j = ask_validated(
            "c3_elaborate_updates", b, [&](const json& r) -> std::string {
                if (!r.is_object() || !r.contains("events") || !r["events"].is_array() ||
                    r["events"].empty())
                    return "expected object with a non-empty 'events' array";
                std::set<std::string> covered;
                for (const auto& ev : r["events"]) {
                    if (!ev.contains("states") || !ev["states"].is_array() ||
                        ev["states"].empty())
                        return "each event needs a non-empty 'states' list";
                    if (!ev.contains("event") || !ev["event"].is_string() ||
                        trim(ev["event"].get<std::string>()).empty())
                        return "each event needs a non-empty narrative";
                    for (const auto& s : ev["states"]) {
                        if (!s.is_string() || !plan.updates.count(s.get<std::string>()))
                            return "event references a variable not updated this period";
                        if (!covered.insert(s.get<std::string>()).second)
                            return "variable '" + s.get<std::string>() +
                                   "' appears in two events";
                    }
                }
                for (const auto& [var, _] : plan.updates)
                    if (!covered.count(var)) return "variable '" + var + "' not covered";
                return "";
            });

        for (const auto& ev : j["events"]) {
            LifeEvent e;
            for (const auto& s : ev["states"]) e.states.push_back(s.get<std::string>());
            e.narrative = trim(ev["event"].get<std::string>());
            plan.events.push_back(std::move(e));
        }
    }

    void generate_update_queries(const std::string& profile, const Blueprint& bp, PeriodPlan& plan,
                                 const StateAssignment& before) {
        json context = json::array();
        for (const auto& ev : plan.events) {
            json transition = json::object();
            for (const auto& var : ev.states)
                transition[var] = json{{"from", before.at(var)}, {"to", plan.updates.at(var)}};
            context.push_back(json{{"background", ev.narrative}, {"state_transition", transition}});
        }

        Bindings b;
        b["start_date"] = opt_.start_date;
        b["user_profile_json"] = json{{"profile", profile}}.dump(2);
        b["period_start"] = add_months(bp.start_date, plan.index - 1);
        b["period_end"] = add_months(bp.start_date, plan.index);
        b["context_json"] = context.dump(2);
        b["state_schema_json"] = schema_json(bp.schema).dump(2);

        json j = ask_validated(
            "c3_update_queries", b, [&](const json& r) -> std::string {
                if (!r.is_object() || !r.contains("queries") || !r["queries"].is_array())
                    return "expected object with a 'queries' array";
                if (r["queries"].size() != plan.events.size())
                    return "expected one query per event (" +
                           std::to_string(plan.events.size()) + ")";
                for (const auto& q : r["queries"])
                    if (!q.is_string() || trim(q.get<std::string>()).empty())
                        return "queries must be non-empty strings";
                return "";
            });

        for (std::size_t i = 0; i < plan.events.size(); ++i) {
            StateAssignment exposed;
            for (const auto& var : plan.events[i].states) exposed[var] = plan.updates.at(var);
            plan.update_queries.push_back(
                verify_exposure(trim(j["queries"][i].get<std::string>()), exposed, bp.schema));
        }
    }

    void generate_initial_queries(const std::string& profile, Blueprint& bp) {
        Bindings b = common(profile);
        b.erase("prompt_lang");
        b["initial_state_json"] = json(bp.initial_state).dump(2);
        b["state_schema_json"] = schema_json(bp.schema).dump(2);

        json j = ask_validated(
            "c3_initial_queries", b, [&](const json& r) -> std::string {
                if (!r.is_object() || !r.contains("queries") || !r["queries"].is_array() ||
                    r["queries"].empty())
                    return "expected object with a non-empty 'queries' array";
                std::set<std::string> covered;
                for (const auto& q : r["queries"]) {
                    if (!q.contains("query") || !q["query"].is_string() || trim(q["query"].get<std::string>()).empty())
                        return "each entry needs non-empty 'query' text";
                    if (!q.contains("exposed_states") || !q["exposed_states"].is_object() ||
                        q["exposed_states"].empty() || q["exposed_states"].size() > 3)
                        return "each entry must expose between 1 and 3 variables";
                    for (const auto& [var, val] : q["exposed_states"].items()) {
                        auto it = bp.initial_state.find(var);
                        if (it == bp.initial_state.end())
                            return "exposed variable '" + var + "' is not in the initial state";
                        if (!val.is_string() || val.get<std::string>() != it->second)
                            return "exposed value for '" + var +
                                   "' does not match the initial state";
                        if (!covered.insert(var).second)
                            return "variable '" + var + "' exposed twice";
                    }
                }
                for (const auto& [var, _] : bp.initial_state)
                    if (!covered.count(var)) return "variable '" + var + "' never exposed";
                return "";
            });

        for (const auto& q : j["queries"]) {
            StateAssignment exposed;
            for (const auto& [var, val] : q["exposed_states"].items())
                exposed[var] = val.get<std::string>();
            bp.initial_queries.push_back(
                verify_exposure(trim(q["query"].get<std::string>()), exposed, bp.schema));
        }
    }

    /// Check that an exposure query actually reveals the intended values; refine
    /// the wording until the checker agrees or attempts run out.
    ExposureUtterance verify_exposure(std::string query, const StateAssignment& exposed,
                                      const StateSchema& schema) {
        json choices = json::object();
        for (const auto& [var, _] : exposed) choices[var] = schema.find(var)->choices;

        for (int attempt = 0;; ++attempt) {
            ChatRequest req = make_request(
                "c3_check_query", {{"query", query}, {"state_choices_json", choices.dump(2)}});
            json predicted = complete_json(*chat_, req, opt_.retry);

            bool ok = predicted.is_object();
            if (ok)
                for (const auto& [var, val] : exposed) {
                    if (!predicted.contains(var) || !predicted[var].is_string() ||
                        predicted[var].get<std::string>() != val) {
                        ok = false;
                        break;
                    }
                }
            if (ok) return {query, exposed};
            if (attempt >= opt_.max_refinements)
                throw Error(ErrorKind::generation,
                            "exposure query failed verification after " +
                                std::to_string(attempt + 1) + " attempts: " + query);

            ChatRequest refine = make_request("c3_refine_query",
                                              {{"query", query},
                                               {"exposed_states_json", json(exposed).dump(2)},
                                               {"state_choices_json", choices.dump(2)}});
            json refined = complete_json(*chat_, refine, opt_.retry);
            if (refined.is_object() && refined.contains("query") && refined["query"].is_string() &&
                !trim(refined["query"].get<std::string>()).empty())
                query = trim(refined["query"].get<std::string>());
        }
    }

    // ── Answers ──

    /// Generate and verify per-variant answers. Returns false when some answer
    /// could not be verified, signalling the caller to regenerate the question.
    bool fill_answers(const StateSchema& schema, EvaluationQuestion& q) {
        auto keys = enumerate_variants(schema, q);
        std::vector<std::string> descriptors;
        std::string variants_text;
        for (std::size_t i = 0; i < keys.size(); ++i) {
            descriptors.push_back(variant_descriptor(keys[i]));
            variants_text += std::to_string(i + 1) + ". " + descriptors.back() + "\n";
        }

        json j = ask_validated(
            "c3_sample_answers",
            {{"question", q.text},
             {"required_info_types", join(q.required, ", ")},
             {"variants_text", variants_text}},
            [&](const json& r) -> std::string {
                if (!r.is_object()) return "expected an object of variant answers";
                std::set<std::string> seen;
                for (std::size_t i = 1; i <= keys.size(); ++i) {
                    std::string key = "variant_" + std::to_string(i);
                    if (!r.contains(key) || !r[key].is_string() || trim(r[key].get<std::string>()).empty())
                        return "missing or empty '" + key + "'";
                    if (!seen.insert(trim(r[key].get<std::string>())).second)
                        return "answers must be pairwise distinct";
                }
                return "";
            });

        for (std::size_t i = 0; i < keys.size(); ++i) {
            std::string answer = trim(j["variant_" + std::to_string(i + 1)].get<std::string>());
            bool ok = false;
            for (int attempt = 0; attempt <= opt_.max_refinements; ++attempt) {
                if (check_answer(q.text, answer, variants_text) == int(i) + 1) {
                    ok = true;
                    break;
                }
                if (attempt == opt_.max_refinements) break;
                std::string others;
                for (std::size_t k = 0; k < descriptors.size(); ++k)
                    if (k != i) others += std::to_string(k + 1) + ". " + descriptors[k] + "\n";
                ChatRequest refine = make_request("c3_refine_answer",
                                                  {{"question", q.text},
                                                   {"matched_state", descriptors[i]},
                                                   {"other_states_text", others},
                                                   {"answer", answer}});
                json r = complete_json(*chat_, refine, opt_.retry);
                if (r.is_object() && r.contains("answer") && r["answer"].is_string() &&
                    !trim(r["answer"].get<std::string>()).empty())
                    answer = trim(r["answer"].get<std::string>());
            }
            if (!ok) return false;
            q.variants[keys[i]] = answer;
        }
        return true;
    }

    int check_answer(const std::string& question, const std::string& answer,
                     const std::string& choices) {
        ChatRequest req = make_request(
            "c3_check_answer", {{"question", question}, {"answer", answer}, {"choices", choices}});
        std::string reply = complete_with_retry(*chat_, req, opt_.retry);
        static const std::regex num(R"((\d+))");
        std::smatch m;
        if (!std::regex_search(reply, m, num))
            throw Error(ErrorKind::parse, "answer check returned no number: " + reply);
        return std::stoi(m[1]);
    }
};

/// One-call convenience wrapper.
inline Blueprint generate_blueprint(std::shared_ptr<ChatBackend> chat, const PoolEntry& entry,
                                    const GenesisOptions& options, std::uint64_t seed) {
    Genesis g(std::move(chat), options);
    return g.generate(entry, seed);
}

}  // namespace amemgym
