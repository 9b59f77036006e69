#pragma once

// Deterministic rule set that stands in for every model role the gym needs:
// pipeline generation, verification, user simulation, the evaluated assistant,
// memory extraction, evolution, and consistency checking. Each rule is a pure
// function of (request, seed), so whole runs replay byte-identically.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <map>
#include <memory>
#include <regex>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "amemgym/backend.hpp"
#include "amemgym/util.hpp"

namespace amemgym::scripted {

using ordered_json = nlohmann::ordered_json;

// ─── Parsing helpers ─────────────────────────────────────────────────────────

inline std::string request_text(const ChatRequest& req) {
    std::string all;
    for (const auto& m : req.messages) {
        all += m.content;
        all += '\n';
    }
    return all;
}

/// Everything before the final message, in chronological order. This is the
/// “what the assistant can see” text for answer rules.
inline std::string context_text(const ChatRequest& req) {
    std::string all;
    for (std::size_t i = 0; i + 1 < req.messages.size(); ++i) {
        all += req.messages[i].content;
        all += '\n';
    }
    return all;
}

/// First JSON structure after a marker line.
inline json json_after(const std::string& text, const std::string& marker) {
    std::size_t at = text.find(marker);
    if (at == std::string::npos)
        throw Error(ErrorKind::backend, "scripted rule: marker not found: " + marker);
    auto [b, e] = amemgym::detail::scan_json_span(text, at + marker.size());
    if (b == std::string::npos)
        throw Error(ErrorKind::backend, "scripted rule: no JSON after marker: " + marker);
    json j = json::parse(text.substr(b, e - b), nullptr, false);
    if (j.is_discarded())
        throw Error(ErrorKind::backend, "scripted rule: bad JSON after marker: " + marker);
    return j;
}

inline std::string text_between(const std::string& text, const std::string& from,
                                const std::string& to) {
    std::size_t b = text.find(from);
    if (b == std::string::npos)
        throw Error(ErrorKind::backend, "scripted rule: marker not found: " + from);
    b += from.size();
    std::size_t e = to.empty() ? std::string::npos : text.find(to, b);
    return trim(text.substr(b, e == std::string::npos ? std::string::npos : e - b));
}

inline int int_after(const std::string& text, const std::string& pattern) {
    std::regex re(pattern);
    std::smatch m;
    if (!std::regex_search(text, m, re))
        throw Error(ErrorKind::backend, "scripted rule: pattern not found: " + pattern);
    return std::stoi(m[1]);
}

/// "1. text" lines of a block, in order.
inline std::vector<std::string> numbered_lines(const std::string& block) {
    std::vector<std::string> out;
    static const std::regex re(R"(^\s*(\d+)\.\s*(.*)$)");
    for (const auto& line : split_lines(block)) {
        std::smatch m;
        if (std::regex_match(line, m, re)) out.push_back(m[2]);
    }
    return out;
}

/// Last-mention-wins map of "var: value" and "my var is (now) value" pairs.
/// Later text overrides earlier, which matches chronology when the caller
/// passes memory block first and transcript after it.
inline std::map<std::string, std::string> current_value_scan(const std::string& text) {
    std::vector<std::pair<std::size_t, std::pair<std::string, std::string>>> hits;
    static const std::regex colon(R"(([A-Za-z0-9_]+)\s*:\s*([A-Za-z0-9_]+))");
    static const std::regex my(R"([Mm]y ([A-Za-z0-9_]+) is (?:now )?([A-Za-z0-9_]+))");
    for (auto it = std::sregex_iterator(text.begin(), text.end(), colon);
         it != std::sregex_iterator(); ++it)
        hits.push_back({std::size_t(it->position(0)), {(*it)[1], (*it)[2]}});
    for (auto it = std::sregex_iterator(text.begin(), text.end(), my); it != std::sregex_iterator();
         ++it)
        hits.push_back({std::size_t(it->position(0)), {(*it)[1], (*it)[2]}});
    std::sort(hits.begin(), hits.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    std::map<std::string, std::string> out;
    for (const auto& [_, kv] : hits) out[kv.first] = kv.second;
    return out;
}

/// "your var is value" pairs in an answer option, last mention per var.
inline std::map<std::string, std::string> option_pairs(const std::string& text) {
    std::map<std::string, std::string> out;
    static const std::regex re(R"([Yy]our ([A-Za-z0-9_]+) is ([A-Za-z0-9_]+))");
    for (auto it = std::sregex_iterator(text.begin(), text.end(), re); it != std::sregex_iterator();
         ++it)
        out[(*it)[1]] = (*it)[2];
    return out;
}

// ─── Shared vocabulary ───────────────────────────────────────────────────────

inline const std::vector<std::string>& topic_pool() {
    static const std::vector<std::string> v = {
        "career_growth",  "fitness_routine", "budget_planning", "team_management",
        "diet_preference", "commute_mode",    "hobby_time",      "travel_style",
        "reading_habit",   "social_circle",   "project_focus",   "learning_pace",
        "sleep_schedule",  "volunteer_role",  "garden_upkeep",   "pet_care",
        "music_practice",  "home_office",     "mentoring_style", "event_hosting",
        "savings_goal",    "skill_focus",     "weekend_plans",   "family_time"};
    return v;
}

inline const std::vector<std::string>& choice_words() {
    static const std::vector<std::string> v = {"alpha",   "bravo", "charlie", "delta",
                                               "echo",    "fox",   "golf",    "hotel"};
    return v;
}

inline const std::vector<std::string>& alias_suffixes() {
    static const std::vector<std::string> v = {"_level", "_status", "_situation"};
    return v;
}

inline std::string canonical_topic(const std::string& raw) {
    for (const auto& s : alias_suffixes())
        if (raw.size() > s.size() && raw.compare(raw.size() - s.size(), s.size(), s) == 0)
            return raw.substr(0, raw.size() - s.size());
    return raw;
}

// ─── Pipeline rules ──────────────────────────────────────────────────────────

inline std::string rule_sample_profile(const ChatRequest& req, std::uint64_t seed) {
    const std::string text = request_text(req);
    std::string name = "Alex Doe";
    {
        static const std::regex re(R"((?:^|\n)name:\s*([^\n]+))");
        std::smatch m;
        if (std::regex_search(text, m, re)) name = trim(m[1].str());
    }
    std::string basic = text_between(text, "Basic Profile:", "Complementary Information:");
    std::string extra =
        text_between(text, "Complementary Information:", "Keep the summary professional");
    std::string profile = extra.empty() ? basic : extra;
    static const std::vector<std::string> traits = {
        "Prefers concrete, actionable advice and keeps a steady weekly routine.",
        "Values consistency and tends to plan changes a month ahead.",
        "Likes short practical suggestions over long explanations.",
        "Keeps notes on commitments and revisits plans regularly."};
    profile += " " + traits[mix64(seed, fnv1a64(text)) % traits.size()];
    return json{{"name", name}, {"profile", profile}}.dump(2);
}

inline std::string rule_sample_questions(const ChatRequest& req, std::uint64_t seed) {
    const std::string text = request_text(req);
    int num_questions = int_after(text, R"(Generate (\d+) distinct questions)");
    int per_question = int_after(text, R"(Have (\d+) required_info items)");
    int num_choices = int_after(text, R"(\*\*info_choices\*\*: (\d+) mutually)");
    std::uint64_t h = mix64(seed, fnv1a64(text));

    std::vector<std::string> topics = topic_pool();
    deterministic_shuffle(topics, h);
    std::size_t ring = std::min<std::size_t>(10, topics.size());
    topics.resize(ring);

    static const std::vector<std::string> stems = {
        "What would you suggest for handling my %A% and my %B% over the coming weeks?",
        "How should I adjust plans around my %A% and my %B% right now?",
        "Any advice that accounts for my %A% together with my %B%?",
        "What is a sensible next step considering my %A% and also my %B%?"};

    json questions = json::array();
    std::set<std::string> used_texts;
    for (int i = 0; i < num_questions; ++i) {
        std::vector<std::string> canon;
        for (int j = 0; j < per_question; ++j)
            canon.push_back(topics[std::size_t(i * per_question + j) % ring]);
        Rng rng(mix64(h, std::uint64_t(i)));
        json required = json::array();
        std::vector<std::string> mentions;
        for (const auto& c : canon) {
            std::string raw = c;
            if (rng.below(3) == 0)
                raw += alias_suffixes()[rng.below(alias_suffixes().size())];
            json choices = json::array();
            for (int k = 1; k <= num_choices; ++k)
                choices.push_back(raw + "_x" + std::to_string(k));
            required.push_back(json{{"info_type", raw}, {"info_choices", choices}});
            mentions.push_back(c);
        }
        std::string stem = stems[rng.below(stems.size())];
        std::string q = stem;
        q.replace(q.find("%A%"), 3, mentions[0]);
        q.replace(q.find("%B%"), 3, mentions.size() > 1 ? mentions[1] : mentions[0]);
        if (mentions.size() > 2)
            q.insert(q.size() - 1, " keeping my " + mentions[2] + " in mind");
        while (!used_texts.insert(q).second)
            q.insert(q.size() - 1, " over the months ahead");
        questions.push_back(json{{"question", q}, {"required_info", required}});
    }
    return json{{"questions", questions}}.dump(2);
}

inline std::string rule_refine_schema(const ChatRequest& req, std::uint64_t) {
    json qs = json_after(request_text(req), "Required Information Types:");
    std::map<std::string, std::vector<std::string>> groups;
    std::set<std::string> seen;
    for (const auto& q : qs)
        for (const auto& ri : q.at("required_info")) {
            std::string raw = ri.at("info_type").get<std::string>();
            if (!seen.insert(raw).second) continue;
            groups[canonical_topic(raw)].push_back(raw);
        }
    json out = json::object();
    for (const auto& [canon, raws] : groups) out[canon] = raws;
    return out.dump(2);
}

inline std::string rule_fix_schema(const ChatRequest& req, std::uint64_t) {
    const std::string text = request_text(req);
    json conflicts = json_after(text, "Conflicting Information Types and their contexts:");
    int num_choices = int_after(text, R"(Create (\d+) choices)");
    json out = json::object();
    for (const auto& [type, _] : conflicts.items()) {
        json choices = json::array();
        for (int k = 0; k < num_choices; ++k)
            choices.push_back(type + "_" + choice_words()[std::size_t(k) % choice_words().size()]);
        out[type] = choices;
    }
    return out.dump(2);
}

inline std::string rule_initial_state(const ChatRequest& req, std::uint64_t) {
    json schema = json_after(request_text(req),
                             "State Schema (each key represents a state variable with possible "
                             "values):");
    json out = json::object();
    for (const auto& [var, choices] : schema.items())
        out[var] = choices.at(choices.size() / 2);
    return out.dump(2);
}

inline std::string rule_state_updates(const ChatRequest& req, std::uint64_t seed) {
    const std::string text = request_text(req);
    int num_changes = int_after(text, R"(Update ~(\d+) state variables only)");
    int max_changes = int_after(text, R"(fewer than (\d+) updates)");
    int step = int_after(text, R"(- Step (\d+) of)");
    json schema = json_after(text, "**State Schema:**");
    json current = json_after(text, "**Current State:**");
    json counts = json_after(text, "**Update Counts");
    std::uint64_t salt = mix64(seed, fnv1a64(text));

    struct Cand {
        std::string var;
        int count;
        std::uint64_t tiebreak;
    };
    std::vector<Cand> cands;
    for (const auto& [var, _] : schema.items()) {
        int c = counts.contains(var) ? counts[var].get<int>() : 0;
        cands.push_back({var, c, mix64(salt, fnv1a64(var))});
    }
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
        if (a.count != b.count) return a.count < b.count;
        return a.tiebreak < b.tiebreak;
    });

    json updated = json::object();
    std::vector<std::string> changed;
    for (const auto& c : cands) {
        if (int(changed.size()) >= num_changes) break;
        if (c.count >= max_changes && int(changed.size()) >= 1) continue;
        const json& choices = schema[c.var];
        std::string cur = current.value(c.var, choices.at(0).get<std::string>());
        std::size_t idx = 0;
        for (std::size_t i = 0; i < choices.size(); ++i)
            if (choices[i] == cur) idx = i;
        updated[c.var] = choices[(idx + 1) % choices.size()];
        changed.push_back(c.var);
    }
    std::string summary = "Period " + std::to_string(step) + ": routine shifts touched " +
                          join(changed, " and ") + ".";
    return json{{"period_summary", summary}, {"updated", updated}}.dump(2);
}

inline std::string rule_elaborate_updates(const ChatRequest& req, std::uint64_t seed) {
    const std::string text = request_text(req);
    json changes = json_after(text, "**State Changes:**");
    std::uint64_t salt = mix64(seed, fnv1a64(text));
    std::vector<std::string> vars;
    for (const auto& [var, _] : changes.items()) vars.push_back(var);

    static const std::vector<std::string> shapes = {
        "A change of pace settled in around daily commitments",
        "A new obligation reshuffled the usual weekly rhythm",
        "An opportunity came up that nudged existing habits",
        "A small disruption forced some plans to be reorganized"};

    json events = json::array();
    std::size_t i = 0;
    Rng rng(salt);
    while (i < vars.size()) {
        std::size_t take = std::min<std::size_t>(1 + rng.below(2), vars.size() - i);
        json states = json::array();
        for (std::size_t j = 0; j < take; ++j) states.push_back(vars[i + j]);
        std::string narrative = shapes[rng.below(shapes.size())] + ", affecting " +
                                std::to_string(take) + (take == 1 ? " area" : " areas") +
                                " of everyday life.";
        events.push_back(json{{"states", states}, {"event", narrative}});
        i += take;
    }
    return json{{"events", events}}.dump(2);
}

inline std::string rule_update_queries(const ChatRequest& req, std::uint64_t seed) {
    const std::string text = request_text(req);
    json context = json_after(text, "State Updates Context");
    std::uint64_t salt = mix64(seed, fnv1a64(text));

    static const std::vector<std::string> opens = {
        "Quick update on my side.", "Things moved around a bit recently.",
        "Following up after some changes.", "A few things shifted lately."};
    static const std::vector<std::string> asks = {
        "How should I adapt my plans?", "What should I adjust first?",
        "Any suggestions for the coming weeks?", "What would you recommend now?"};

    json queries = json::array();
    int ei = 0;
    for (const auto& ev : context) {
        Rng rng(mix64(salt, std::uint64_t(ei++)));
        std::vector<std::string> clauses;
        for (const auto& [var, tr] : ev.at("state_transition").items())
            clauses.push_back("my " + var + " is now " + tr.at("to").get<std::string>());
        std::string q = opens[rng.below(opens.size())] + " These days " + join(clauses, " and ") +
                        ". " + asks[rng.below(asks.size())];
        queries.push_back(q);
    }
    return json{{"queries", queries}}.dump(2);
}

inline std::string rule_initial_queries(const ChatRequest& req, std::uint64_t seed) {
    const std::string text = request_text(req);
    json state = json_after(text, "User's Current State (to be exposed through queries):");
    std::uint64_t salt = mix64(seed, fnv1a64(text));

    static const std::vector<std::string> opens = {
        "I want to get a bit more organized.", "Trying to settle into a good rhythm.",
        "Hoping to plan ahead properly this time.", "Looking for some practical direction."};
    static const std::vector<std::string> asks = {
        "Where would you start?", "What would you focus on first?",
        "Any advice for the next month?", "How would you approach this?"};

    std::vector<std::pair<std::string, std::string>> pairs;
    for (const auto& [var, val] : state.items()) pairs.push_back({var, val.get<std::string>()});

    json queries = json::array();
    std::size_t i = 0;
    int gi = 0;
    Rng sizes(salt);
    while (i < pairs.size()) {
        std::size_t take = std::min<std::size_t>(1 + sizes.below(3), pairs.size() - i);
        Rng rng(mix64(salt, std::uint64_t(1000 + gi++)));
        std::vector<std::string> clauses;
        json exposed = json::object();
        for (std::size_t j = 0; j < take; ++j) {
            clauses.push_back("my " + pairs[i + j].first + " is " + pairs[i + j].second);
            exposed[pairs[i + j].first] = pairs[i + j].second;
        }
        std::string q = opens[rng.below(opens.size())] + " Right now " + join(clauses, " and ") +
                        ". " + asks[rng.below(asks.size())];
        queries.push_back(json{{"exposed_states", exposed}, {"query", q}});
        i += take;
    }
    return json{{"queries", queries}}.dump(2);
}

inline std::string rule_check_query(const ChatRequest& req, std::uint64_t) {
    const std::string text = request_text(req);
    std::string query = text_between(text, "User Query:", "State Variables to Predict:");
    json schema = json_after(text, "State Variables to Predict:");
    json out = json::object();
    for (const auto& [var, choices] : schema.items()) {
        std::string best = choices.at(0);
        std::size_t best_pos = std::string::npos;
        for (const auto& c : choices) {
            std::size_t pos = query.rfind(c.get<std::string>());
            if (pos != std::string::npos && (best_pos == std::string::npos || pos > best_pos)) {
                best = c.get<std::string>();
                best_pos = pos;
            }
        }
        out[var] = best;
    }
    return out.dump(2);
}

inline std::string rule_refine_query(const ChatRequest& req, std::uint64_t) {
    const std::string text = request_text(req);
    std::string query =
        text_between(text, "Original Query:", "Intended State Variables to Expose:");
    if (query.size() >= 2 && query.front() == '"' && query.back() == '"')
        query = query.substr(1, query.size() - 2);
    json exposed = json_after(text, "Intended State Variables to Expose:");
    std::vector<std::string> clauses;
    for (const auto& [var, val] : exposed.items())
        clauses.push_back("my " + var + " is now " + val.get<std::string>());
    return json{{"query", query + " For context: " + join(clauses, " and ") + "."}}.dump(2);
}

inline std::string rule_sample_answers(const ChatRequest& req, std::uint64_t seed) {
    const std::string text = request_text(req);
    std::string question = text_between(text, "**Question:**", "**Required Information Types:**");
    std::string variants_block =
        text_between(text, "**State Variants to Answer For:**", "**Instructions:**");
    std::uint64_t salt = mix64(seed, fnv1a64(text));

    static const std::vector<std::string> advice = {
        "start with one small weekly commitment and review it after a month",
        "block a fixed time slot and protect it from interruptions",
        "write down the plan and revisit it every Sunday evening",
        "pick the simplest option now and upgrade later if it sticks",
        "set a modest target first and raise it once it feels routine",
        "keep a short checklist and drop whatever you skip twice"};

    json out = json::object();
    int vi = 1;
    for (const auto& line : numbered_lines(variants_block)) {
        std::vector<std::string> clauses;
        static const std::regex pair_re(R"(([A-Za-z0-9_]+)=([A-Za-z0-9_]+))");
        for (auto it = std::sregex_iterator(line.begin(), line.end(), pair_re);
             it != std::sregex_iterator(); ++it)
            clauses.push_back("your " + std::string((*it)[1]) + " is " + std::string((*it)[2]));
        std::string a = "Since " + join(clauses, " and ") + ", I would " +
                        advice[mix64(salt, fnv1a64(line)) % advice.size()] + ".";
        out["variant_" + std::to_string(vi++)] = a;
    }
    return out.dump(2);
}

inline std::string rule_check_answer(const ChatRequest& req, std::uint64_t) {
    const std::string text = request_text(req);
    std::string answer =
        text_between(text, "**Answer to Evaluate:**", "**Available State Variants (Choices):**");
    std::string choices_block =
        text_between(text, "**Available State Variants (Choices):**", "**Instructions:**");
    auto answer_pairs = option_pairs(answer);

    int best = 1, best_score = -1, idx = 1;
    for (const auto& line : numbered_lines(choices_block)) {
        int score = 0;
        static const std::regex pair_re(R"(([A-Za-z0-9_]+)=([A-Za-z0-9_]+))");
        for (auto it = std::sregex_iterator(line.begin(), line.end(), pair_re);
             it != std::sregex_iterator(); ++it) {
            auto found = answer_pairs.find((*it)[1]);
            if (found != answer_pairs.end() && found->second == std::string((*it)[2])) ++score;
        }
        if (score > best_score) {
            best_score = score;
            best = idx;
        }
        ++idx;
    }
    return std::to_string(best);
}

inline std::string rule_refine_answer(const ChatRequest& req, std::uint64_t) {
    const std::string text = request_text(req);
    std::string target = text_between(
        text, "**Target State Variant (the answer should correspond to this):**",
        "**Other State Variants (the answer should be distinguishable from these):**");
    std::string answer = text_between(text, "**Current Answer to Refine:**", "**Instructions:**");
    std::vector<std::string> clauses;
    static const std::regex pair_re(R"(([A-Za-z0-9_]+)=([A-Za-z0-9_]+))");
    for (auto it = std::sregex_iterator(target.begin(), target.end(), pair_re);
         it != std::sregex_iterator(); ++it)
        clauses.push_back("your " + std::string((*it)[1]) + " is " + std::string((*it)[2]));
    return json{{"answer", answer + " This fits best because " + join(clauses, " and ") + "."}}
        .dump(2);
}

// ─── Interaction rules ───────────────────────────────────────────────────────

inline std::string rule_followup(const ChatRequest& req, std::uint64_t seed) {
    static const std::vector<std::string> pool = {
        "That's helpful! Could you also tell me about timing?",
        "Thanks for that information. I'm also curious about common pitfalls.",
        "That makes sense. What about keeping it sustainable?",
        "Good to know. Is there anything else I should consider regarding preparation?",
        "Interesting. How would you measure whether it's working?",
        "Appreciate it. What would a realistic first week look like?",
        "Understood. Anything I should avoid early on?",
        "Nice. Could you break that into smaller steps?"};
    return pool[mix64(seed, fnv1a64(request_text(req))) % pool.size()];
}

inline std::string rule_assistant_reply(const ChatRequest& req, std::uint64_t seed) {
    static const std::vector<std::string> pool = {
        "Here's a practical suggestion: start small, review weekly, and adjust as needed.",
        "I'd begin with the simplest workable option and iterate from there.",
        "Noted. A steady routine with a short weekly review tends to work well.",
        "A reasonable approach is to set one clear priority and defer the rest.",
        "Consider a trial period of two weeks before committing further.",
        "Keep the plan light: one main goal, one backup, and a fixed check-in."};
    return pool[mix64(seed, fnv1a64(request_text(req))) % pool.size()];
}

// ─── Memory extraction ───────────────────────────────────────────────────────

struct CannedExtraction {
    const char* input;
    const char* output_json;  // ordered dict literal
};

/// Few-shot behaviours reproduced verbatim, plus one overwrite case used by
/// tests. A perfectly obedient extractor answers its own examples this way.
inline const std::vector<CannedExtraction>& canned_extractions() {
    static const std::vector<CannedExtraction> v = {
        {"Hi.", "{}"},
        {"There are branches in trees.", "{}"},
        {"Hi, I am looking for a restaurant in San Francisco.",
         R"({"food_plan": "Looking for a restaurant in San Francisco"})"},
        {"Yesterday, I had a meeting with John at 3pm. We discussed the new project.",
         R"({"activities_yesterday": "Had a meeting with John at 3pm, discussed the new project"})"},
        {"Hi, my name is John. I am a software engineer.",
         R"({"basic_profile": "Name is John, a software engineer"})"},
        {"Me favourite movies are Inception and Interstellar. My favourite food is pizza.",
         R"({"entertainment": "Favourite movies are Inception and Interstellar", "food": "Favourite food is pizza"})"},
        {"My favourite food is sushi now.", R"({"food": "Favourite food is sushi"})"},
    };
    return v;
}

inline std::string rule_memory_update(const ChatRequest& req, std::uint64_t) {
    const std::string text = request_text(req);
    std::size_t at = text.rfind("Conversation:");
    std::string convo = at == std::string::npos ? text : text.substr(at + 13);

    ordered_json facts = ordered_json::object();
    for (const auto& line : split_lines(convo)) {
        if (line.rfind("User: ", 0) != 0) continue;
        std::string content = trim(line.substr(6));
        bool canned = false;
        for (const auto& c : canned_extractions()) {
            if (content == c.input) {
                ordered_json o = ordered_json::parse(c.output_json);
                for (const auto& [k, v] : o.items()) facts[k] = v;
                canned = true;
                break;
            }
        }
        if (canned) continue;
        static const std::regex my(R"([Mm]y ([A-Za-z0-9_]+) is (?:now )?([A-Za-z0-9_]+))");
        for (auto it = std::sregex_iterator(content.begin(), content.end(), my);
             it != std::sregex_iterator(); ++it)
            facts[std::string((*it)[1])] = std::string((*it)[2]);
    }
    return facts.dump(2);
}

// ─── Evaluation rules ────────────────────────────────────────────────────────

enum class AnswerStyle { memoryful, uniform_random };

inline std::vector<std::string> parse_options(const std::string& last_message) {
    return numbered_lines(last_message);
}

inline std::string rule_eval_overall(const ChatRequest& req, std::uint64_t seed, AnswerStyle style) {
    const std::string& last = req.messages.back().content;
    auto options = parse_options(last);
    if (options.empty()) return R"({"answer": 1})";
    if (style == AnswerStyle::uniform_random) {
        std::uint64_t k = mix64(seed, fnv1a64(request_text(req))) % options.size();
        return "```json\n{\"answer\": " + std::to_string(k + 1) + "}\n```";
    }
    auto known = current_value_scan(context_text(req));
    int best = 1, best_score = -1;
    for (std::size_t i = 0; i < options.size(); ++i) {
        int score = 0;
        for (const auto& [var, val] : option_pairs(options[i])) {
            auto it = known.find(var);
            if (it != known.end() && it->second == val) ++score;
        }
        if (score > best_score) {
            best_score = score;
            best = int(i) + 1;
        }
    }
    return "```json\n{\"answer\": " + std::to_string(best) + "}\n```";
}

inline std::string rule_eval_utilization(const ChatRequest& req, std::uint64_t) {
    const std::string& last = req.messages.back().content;
    std::string state_block = text_between(
        last, "Given that my current relevant preferences and state information are as follows:",
        "Please select the most suitable answer");
    auto truth = current_value_scan(state_block);
    auto options = parse_options(last);
    int best = 1, best_score = -1;
    for (std::size_t i = 0; i < options.size(); ++i) {
        int score = 0;
        for (const auto& [var, val] : option_pairs(options[i])) {
            auto it = truth.find(var);
            if (it != truth.end() && it->second == val) ++score;
        }
        if (score > best_score) {
            best_score = score;
            best = int(i) + 1;
        }
    }
    return "```json\n{\"answer\": " + std::to_string(best) + "}\n```";
}

inline std::string rule_eval_diagnosis(const ChatRequest& req, std::uint64_t seed,
                                       AnswerStyle style) {
    const std::string& last = req.messages.back().content;
    json schema;
    {
        auto [b, e] = amemgym::detail::scan_json_span(last, 0);
        if (b == std::string::npos) return "{}";
        schema = json::parse(last.substr(b, e - b), nullptr, false);
        if (schema.is_discarded() || !schema.is_object()) return "{}";
    }
    const std::string ctx = context_text(req);
    json out = json::object();
    for (const auto& [var, choices] : schema.items()) {
        if (!choices.is_array() || choices.empty()) continue;
        if (style == AnswerStyle::uniform_random) {
            std::uint64_t k =
                mix64(seed, mix64(fnv1a64(request_text(req)), fnv1a64(var))) % choices.size();
            out[var] = choices.at(k);
            continue;
        }
        std::size_t best_pos = std::string::npos;
        std::string best;
        for (const auto& c : choices) {
            std::size_t pos = ctx.rfind(c.get<std::string>());
            if (pos != std::string::npos && (best_pos == std::string::npos || pos > best_pos)) {
                best_pos = pos;
                best = c.get<std::string>();
            }
        }
        if (!best.empty()) out[var] = best;
    }
    return "```json\n" + out.dump(2) + "\n```";
}

// ─── Evolution rules ─────────────────────────────────────────────────────────

inline std::string rule_evolve(const ChatRequest& req, std::uint64_t) {
    const std::string text = request_text(req);
    std::string section = text_between(
        text, "Current 'Types of Information to Remember' section:", "Feedback summary");
    json feedback = json_after(text, "Feedback summary (from recent usage and evaluation):");

    std::string addition = "8. Track Recent State Changes: watch for new values replacing old "
                           "ones and overwrite stale entries promptly";
    if (feedback.contains("user_information_updates") &&
        feedback["user_information_updates"].is_object() &&
        !feedback["user_information_updates"].empty()) {
        std::vector<std::string> keys;
        for (const auto& [k, _] : feedback["user_information_updates"].items()) {
            keys.push_back(k);
            if (keys.size() == 3) break;
        }
        addition += ", especially " + join(keys, ", ");
    }
    addition += ".";

    // Idempotent: replace a previously added line instead of stacking copies.
    std::size_t prev = section.find("8. Track Recent State Changes");
    if (prev != std::string::npos) section = trim(section.substr(0, prev));
    std::string new_types = section + "\n" + addition;
    return json{{"new_types", new_types},
                {"changes", json::array({"added guidance on tracking state changes"})}}
        .dump(2);
}

inline std::string rule_fact_check(const ChatRequest& req, std::uint64_t) {
    const std::string text = request_text(req);
    std::string document =
        text_between(text, "User's Conversational History Summary:", "Claims about user:");
    std::string claims_block =
        text_between(text, "Claims about user:", "For each numbered claim");
    json out = json::object();
    int i = 1;
    for (const auto& claim : numbered_lines(claims_block))
        out[std::to_string(i++)] = contains(document, trim(claim)) ? "yes" : "no";
    return out.dump(2);
}

// ─── Assembly ────────────────────────────────────────────────────────────────

/// Full rule set covering every tag the gym issues.
inline std::vector<TaggedRule> world_rules(AnswerStyle style = AnswerStyle::memoryful) {
    auto wrap = [](std::string (*fn)(const ChatRequest&, std::uint64_t)) {
        return [fn](const ChatRequest& r, std::uint64_t s) { return fn(r, s); };
    };
    std::vector<TaggedRule> rules;
    rules.push_back({"c3_sample_profile", wrap(rule_sample_profile)});
    rules.push_back({"c3_sample_questions", wrap(rule_sample_questions)});
    rules.push_back({"c3_refine_schema", wrap(rule_refine_schema)});
    rules.push_back({"c3_fix_schema", wrap(rule_fix_schema)});
    rules.push_back({"c3_initial_state", wrap(rule_initial_state)});
    rules.push_back({"c3_state_updates", wrap(rule_state_updates)});
    rules.push_back({"c3_elaborate_updates", wrap(rule_elaborate_updates)});
    rules.push_back({"c3_update_queries", wrap(rule_update_queries)});
    rules.push_back({"c3_initial_queries", wrap(rule_initial_queries)});
    rules.push_back({"c3_check_query", wrap(rule_check_query)});
    rules.push_back({"c3_refine_query", wrap(rule_refine_query)});
    rules.push_back({"c3_sample_answers", wrap(rule_sample_answers)});
    rules.push_back({"c3_check_answer", wrap(rule_check_answer)});
    rules.push_back({"c3_refine_answer", wrap(rule_refine_answer)});
    rules.push_back({"c4_followup", wrap(rule_followup)});
    rules.push_back({"assistant_reply", wrap(rule_assistant_reply)});
    rules.push_back({"c4_memory_update", wrap(rule_memory_update)});
    rules.push_back({"c5_overall", [style](const ChatRequest& r, std::uint64_t s) {
                         return rule_eval_overall(r, s, style);
                     }});
    rules.push_back({"c5_utilization", wrap(rule_eval_utilization)});
    rules.push_back({"c5_diagnosis", [style](const ChatRequest& r, std::uint64_t s) {
                         return rule_eval_diagnosis(r, s, style);
                     }});
    rules.push_back({"c6_evolve", wrap(rule_evolve)});
    rules.push_back({"c6_fact_check", wrap(rule_fact_check)});
    return rules;
}

inline std::shared_ptr<ScriptedChatBackend> make_chat(std::uint64_t seed,
                                                      AnswerStyle style = AnswerStyle::memoryful) {
    return std::make_shared<ScriptedChatBackend>(world_rules(style), seed);
}

inline std::shared_ptr<ScriptedEmbeddingBackend> make_embed(std::uint64_t seed) {
    return std::make_shared<ScriptedEmbeddingBackend>(seed);
}

}  // namespace amemgym::scripted
