#pragma once

// The evaluated assistant: four interchangeable memory architectures behind a
// single handle. `llm` keeps the raw transcript, `rag` retrieves conversation
// chunks, `awe` retrieves extracted facts, `awi` maintains an in-context
// key-to-fact map updated by dict union.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <regex>
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

using ordered_json = nlohmann::ordered_json;

// ─── Agent configuration ─────────────────────────────────────────────────────

struct AgentConfig {
    std::string kind = "awe";  // llm | rag | awe | awi
    int freq = 2;              // rounds between update cycles
    int ns = 4;                // newest rounds always kept in context
    int topk = 30;             // retrieval depth for rag/awe
    int max_rounds = 4096;     // transcript budget before oldest rounds drop

    std::string descriptor() const {
        if (kind == "llm") return kind;
        return kind + "-(" + std::to_string(freq) + "," + std::to_string(ns) + "," +
               std::to_string(topk) + ")";
    }

    /// Parse "awe-(2,4,30)" or a bare kind ("llm") with default knobs.
    static AgentConfig parse(const std::string& text) {
        AgentConfig cfg;
        static const std::regex re(R"(^(llm|rag|awe|awi)(?:-\((\d+),(\d+),(\d+)\))?$)");
        std::smatch m;
        if (!std::regex_match(text, m, re))
            throw Error(ErrorKind::usage,
                        "bad agent descriptor '" + text + "', expected kind-(freq,ns,topk)");
        cfg.kind = m[1];
        if (m[2].matched) {
            cfg.freq = std::stoi(m[2]);
            cfg.ns = std::stoi(m[3]);
            cfg.topk = std::stoi(m[4]);
        }
        return cfg;
    }
};

// ─── Vector store ────────────────────────────────────────────────────────────

/// Similarity index over text entries. Selection is by cosine score with ties
/// broken toward older entries; the selected entries are returned in insertion
/// order so newer information appears later in rendered context.
class VectorIndex {
public:
    explicit VectorIndex(std::shared_ptr<EmbeddingBackend> embed) : embed_(std::move(embed)) {}

    void add(const std::string& text) {
        auto vecs = embed_->embed({text});
        entries_.push_back({text, normalized(vecs.at(0))});
    }

    bool contains(const std::string& text) const {
        for (const auto& e : entries_)
            if (e.text == text) return true;
        return false;
    }

    std::vector<std::string> top_k(const std::string& query, std::size_t k) const {
        if (entries_.empty() || k == 0) return {};
        auto qv = normalized(embed_->embed({query}).at(0));
        std::vector<std::pair<double, std::size_t>> scored;
        scored.reserve(entries_.size());
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            // Identical text always scores exactly 1.0, immune to rounding.
            double s = entries_[i].text == query ? 1.0 : dot(entries_[i].vec, qv);
            scored.push_back({s, i});
        }
        std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        scored.resize(std::min(k, scored.size()));
        std::vector<std::size_t> ids;
        for (const auto& [_, i] : scored) ids.push_back(i);
        std::sort(ids.begin(), ids.end());
        std::vector<std::string> out;
        for (std::size_t i : ids) out.push_back(entries_[i].text);
        return out;
    }

    double similarity(const std::string& a, const std::string& b) const {
        if (a == b) return 1.0;
        auto vecs = embed_->embed({a, b});
        return dot(normalized(vecs.at(0)), normalized(vecs.at(1)));
    }

    std::size_t size() const { return entries_.size(); }

    std::vector<std::string> texts() const {
        std::vector<std::string> out;
        for (const auto& e : entries_) out.push_back(e.text);
        return out;
    }

    /// Content identity: covers entry texts and order, not embedding values.
    std::uint64_t fingerprint() const {
        std::uint64_t h = fnv1a64("index");
        for (const auto& e : entries_) h = mix64(h, fnv1a64(e.text));
        return h;
    }

private:
    struct Entry {
        std::string text;
        std::vector<double> vec;
    };

    static std::vector<double> normalized(std::vector<double> v) {
        double n = 0.0;
        for (double x : v) n += x * x;
        n = std::sqrt(n);
        if (n > 0.0)
            for (double& x : v) x /= n;
        return v;
    }

    static double dot(const std::vector<double>& a, const std::vector<double>& b) {
        double s = 0.0;
        for (std::size_t i = 0; i < a.size() && i < b.size(); ++i) s += a[i] * b[i];
        return s;
    }

    std::vector<Entry> entries_;
    std::shared_ptr<EmbeddingBackend> embed_;
};

// ─── In-context fact map ─────────────────────────────────────────────────────

/// Key-to-fact map with dict-union update semantics: overwriting a key keeps
/// its original position, new keys append. Mirrors Python's `d |= other`.
class InContextStore {
public:
    void merge(const ordered_json& facts) {
        for (const auto& [k, v] : facts.items()) {
            std::string val = v.is_string() ? v.get<std::string>() : v.dump();
            if (!values_.count(k)) order_.push_back(k);
            values_[k] = std::move(val);
        }
    }

    bool empty() const { return order_.empty(); }
    std::size_t size() const { return order_.size(); }

    std::vector<std::pair<std::string, std::string>> items() const {
        std::vector<std::pair<std::string, std::string>> out;
        for (const auto& k : order_) out.push_back({k, values_.at(k)});
        return out;
    }

    /// Insertion-ordered JSON object text, e.g. {"food": "Favourite food is sushi"}.
    std::string render_json() const {
        ordered_json j = ordered_json::object();
        for (const auto& k : order_) j[k] = values_.at(k);
        return j.dump(2);
    }

    std::uint64_t fingerprint() const {
        std::uint64_t h = fnv1a64("facts");
        for (const auto& k : order_) h = mix64(h, mix64(fnv1a64(k), fnv1a64(values_.at(k))));
        return h;
    }

private:
    std::vector<std::string> order_;
    std::map<std::string, std::string> values_;
};

// ─── Assistant handle ────────────────────────────────────────────────────────

struct EvalAnswer {
    int index = -1;                       // 0-based option index, -1 = abstention
    std::vector<std::string> retrieved;   // memory texts shown while answering
};

class AssistantHandle {
public:
    virtual ~AssistantHandle() = default;
    virtual std::string respond(const std::string& user_message) = 0;
    virtual EvalAnswer evaluate(const std::string& question,
                                const std::vector<std::string>& options) = 0;
    virtual std::map<std::string, std::string> probe(const StateSchema& schema) = 0;
    virtual EvalAnswer evaluate_with_truth(const std::string& question,
                                           const std::vector<std::string>& options,
                                           const StateAssignment& state) = 0;
    virtual void ingest_replay(const std::vector<Message>& session) = 0;
    virtual std::string descriptor() const = 0;
};

// ─── Memory agent ────────────────────────────────────────────────────────────

class MemoryAgent : public AssistantHandle {
public:
    MemoryAgent(AgentConfig cfg, std::shared_ptr<ChatBackend> chat,
                std::shared_ptr<EmbeddingBackend> embed)
        : cfg_(std::move(cfg)),
          chat_(std::move(chat)),
          embed_(std::move(embed)),
          index_(embed_),
          policy_text_(prompt("c4_memory_update").body) {
        if (cfg_.kind != "llm" && cfg_.kind != "rag" && cfg_.kind != "awe" && cfg_.kind != "awi")
            throw Error(ErrorKind::usage, "unknown memory kind '" + cfg_.kind + "'");
        if ((cfg_.kind == "rag" || cfg_.kind == "awe") && !embed_)
            throw Error(ErrorKind::usage, cfg_.kind + " agent needs an embedding backend");
    }

    // ── Conversation ──

    std::string respond(const std::string& user_message) override {
        ChatRequest req;
        req.messages = build_context(user_message);
        req.messages.push_back({Role::user, user_message});
        req.tag = "assistant_reply";
        std::string reply = complete_with_retry(*chat_, req, retry_);
        short_term_.push_back({Role::user, user_message});
        short_term_.push_back({Role::assistant, reply});
        enforce_transcript_budget();
        maybe_update();
        return reply;
    }

    void ingest_replay(const std::vector<Message>& session) override {
        if (session.size() % 2 != 0)
            throw Error(ErrorKind::validation, "replay session must hold whole rounds");
        for (std::size_t i = 0; i + 1 < session.size(); i += 2) {
            if (session[i].role != Role::user || session[i + 1].role != Role::assistant)
                throw Error(ErrorKind::validation, "replay rounds must be user then assistant");
            short_term_.push_back(session[i]);
            short_term_.push_back(session[i + 1]);
            enforce_transcript_budget();
            maybe_update();
        }
    }

    // ── Evaluation (read-only) ──

    EvalAnswer evaluate(const std::string& question,
                        const std::vector<std::string>& options) override {
        std::string body = render_template(prompt("c5_overall").body,
                                           {{"query", question}, {"choices", numbered(options)}});
        ChatRequest req;
        req.messages = build_context(question);
        req.messages.push_back({Role::user, body});
        req.tag = "c5_overall";
        EvalAnswer out;
        out.retrieved = last_retrieved_;
        out.index = parse_choice(req, options.size());
        return out;
    }

    std::map<std::string, std::string> probe(const StateSchema& schema) override {
        json sj = json::object();
        for (const auto& v : schema.variables) sj[v.name] = v.choices;
        std::string schema_text = sj.dump(2);
        std::string body = render_template(prompt("c5_diagnosis").body,
                                           {{"state_schema", schema_text}});
        ChatRequest req;
        req.messages = build_context(schema_text);
        req.messages.push_back({Role::user, body});
        req.tag = "c5_diagnosis";

        std::map<std::string, std::string> out;
        try {
            json j = complete_json(*chat_, req, retry_);
            if (j.is_object())
                for (const auto& [k, v] : j.items())
                    if (v.is_string() && schema.has(k)) out[k] = v.get<std::string>();
        } catch (const Error& e) {
            log_warn(std::string("state probe failed: ") + e.what());
        }
        return out;
    }

    EvalAnswer evaluate_with_truth(const std::string& question,
                                   const std::vector<std::string>& options,
                                   const StateAssignment& state) override {
        std::string state_lines;
        for (const auto& [k, v] : state) state_lines += "- " + k + ": " + v + "\n";
        std::string body = render_template(prompt("c5_utilization").body,
                                           {{"query", question},
                                            {"state", trim(state_lines)},
                                            {"choices", numbered(options)}});
        // Memory is bypassed entirely: the true state rides in the prompt.
        ChatRequest req;
        req.messages.push_back({Role::system, assistant_preamble()});
        req.messages.push_back({Role::user, body});
        req.tag = "c5_utilization";
        EvalAnswer out;
        out.index = parse_choice(req, options.size());
        return out;
    }

    // ── Introspection ──

    std::string descriptor() const override { return cfg_.descriptor(); }
    const AgentConfig& config() const { return cfg_; }

    int update_cycles() const { return update_cycles_; }
    int extraction_calls() const { return extraction_calls_; }
    int overflow_events() const { return overflow_events_; }
    std::size_t short_term_rounds() const { return short_term_.size() / 2; }
    std::size_t store_size() const {
        return cfg_.kind == "awi" ? facts_.size() : index_.size();
    }
    const InContextStore& facts() const { return facts_; }
    const VectorIndex& index() const { return index_; }

    const std::string& policy_text() const { return policy_text_; }
    void set_policy_text(std::string text) { policy_text_ = std::move(text); }

    /// Identity of everything the agent remembers: store content plus the
    /// unflushed transcript. Embedding values are deliberately excluded.
    std::uint64_t memory_fingerprint() const {
        std::uint64_t h = fnv1a64(cfg_.kind);
        h = mix64(h, cfg_.kind == "awi" ? facts_.fingerprint() : index_.fingerprint());
        for (const auto& m : short_term_) h = mix64(h, fnv1a64(m.content));
        return h;
    }

    json dump_memory() const {
        json j;
        j["kind"] = cfg_.kind;
        j["short_term_rounds"] = short_term_rounds();
        j["update_cycles"] = update_cycles_;
        j["extraction_calls"] = extraction_calls_;
        j["overflow_events"] = overflow_events_;
        if (cfg_.kind == "awi") {
            json facts = json::object();
            for (const auto& [k, v] : facts_.items()) facts[k] = v;
            j["facts"] = facts;
            j["fact_order"] = json::array();
            for (const auto& [k, _] : facts_.items()) j["fact_order"].push_back(k);
        } else if (cfg_.kind != "llm") {
            j["entries"] = index_.texts();
        }
        return j;
    }

private:
    // ── Context assembly ──

    std::vector<Message> build_context(const std::string& retrieval_query) {
        std::string system = assistant_preamble();
        last_retrieved_.clear();
        if (cfg_.kind == "rag" || cfg_.kind == "awe") {
            if (index_.size() > 0) {
                last_retrieved_ = index_.top_k(retrieval_query, std::size_t(cfg_.topk));
                if (!last_retrieved_.empty()) {
                    system += "\n\nRelevant memories:\n";
                    for (const auto& t : last_retrieved_) system += "- " + t + "\n";
                }
            }
        } else if (cfg_.kind == "awi") {
            if (!facts_.empty()) {
                system += "\n\nKnown user information:\n";
                for (const auto& [k, v] : facts_.items()) {
                    system += "- " + k + ": " + v + "\n";
                    last_retrieved_.push_back(k + ": " + v);
                }
            }
        }
        std::vector<Message> out;
        out.push_back({Role::system, system});
        for (const auto& m : short_term_) out.push_back(m);
        return out;
    }

    static std::string numbered(const std::vector<std::string>& options) {
        std::string s;
        for (std::size_t i = 0; i < options.size(); ++i)
            s += std::to_string(i + 1) + ". " + options[i] + "\n";
        return trim(s);
    }

    int parse_choice(ChatRequest& req, std::size_t n_options) {
        try {
            json j = complete_json(*chat_, req, retry_);
            if (!j.is_object() || !j.contains("answer") || !j["answer"].is_number_integer()) {
                log_warn("evaluation reply lacked an integer answer; counting as abstention");
                return -1;
            }
            int k = j["answer"].get<int>();
            if (k < 1 || std::size_t(k) > n_options) {
                log_warn("evaluation answer " + std::to_string(k) +
                         " out of range; counting as abstention");
                return -1;
            }
            return k - 1;
        } catch (const Error& e) {
            log_warn(std::string("evaluation failed, counting as abstention: ") + e.what());
            return -1;
        }
    }

    // ── Memory maintenance ──

    void maybe_update() {
        if (cfg_.kind == "llm" || cfg_.freq <= 0) return;
        ++rounds_since_update_;
        if (rounds_since_update_ < cfg_.freq) return;
        rounds_since_update_ = 0;
        ++update_cycles_;
        flush();
    }

    void flush() {
        long rounds = long(short_term_.size() / 2);
        long flushable = rounds - cfg_.ns;
        if (flushable <= 0) return;

        std::vector<Message> old(short_term_.begin(), short_term_.begin() + flushable * 2);
        if (cfg_.kind == "rag") {
            for (long r = 0; r < flushable; ++r)
                index_.add("User: " + old[std::size_t(r * 2)].content +
                           "\nAssistant: " + old[std::size_t(r * 2 + 1)].content);
            short_term_.erase(short_term_.begin(), short_term_.begin() + flushable * 2);
            return;
        }

        std::string conversation;
        for (const auto& m : old)
            conversation += (m.role == Role::user ? "User: " : "Assistant: ") + m.content + "\n";

        std::string current = cfg_.kind == "awi" ? facts_.render_json() : "{}";
        ++extraction_calls_;
        ordered_json extracted;
        try {
            std::string body = render_template(
                policy_text_, {{"current_memories", current}, {"conversation", trim(conversation)}});
            ChatRequest req;
            req.messages.push_back({Role::user, body});
            req.tag = "c4_memory_update";
            std::string raw = complete_with_retry(*chat_, req, retry_);
            extracted = parse_fact_dict(raw);
        } catch (const Error& e) {
            log_warn(std::string("memory extraction failed, retaining rounds: ") + e.what());
            return;
        }

        if (cfg_.kind == "awi") {
            facts_.merge(extracted);
        } else {
            for (const auto& [k, v] : extracted.items()) {
                std::string line =
                    k + ": " + (v.is_string() ? v.get<std::string>() : v.dump());
                if (!index_.contains(line)) index_.add(line);
            }
        }
        short_term_.erase(short_term_.begin(), short_term_.begin() + flushable * 2);
    }

    /// Fact dicts keep their key order: overwrite semantics depend on it.
    static ordered_json parse_fact_dict(const std::string& raw) {
        ordered_json j = ordered_json::parse(raw, nullptr, false);
        if (!j.is_discarded() && j.is_object()) return j;
        // Look for the first balanced object in the reply.
        for (std::size_t i = 0; i < raw.size(); ++i) {
            if (raw[i] != '{') continue;
            auto [b, e] = amemgym::detail::scan_json_span(raw, i);
            if (b == std::string::npos) break;
            ordered_json cand = ordered_json::parse(raw.substr(b, e - b), nullptr, false);
            if (!cand.is_discarded() && cand.is_object()) return cand;
            i = e - 1;
        }
        throw Error(ErrorKind::parse, "extraction reply held no JSON object: " + raw);
    }

    void enforce_transcript_budget() {
        while (long(short_term_.size() / 2) > cfg_.max_rounds) {
            short_term_.erase(short_term_.begin(), short_term_.begin() + 2);
            ++overflow_events_;
            log_warn("transcript budget exceeded, dropped oldest round");
        }
    }

    AgentConfig cfg_;
    std::shared_ptr<ChatBackend> chat_;
    std::shared_ptr<EmbeddingBackend> embed_;
    VectorIndex index_;
    InContextStore facts_;
    std::string policy_text_;
    std::vector<Message> short_term_;
    std::vector<std::string> last_retrieved_;
    RetryPolicy retry_;
    int rounds_since_update_ = 0;
    int update_cycles_ = 0;
    int extraction_calls_ = 0;
    int overflow_events_ = 0;
};

inline std::unique_ptr<MemoryAgent> make_agent(const AgentConfig& cfg,
                                               std::shared_ptr<ChatBackend> chat,
                                               std::shared_ptr<EmbeddingBackend> embed) {
    return std::make_unique<MemoryAgent>(cfg, std::move(chat), std::move(embed));
}

}  // namespace amemgym
