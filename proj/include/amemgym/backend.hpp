#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "amemgym/log.hpp"
#include "amemgym/model.hpp"
#include "amemgym/prompts.hpp"
#include "amemgym/util.hpp"

namespace amemgym {

// ─── Request / backend interfaces ────────────────────────────────────────────

/// One chat completion request. `tag` names the pipeline step issuing it
/// (template id or agent-side tag); scripted rule matching keys on it.
struct ChatRequest {
    std::vector<Message> messages;
    double temperature = 0.0;
    int max_tokens = 8192;
    std::string tag;
};

class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    /// Returns the completion text. Throws Error(backend/...) on failure.
    /// Implementations must be callable from multiple threads.
    virtual std::string complete(const ChatRequest& request) = 0;
    virtual std::string descriptor() const = 0;
};

class EmbeddingBackend {
public:
    virtual ~EmbeddingBackend() = default;
    virtual std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) = 0;
    virtual std::size_t dimension() const = 0;
    virtual std::string descriptor() const = 0;
};

// ─── Template rendering ──────────────────────────────────────────────────────

/// Substitute {slot} placeholders. "{{" and "}}" are literal braces. Missing
/// slots are an error naming the slot; unknown bindings are ignored with a
/// warning so callers notice typos without breaking a run.
inline std::string render_template(const PromptTemplate& tpl,
                                   const std::map<std::string, std::string>& bindings) {
    std::string out;
    out.reserve(tpl.body.size());
    std::set<std::string> used;
    const std::string& b = tpl.body;
    for (std::size_t i = 0; i < b.size();) {
        char c = b[i];
        if (c == '{') {
            if (i + 1 < b.size() && b[i + 1] == '{') {
                out += '{';
                i += 2;
                continue;
            }
            std::size_t close = b.find('}', i + 1);
            if (close == std::string::npos)
                throw Error(ErrorKind::validation,
                            "template " + tpl.id + ": unterminated placeholder");
            std::string slot = b.substr(i + 1, close - i - 1);
            auto it = bindings.find(slot);
            if (it == bindings.end())
                throw Error(ErrorKind::validation,
                            "template " + tpl.id + ": unfilled slot {" + slot + "}");
            out += it->second;
            used.insert(slot);
            i = close + 1;
            continue;
        }
        if (c == '}' && i + 1 < b.size() && b[i + 1] == '}') {
            out += '}';
            i += 2;
            continue;
        }
        out += c;
        ++i;
    }
    for (const auto& [k, _] : bindings)
        if (!used.count(k))
            log_warn("template " + tpl.id + ": unused binding '" + k + "'");
    return out;
}

/// Render a raw body string, for texts edited at runtime.
inline std::string render_template(const std::string& body,
                                   const std::map<std::string, std::string>& bindings) {
    PromptTemplate tpl;
    tpl.id = "(inline)";
    tpl.body = body;
    return render_template(tpl, bindings);
}

/// Single-user-message request for a rendered template.
inline ChatRequest make_request(const std::string& template_id,
                                const std::map<std::string, std::string>& bindings) {
    ChatRequest req;
    req.tag = template_id;
    req.messages.push_back({Role::user, render_template(prompt(template_id), bindings)});
    return req;
}

// ─── JSON extraction ─────────────────────────────────────────────────────────

namespace detail {

/// Span of the first balanced {...} or [...] structure starting at or after
/// `from`, respecting string literals and escapes. Bracket kinds share one
/// depth counter; a mismatched candidate simply fails the later parse.
inline std::pair<std::size_t, std::size_t> scan_json_span(const std::string& s, std::size_t from) {
    for (std::size_t i = from; i < s.size(); ++i) {
        if (s[i] != '{' && s[i] != '[') continue;
        int depth = 0;
        bool in_string = false;
        for (std::size_t j = i; j < s.size(); ++j) {
            char c = s[j];
            if (in_string) {
                if (c == '\\')
                    ++j;
                else if (c == '"')
                    in_string = false;
                continue;
            }
            if (c == '"')
                in_string = true;
            else if (c == '{' || c == '[')
                ++depth;
            else if (c == '}' || c == ']') {
                if (--depth == 0) return {i, j + 1};
            }
        }
    }
    return {std::string::npos, std::string::npos};
}

}  // namespace detail

/// Pull the first parseable JSON value out of a completion that may be raw
/// JSON, fenced in ```json blocks, or embedded in prose. Throws
/// Error(parse) carrying the raw completion when nothing parses.
inline json extract_json(const std::string& completion) {
    std::string t = trim(completion);
    {
        json direct = json::parse(t, nullptr, false);
        if (!direct.is_discarded() && (direct.is_object() || direct.is_array())) return direct;
    }
    std::size_t from = 0;
    while (from < completion.size()) {
        auto [b, e] = detail::scan_json_span(completion, from);
        if (b == std::string::npos) break;
        json j = json::parse(completion.substr(b, e - b), nullptr, false);
        if (!j.is_discarded()) return j;
        from = b + 1;
    }
    throw Error(ErrorKind::parse, "no JSON found in completion: " + completion);
}

// ─── Retry ───────────────────────────────────────────────────────────────────

struct RetryPolicy {
    int max_attempts = 3;
    int base_delay_ms = 200;
    double multiplier = 2.0;
};

/// True for failures worth retrying (transport hiccups, 5xx). Auth errors and
/// other 4xx-class mistakes will not improve on a retry.
inline bool is_retryable(const Error& e) {
    if (e.kind() != ErrorKind::backend) return false;
    const std::string what = e.what();
    return what.rfind("auth:", 0) != 0 && what.rfind("bad_request:", 0) != 0;
}

/// complete() with exponential backoff. After exhaustion, throws a backend
/// error naming the request tag and the attempt count.
inline std::string complete_with_retry(ChatBackend& backend, const ChatRequest& request,
                                       const RetryPolicy& policy = {}) {
    std::string last;
    for (int attempt = 1; attempt <= std::max(1, policy.max_attempts); ++attempt) {
        try {
            return backend.complete(request);
        } catch (const Error& e) {
            if (!is_retryable(e)) throw;
            last = e.what();
            if (attempt == policy.max_attempts) break;
            auto delay = std::chrono::milliseconds(
                std::int64_t(policy.base_delay_ms * std::pow(policy.multiplier, attempt - 1)));
            if (delay.count() > 0) std::this_thread::sleep_for(delay);
        }
    }
    throw Error(ErrorKind::backend, "request '" + request.tag + "' failed after " +
                                        std::to_string(policy.max_attempts) +
                                        " attempts: " + last);
}

/// Completion that must be JSON. One malformed reply gets one automatic
/// repair re-ask before the parse error propagates.
inline json complete_json(ChatBackend& backend, const ChatRequest& request,
                          const RetryPolicy& policy = {}) {
    std::string raw = complete_with_retry(backend, request, policy);
    try {
        return extract_json(raw);
    } catch (const Error&) {
        ChatRequest repair = request;
        repair.messages.push_back({Role::assistant, raw});
        repair.messages.push_back({Role::user, "Return only valid JSON."});
        return extract_json(complete_with_retry(backend, repair, policy));
    }
}

// ─── Scripted chat backend ───────────────────────────────────────────────────

/// Deterministic rule: response text as a pure function of (request, seed).
using ScriptedRule = std::function<std::string(const ChatRequest&, std::uint64_t)>;

struct TaggedRule {
    std::string tag;  // exact tag to match; "*" matches anything
    ScriptedRule fn;
};

/// Offline stand-in for a chat model. First matching rule wins; a request no
/// rule matches is a backend error. Thread-safe; responses never depend on
/// call order.
class ScriptedChatBackend : public ChatBackend {
public:
    ScriptedChatBackend(std::vector<TaggedRule> rules, std::uint64_t seed)
        : rules_(std::move(rules)), seed_(seed) {}

    std::string complete(const ChatRequest& request) override {
        const TaggedRule* hit = nullptr;
        for (const auto& r : rules_)
            if (r.tag == request.tag || r.tag == "*") {
                hit = &r;
                break;
            }
        if (!hit)
            throw Error(ErrorKind::backend,
                        "scripted backend has no rule for tag '" + request.tag + "'");
        {
            std::lock_guard<std::mutex> lock(mu_);
            ++calls_[request.tag];
        }
        return hit->fn(request, seed_);
    }

    std::string descriptor() const override {
        return "scripted-chat(seed=" + std::to_string(seed_) + ")";
    }

    std::uint64_t seed() const { return seed_; }

    int calls(const std::string& tag) const {
        std::lock_guard<std::mutex> lock(mu_);
        auto it = calls_.find(tag);
        return it == calls_.end() ? 0 : it->second;
    }

    int total_calls() const {
        std::lock_guard<std::mutex> lock(mu_);
        int n = 0;
        for (const auto& [_, c] : calls_) n += c;
        return n;
    }

private:
    std::vector<TaggedRule> rules_;
    std::uint64_t seed_;
    mutable std::mutex mu_;
    std::map<std::string, int> calls_;
};

// ─── Scripted embeddings ─────────────────────────────────────────────────────

/// Seeded feature-hash of character trigrams into a fixed 64-dim space,
/// L2-normalized. Identical text always embeds identically; related strings
/// land near each other through shared trigrams.
class ScriptedEmbeddingBackend : public EmbeddingBackend {
public:
    static constexpr std::size_t kDim = 64;

    explicit ScriptedEmbeddingBackend(std::uint64_t seed) : seed_(seed) {}

    std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override {
        {
            std::lock_guard<std::mutex> lock(mu_);
            calls_ += 1;
            texts_embedded_ += int(texts.size());
        }
        std::vector<std::vector<double>> out;
        out.reserve(texts.size());
        for (const auto& t : texts) out.push_back(embed_one(t));
        return out;
    }

    std::size_t dimension() const override { return kDim; }

    std::string descriptor() const override {
        return "scripted-embed(d=64,seed=" + std::to_string(seed_) + ")";
    }

    int calls() const {
        std::lock_guard<std::mutex> lock(mu_);
        return calls_;
    }

    int texts_embedded() const {
        std::lock_guard<std::mutex> lock(mu_);
        return texts_embedded_;
    }

private:
    std::vector<double> embed_one(const std::string& text) const {
        std::vector<double> v(kDim, 0.0);
        if (text.empty()) {
            v[0] = 1.0;
            return v;
        }
        for (std::size_t i = 0; i + 3 <= text.size(); ++i) {
            std::uint64_t h = mix64(fnv1a64(std::string_view(text).substr(i, 3)), seed_);
            v[h % kDim] += (h >> 8) & 1 ? 1.0 : -1.0;
        }
        // Whole-string token so very short texts still get a signal.
        std::uint64_t h = mix64(fnv1a64(text), seed_);
        v[h % kDim] += (h >> 8) & 1 ? 1.0 : -1.0;
        double norm = 0.0;
        for (double x : v) norm += x * x;
        if (norm == 0.0) {
            v[0] = 1.0;
            return v;
        }
        norm = std::sqrt(norm);
        for (double& x : v) x /= norm;
        return v;
    }

    std::uint64_t seed_;
    mutable std::mutex mu_;
    int calls_ = 0;
    int texts_embedded_ = 0;
};

// ─── IO logging decorator ────────────────────────────────────────────────────

/// Wraps a backend and appends prompt/response pairs to a JSONL file.
class LoggingChatBackend : public ChatBackend {
public:
    LoggingChatBackend(std::shared_ptr<ChatBackend> inner, std::filesystem::path path)
        : inner_(std::move(inner)), path_(std::move(path)) {
        if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    }

    std::string complete(const ChatRequest& request) override {
        std::string response = inner_->complete(request);
        json msgs = json::array();
        for (const auto& m : request.messages)
            msgs.push_back(json{{"role", role_name(m.role)}, {"content", m.content}});
        json line{{"tag", request.tag}, {"messages", msgs}, {"response", response}};
        std::lock_guard<std::mutex> lock(mu_);
        std::ofstream out(path_, std::ios::app);
        out << line.dump() << "\n";
        return response;
    }

    std::string descriptor() const override { return inner_->descriptor(); }

private:
    std::shared_ptr<ChatBackend> inner_;
    std::filesystem::path path_;
    std::mutex mu_;
};

}  // namespace amemgym
