#include <catch2/catch_amalgamated.hpp>

#include <atomic>

#include "amemgym/backend.hpp"
#include "amemgym/prompts.hpp"
#include "amemgym/scripted.hpp"

using namespace amemgym;

// ─── Template rendering ──────────────────────────────────────────────────────

TEST_CASE("template slots substitute and doubled braces stay literal") {
    PromptTemplate tpl{"t", "Hello {name}, {{json}} uses {count} keys}}"};
    std::string out = render_template(tpl, {{"name", "Ada"}, {"count", "3"}});
    CHECK(out == "Hello Ada, {json} uses 3 keys}");
}

TEST_CASE("missing slots and unterminated placeholders are errors") {
    PromptTemplate tpl{"t", "value: {missing}"};
    CHECK_THROWS_AS(render_template(tpl, {}), Error);
    PromptTemplate bad{"t", "open {never closed"};
    CHECK_THROWS_AS(render_template(bad, {{"never closed", "x"}}), Error);
}

TEST_CASE("every registered prompt template is retrievable and non-empty") {
    for (const auto& id :
         {"c3_sample_profile", "c3_sample_questions", "c3_refine_schema", "c3_fix_schema",
          "c3_initial_state", "c3_state_updates", "c3_elaborate_updates", "c3_update_queries",
          "c3_initial_queries", "c3_check_query", "c3_refine_query", "c3_sample_answers",
          "c3_check_answer", "c3_refine_answer", "c4_followup", "c4_memory_update", "c5_overall",
          "c5_utilization", "c5_diagnosis", "c6_evolve_system", "c6_evolve_user",
          "c6_fact_check"}) {
        const PromptTemplate& t = prompt(id);
        CHECK(t.id == id);
        CHECK_FALSE(t.body.empty());
    }
    CHECK_THROWS_AS(prompt("no_such_template"), Error);
    CHECK_FALSE(assistant_preamble().empty());
}

// ─── JSON extraction ─────────────────────────────────────────────────────────

TEST_CASE("json extraction finds objects in fences, prose, and nesting") {
    CHECK(extract_json(R"({"a": 1})").at("a") == 1);
    CHECK(extract_json("```json\n{\"a\": 2}\n```").at("a") == 2);
    CHECK(extract_json("Sure! Here you go: {\"a\": {\"b\": [1, 2]}} hope it helps")
              .at("a")
              .at("b")[1] == 2);
    CHECK(extract_json(R"(text {"s": "brace } inside", "t": "quote \" inside"} tail)")
              .at("s") == "brace } inside");
    CHECK(extract_json("[1, 2, 3]").size() == 3);
    CHECK_THROWS_AS(extract_json("no json here"), Error);
    CHECK_THROWS_AS(extract_json("{broken"), Error);
}

// ─── Scripted chat backend ───────────────────────────────────────────────────

namespace {
ChatRequest tagged(const std::string& tag, const std::string& text = "hi") {
    ChatRequest r;
    r.tag = tag;
    r.messages = {{Role::user, text}};
    return r;
}
}  // namespace

TEST_CASE("scripted rules match by tag with first-wins and wildcard fallback") {
    std::vector<TaggedRule> rules = {
        {"alpha", [](const ChatRequest&, std::uint64_t) { return "first"; }},
        {"alpha", [](const ChatRequest&, std::uint64_t) { return "shadowed"; }},
        {"*", [](const ChatRequest&, std::uint64_t) { return "fallback"; }},
    };
    ScriptedChatBackend be(rules, 1);
    CHECK(be.complete(tagged("alpha")) == "first");
    CHECK(be.complete(tagged("other")) == "fallback");
    CHECK(be.calls("alpha") == 1);
    CHECK(be.calls("other") == 1);
    CHECK(be.total_calls() == 2);

    ScriptedChatBackend strict({{"only", [](const ChatRequest&, std::uint64_t) { return "x"; }}},
                               1);
    CHECK_THROWS_AS(strict.complete(tagged("unknown")), Error);
}

TEST_CASE("scripted responses are pure functions of request and seed") {
    auto echo_seed = [](const ChatRequest& r, std::uint64_t s) {
        return r.messages.back().content + "#" + std::to_string(s);
    };
    ScriptedChatBackend a({{"*", echo_seed}}, 7), b({{"*", echo_seed}}, 7), c({{"*", echo_seed}}, 8);
    CHECK(a.complete(tagged("t", "q")) == b.complete(tagged("t", "q")));
    CHECK(a.complete(tagged("t", "q")) != c.complete(tagged("t", "q")));
}

// ─── Scripted embeddings ─────────────────────────────────────────────────────

TEST_CASE("scripted embeddings are unit-length, deterministic, seed-sensitive") {
    ScriptedEmbeddingBackend e1(3), e2(3), e3(4);
    auto v1 = e1.embed({"the quick brown fox", "the quick brown fox", "a different text"});
    REQUIRE(v1.size() == 3);
    CHECK(v1[0].size() == ScriptedEmbeddingBackend::kDim);
    CHECK(v1[0] == v1[1]);
    CHECK(v1[0] != v1[2]);
    double norm = 0;
    for (double x : v1[0]) norm += x * x;
    CHECK(norm == Catch::Approx(1.0).epsilon(1e-9));
    CHECK(e2.embed({"the quick brown fox"})[0] == v1[0]);
    CHECK(e3.embed({"the quick brown fox"})[0] != v1[0]);
    CHECK(e1.dimension() == ScriptedEmbeddingBackend::kDim);
}

// ─── Retry and repair ────────────────────────────────────────────────────────

namespace {
class FlakyBackend : public ChatBackend {
public:
    FlakyBackend(int failures, std::string reply)
        : failures_(failures), reply_(std::move(reply)) {}
    std::string complete(const ChatRequest&) override {
        if (attempts_++ < failures_) throw Error(ErrorKind::backend, "transport: synthetic");
        return reply_;
    }
    std::string descriptor() const override { return "flaky"; }
    int attempts() const { return attempts_; }

private:
    int failures_;
    std::string reply_;
    int attempts_ = 0;
};
}  // namespace

TEST_CASE("retry policy retries transient failures then surfaces the error") {
    RetryPolicy fast;
    fast.max_attempts = 3;
    fast.base_delay_ms = 0;

    FlakyBackend twice(2, "ok");
    CHECK(complete_with_retry(twice, tagged("t"), fast) == "ok");
    CHECK(twice.attempts() == 3);

    FlakyBackend always(99, "never");
    CHECK_THROWS_AS(complete_with_retry(always, tagged("t"), fast), Error);
    CHECK(always.attempts() == 3);
}

namespace {
class AuthFailBackend : public ChatBackend {
public:
    std::string complete(const ChatRequest&) override {
        ++attempts_;
        throw Error(ErrorKind::backend, "auth: bad key");
    }
    std::string descriptor() const override { return "authfail"; }
    int attempts_ = 0;
};
}  // namespace

TEST_CASE("auth failures are not retried") {
    RetryPolicy fast;
    fast.max_attempts = 5;
    fast.base_delay_ms = 0;
    AuthFailBackend be;
    CHECK_THROWS_AS(complete_with_retry(be, tagged("t"), fast), Error);
    CHECK(be.attempts_ == 1);
}

TEST_CASE("json completion re-asks once when the first reply fails to parse") {
    // The repair request carries the bad reply plus a corrective user turn, so
    // a rule can distinguish the two phases by message count.
    auto rule = [](const ChatRequest& r, std::uint64_t) -> std::string {
        return r.messages.size() > 1 ? R"({"fixed": true})" : "utter nonsense";
    };
    ScriptedChatBackend be({{"*", rule}}, 1);
    RetryPolicy fast;
    fast.base_delay_ms = 0;
    json j = complete_json(be, tagged("t"), fast);
    CHECK(j.at("fixed") == true);
    CHECK(be.total_calls() == 2);

    ScriptedChatBackend hopeless(
        {{"*", [](const ChatRequest&, std::uint64_t) { return std::string("never json"); }}}, 1);
    CHECK_THROWS_AS(complete_json(hopeless, tagged("t"), fast), Error);
}

// ─── Scripted world coverage ─────────────────────────────────────────────────

TEST_CASE("the scripted world answers every tag the gym emits") {
    auto chat = scripted::make_chat(11);
    for (const auto& tag : {"c4_followup", "assistant_reply"}) {
        ChatRequest r = tagged(tag, "User: I enjoy cycling.\nAssistant: Noted.");
        CHECK_FALSE(chat->complete(r).empty());
    }
    ChatRequest upd = tagged("c4_memory_update",
                             "Current memories: {}\nConversation:\nUser: My bike is now mtb.\n");
    json facts = extract_json(chat->complete(upd));
    CHECK(facts.at("bike") == "mtb");
}
