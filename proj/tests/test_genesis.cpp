#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "amemgym/genesis.hpp"
#include "amemgym/scripted.hpp"

using namespace amemgym;

namespace {

Blueprint make_bp(std::uint64_t seed, GenConfig cfg = GenConfig::base()) {
    auto chat = scripted::make_chat(seed);
    GenesisOptions opt;
    opt.config = cfg;
    auto pool = make_builtin_pool(1, seed);
    return generate_blueprint(chat, pool[0], opt, seed);
}

}  // namespace

// ─── Persona pools ───────────────────────────────────────────────────────────

TEST_CASE("the builtin persona pool is deterministic with distinct ids") {
    auto p1 = make_builtin_pool(5, 7);
    auto p2 = make_builtin_pool(5, 7);
    REQUIRE(p1.size() == 5);
    std::set<std::string> ids;
    for (std::size_t i = 0; i < p1.size(); ++i) {
        CHECK(p1[i].record.dump() == p2[i].record.dump());
        CHECK(p1[i].record.at("name").is_string());
        ids.insert(p1[i].source_id);
    }
    CHECK(ids.size() == 5);
    CHECK(make_builtin_pool(2, 8)[0].record.dump() != p1[0].record.dump());
}

TEST_CASE("persona pools load from jsonl with line-derived fallback ids") {
    std::string path = "/tmp/amemgym_test_pool.jsonl";
    atomic_write_file(path,
                      R"({"id": "alice", "name": "Alice", "occupation": "florist"})"
                      "\n"
                      R"({"name": "Bob", "occupation": "welder"})"
                      "\n");
    auto pool = load_persona_pool(path);
    REQUIRE(pool.size() == 2);
    CHECK(pool[0].source_id == "alice");
    CHECK(pool[1].source_id == "pool-2");
    CHECK(pool[1].record.at("name") == "Bob");
    CHECK_THROWS_AS(load_persona_pool("/tmp/definitely_missing_pool.jsonl"), Error);
}

// ─── Full generation ─────────────────────────────────────────────────────────

TEST_CASE("a generated blueprint passes every structural check") {
    Blueprint bp = make_bp(7);
    auto violations = validate_blueprint(bp);
    for (const auto& v : violations) UNSCOPED_INFO(v.code + ": " + v.detail);
    CHECK(violations.empty());

    CHECK(int(bp.questions.size()) == bp.config.num_questions);
    CHECK(int(bp.periods.size()) == bp.config.n_periods);
    CHECK_FALSE(bp.schema.variables.empty());

    SECTION("every question has a complete, distinct variant answer set") {
        for (const auto& q : bp.questions) {
            auto keys = enumerate_variants(bp.schema, q);
            CHECK(q.variants.size() == keys.size());
            std::set<std::string> answers;
            for (const auto& k : keys) {
                REQUIRE(q.variants.count(k));
                CHECK(answers.insert(q.variants.at(k)).second);
            }
        }
    }

    SECTION("initial exposure covers the whole schema at one to three variables each") {
        std::set<std::string> covered;
        for (const auto& e : bp.initial_queries) {
            CHECK(e.exposed.size() >= 1);
            CHECK(e.exposed.size() <= 3);
            for (const auto& [k, v] : e.exposed) {
                CHECK(bp.initial_state.at(k) == v);
                covered.insert(k);
            }
        }
        CHECK(covered.size() == bp.schema.variables.size());
    }

    SECTION("period exposures reveal exactly that period's updates") {
        for (const auto& p : bp.periods) {
            StateAssignment exposed;
            for (const auto& uq : p.update_queries)
                for (const auto& [k, v] : uq.exposed) exposed[k] = v;
            CHECK(exposed == p.updates);
        }
    }
}

TEST_CASE("alias map folds suffixed names onto canonical variables") {
    Blueprint bp = make_bp(7);
    CHECK_FALSE(bp.schema.alias_map.empty());
    for (const auto& [raw, canon] : bp.schema.alias_map) {
        CHECK(raw != canon);
        CHECK(bp.schema.has(canon));
        CHECK_FALSE(bp.schema.has(raw));
        CHECK(raw.rfind(canon, 0) == 0);  // raw = canon + suffix in the scripted world
    }
}

TEST_CASE("generation is deterministic in the seed") {
    CHECK(to_json(make_bp(21)).dump() == to_json(make_bp(21)).dump());
    CHECK(to_json(make_bp(21)).dump() != to_json(make_bp(22)).dump());
}

TEST_CASE("no variable changes more often than the configured cap under base config") {
    Blueprint bp = make_bp(13);
    std::map<std::string, int> changes;
    for (const auto& p : bp.periods)
        for (const auto& [k, _] : p.updates) ++changes[k];
    for (const auto& [k, n] : changes) {
        UNSCOPED_INFO(k + " changed " + std::to_string(n) + " times");
        CHECK(n <= bp.config.max_changes_per_state);
    }
}

TEST_CASE("per-period update counts respect the resolved budget") {
    Blueprint bp = make_bp(19);
    int budget = bp.config.resolved_changes_per_period(int(bp.schema.variables.size()));
    for (const auto& p : bp.periods) {
        CHECK_FALSE(p.updates.empty());
        CHECK(int(p.updates.size()) <= budget);
    }
}

TEST_CASE("the extended config produces the longer horizon") {
    Blueprint bp = make_bp(101, GenConfig::extra());
    CHECK(bp.periods.size() == 20);
    for (const auto& q : bp.questions) CHECK(q.required.size() == 3);
    CHECK(validate_blueprint(bp).empty());
}

// ─── Verifier loops ──────────────────────────────────────────────────────────

TEST_CASE("exposure verification exhaustion aborts generation") {
    // A checker that never confirms the exposed values forces refinement until
    // the attempt budget runs out, which must surface as a generation error.
    auto rules = scripted::world_rules();
    for (auto& r : rules)
        if (r.tag == "c3_check_query")
            r.fn = [](const ChatRequest&, std::uint64_t) {
                return std::string(R"({"never_the_right_var": "nope"})");
            };
    auto chat = std::make_shared<ScriptedChatBackend>(rules, 7);
    GenesisOptions opt;
    auto pool = make_builtin_pool(1, 7);
    Genesis g(chat, opt);
    try {
        g.generate(pool[0], 7);
        FAIL("generation should have exhausted the refinement budget");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::generation);
    }
}

TEST_CASE("question verification failures regenerate before giving up") {
    // An answer checker that always names variant 1 only accepts questions
    // whose probe happens to target variant 1; everything else must refine,
    // regenerate once, then abort with a generation error.
    auto rules = scripted::world_rules();
    for (auto& r : rules)
        if (r.tag == "c3_check_answer")
            r.fn = [](const ChatRequest&, std::uint64_t) { return std::string("1"); };
    auto chat = std::make_shared<ScriptedChatBackend>(rules, 7);
    GenesisOptions opt;
    auto pool = make_builtin_pool(1, 7);
    Genesis g(chat, opt);
    CHECK_THROWS_AS(g.generate(pool[0], 7), Error);
}
