#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <map>
#include <set>

#include "error.hpp"
#include "rng.hpp"
#include "sim.hpp"
#include "test_util.hpp"
#include "trace.hpp"
#include "util.hpp"

using namespace tp;

#ifndef TP_DATA_DIR
#define TP_DATA_DIR "data"
#endif

TEST_CASE("builtin archetype library validates and covers the six shapes") {
    ArchetypeLibrary lib = ArchetypeLibrary::builtin();
    REQUIRE(lib.archetypes.size() == 6);
    std::set<std::string> names;
    std::set<std::string> labels;
    for (const auto& a : lib.archetypes) {
        names.insert(a.name);
        labels.insert(a.behavior_label);
    }
    CHECK(names == std::set<std::string>{"two_phase_search", "slow_api", "fast_api", "code_exec",
                                         "image_gen", "plain_text"});
    CHECK(labels == std::set<std::string>{"Action", "Analysis", "Image", "Redirect", "PlainText"});
}

TEST_CASE("shipped archetype file matches the builtin library") {
    std::string path = std::string(TP_DATA_DIR) + "/archetypes.json";
    ArchetypeLibrary shipped = load_archetypes(path);
    ArchetypeLibrary builtin = ArchetypeLibrary::builtin();
    CHECK(format_archetypes(shipped) == format_archetypes(builtin));
}

TEST_CASE("generated traces satisfy trace invariants and their envelopes") {
    ArchetypeLibrary lib = ArchetypeLibrary::builtin();
    for (const auto& a : lib.archetypes) {
        for (uint64_t seed = 1; seed <= 50; ++seed) {
            Trace t = gen_trace(a, seed);
            validate_trace(t, "gen", seed);
            REQUIRE(!t.packets.empty());
            for (const auto& p : t.packets) CHECK(p.s >= 1);
            CHECK(*t.label == a.name);

            ArchetypeSignature obs = trace_signature(t);
            CHECK(obs.idle_min >= a.signature.idle_min - 1e-9);
            CHECK(obs.idle_max <= a.signature.idle_max + 1e-9);
            CHECK(obs.out_bytes_min >= a.signature.out_bytes_min - 1e-9);
            CHECK(obs.out_bytes_max <= a.signature.out_bytes_max + 1e-9);
            CHECK(obs.in_bytes_min >= a.signature.in_bytes_min - 1e-9);
            CHECK(obs.in_bytes_max <= a.signature.in_bytes_max + 1e-9);
        }
    }
}

TEST_CASE("specific archetype shapes") {
    ArchetypeLibrary lib = ArchetypeLibrary::builtin();

    // plain text: steady inbound stream, no long silence
    Trace plain = gen_trace(lib.by_name("plain_text"), 9);
    CHECK(trace_signature(plain).idle_max < 1.0);
    int inbound = 0;
    for (const auto& p : plain.packets)
        if (p.d < 0) ++inbound;
    CHECK(inbound >= 60);

    // slow api: a silence at least as long as the configured floor
    const auto& slow = lib.by_name("slow_api");
    Trace st = gen_trace(slow, 11);
    double floor = 0;
    for (const auto& ph : slow.phases) floor = std::max(floor, ph.delay_min);
    CHECK(trace_signature(st).idle_min >= floor - 1e-9);

    // behavior labels attach when asked
    Trace bt = gen_trace(slow, 11, SimLabel::behavior);
    CHECK(*bt.label == "Action");
}

TEST_CASE("same seed reproduces the identical trace") {
    ArchetypeLibrary lib = ArchetypeLibrary::builtin();
    Trace a = gen_trace(lib.by_name("image_gen"), 123);
    Trace b = gen_trace(lib.by_name("image_gen"), 123);
    Trace c = gen_trace(lib.by_name("image_gen"), 124);
    REQUIRE(a.packets.size() == b.packets.size());
    for (size_t i = 0; i < a.packets.size(); ++i) {
        CHECK(a.packets[i].t == b.packets[i].t);
        CHECK(a.packets[i].d == b.packets[i].d);
        CHECK(a.packets[i].s == b.packets[i].s);
    }
    CHECK(a.packets.size() != c.packets.size());  // overwhelmingly likely
}

TEST_CASE("declared envelopes keep all archetype pairs apart") {
    ArchetypeLibrary lib = ArchetypeLibrary::builtin();
    auto disjoint = [](double lo1, double hi1, double lo2, double hi2) {
        return hi1 < lo2 || hi2 < lo1;
    };
    for (size_t i = 0; i < lib.archetypes.size(); ++i)
        for (size_t j = i + 1; j < lib.archetypes.size(); ++j) {
            const auto& x = lib.archetypes[i].signature;
            const auto& y = lib.archetypes[j].signature;
            bool sep =
                disjoint(x.idle_min, x.idle_max, y.idle_min, y.idle_max) ||
                disjoint(x.out_bytes_min, x.out_bytes_max, y.out_bytes_min, y.out_bytes_max) ||
                disjoint(x.in_bytes_min, x.in_bytes_max, y.in_bytes_min, y.in_bytes_max);
            CHECK(sep);
        }
}

TEST_CASE("malformed archetype files are rejected") {
    std::string path = tputil::tmp_path("arch_bad.json");
    write_file(path, "{\"version\": 1, \"archetypes\": []}");
    CHECK_THROWS_AS(load_archetypes(path), Error);
    write_file(path, "{\"version\": 99, \"archetypes\": [");
    CHECK_THROWS_AS(load_archetypes(path), Error);

    // overlapping signatures: same phases twice under different names
    ArchetypeLibrary lib = ArchetypeLibrary::builtin();
    ArchetypeLibrary dup;
    dup.archetypes = {lib.archetypes[0], lib.archetypes[0]};
    dup.archetypes[1].name = "copycat";
    CHECK_THROWS_WITH_AS(dup.validate(), doctest::Contains("not separated"), Error);
}

// -------------------------------------------------------------------- users

TEST_CASE("degenerate sampling emits the support in weight order") {
    VirtualUserSpec spec;
    spec.true_community = 2;
    spec.agents = {"w", "x", "y", "z"};
    spec.weights = {0.0, 3.0, 1.0, 2.0};
    spec.list_length = 3;
    spec.seed = 5;
    VirtualUser u = gen_user(spec);
    CHECK(u.true_community == 2);
    CHECK(u.ranked_agents == std::vector<std::string>{"x", "z", "y"});
}

TEST_CASE("single draws follow the weights (multinomial check)") {
    VirtualUserSpec spec;
    spec.agents = {"a", "b", "c"};
    spec.weights = {0.5, 0.3, 0.2};
    spec.list_length = 1;
    std::map<std::string, int> counts;
    const int kTrials = 10000;
    for (int i = 0; i < kTrials; ++i) {
        spec.seed = uint64_t(i);
        counts[gen_user(spec).ranked_agents[0]] += 1;
    }
    for (size_t i = 0; i < spec.agents.size(); ++i) {
        double p = spec.weights[i];
        double sigma = std::sqrt(p * (1 - p) * kTrials);
        CHECK(std::abs(counts[spec.agents[i]] - p * kTrials) <= 3 * sigma);
    }
}

TEST_CASE("zero-weight agents never appear") {
    VirtualUserSpec spec;
    spec.agents = {"a", "b", "c", "d"};
    spec.weights = {1.0, 0.0, 2.0, 0.0};
    spec.list_length = 2;
    for (uint64_t s = 0; s < 200; ++s) {
        spec.seed = s;
        for (const auto& a : gen_user(spec).ranked_agents) {
            CHECK(a != "b");
            CHECK(a != "d");
        }
    }
    spec.list_length = 3;  // exceeds the positive-weight support
    CHECK_THROWS_WITH_AS(gen_user(spec), doctest::Contains("InsufficientAgents"), Error);
}

// -------------------------------------------------------------- rank noise

TEST_CASE("zero noise is the identity") {
    std::vector<std::string> ranks{"a", "b", "c", "d"};
    CHECK(perturb_ranks(ranks, 0.0, 7) == ranks);
}

TEST_CASE("full noise on two entries composes back to the identity") {
    // position 0 must swap with 1, then position 1 must swap with 0
    std::vector<std::string> ranks{"a", "b"};
    for (uint64_t seed = 0; seed < 50; ++seed)
        CHECK(perturb_ranks(ranks, 1.0, seed) == ranks);
}

TEST_CASE("perturbation is always a permutation and is seed-stable") {
    Rng rng(3);
    for (int iter = 0; iter < 100; ++iter) {
        size_t n = 1 + rng.next_below(12);
        std::vector<std::string> ranks;
        for (size_t i = 0; i < n; ++i) ranks.push_back("agent" + std::to_string(i));
        double p = rng.next_double();
        uint64_t seed = rng.next_u64();
        auto out1 = perturb_ranks(ranks, p, seed);
        auto out2 = perturb_ranks(ranks, p, seed);
        CHECK(out1 == out2);
        std::multiset<std::string> a(ranks.begin(), ranks.end());
        std::multiset<std::string> b(out1.begin(), out1.end());
        CHECK(a == b);
    }
    CHECK_THROWS_AS(perturb_ranks({"a"}, 1.5, 0), Error);
}
