#include "sim.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "rng.hpp"
#include "util.hpp"

namespace tp {

namespace {

// Envelope implied by the phase list; the declared signature must match it.
ArchetypeSignature derive_signature(const BehaviorArchetype& a) {
    ArchetypeSignature s;
    double max_gap = 0;
    for (const auto& p : a.phases) {
        s.idle_min = std::max(s.idle_min, p.delay_min);
        s.idle_max = std::max(s.idle_max, p.delay_max);
        max_gap = std::max(max_gap, p.gap_max);
        s.out_bytes_min += double(p.out_count_min) * double(p.out_size_min);
        s.out_bytes_max += double(p.out_count_max) * double(p.out_size_max);
        s.in_bytes_min += double(p.in_count_min) * double(p.in_size_min);
        s.in_bytes_max += double(p.in_count_max) * double(p.in_size_max);
    }
    s.idle_max = std::max(s.idle_max, max_gap);
    return s;
}

bool disjoint(double lo1, double hi1, double lo2, double hi2) {
    return hi1 < lo2 || hi2 < lo1;
}

}  // namespace

void ArchetypeLibrary::validate() const {
    if (archetypes.empty()) fail(TP_E_SCHEMA, "archetype library is empty");
    for (const auto& a : archetypes) {
        if (a.name.empty() || a.behavior_label.empty())
            fail(TP_E_SCHEMA, "archetype needs a name and a behavior label");
        if (a.phases.empty()) fail(TP_E_SCHEMA, "archetype '" + a.name + "' has no phases");
        for (const auto& p : a.phases) {
            bool ranges_ok = p.delay_min >= 0 && p.delay_max >= p.delay_min &&
                             p.gap_min >= 0 && p.gap_max >= p.gap_min &&
                             p.out_count_min >= 0 && p.out_count_max >= p.out_count_min &&
                             p.in_count_min >= 0 && p.in_count_max >= p.in_count_min &&
                             (p.out_count_max == 0 || (p.out_size_min >= 1 && p.out_size_max >= p.out_size_min)) &&
                             (p.in_count_max == 0 || (p.in_size_min >= 1 && p.in_size_max >= p.in_size_min));
            if (!ranges_ok) fail(TP_E_SCHEMA, "archetype '" + a.name + "' has an invalid range");
            if (p.out_count_min + p.in_count_min < 1)
                fail(TP_E_SCHEMA, "archetype '" + a.name +
                                      "': every phase must emit at least one packet");
        }
        ArchetypeSignature d = derive_signature(a);
        auto close = [](double x, double y) { return std::abs(x - y) < 1e-9; };
        if (!close(d.idle_min, a.signature.idle_min) || !close(d.idle_max, a.signature.idle_max) ||
            !close(d.out_bytes_min, a.signature.out_bytes_min) ||
            !close(d.out_bytes_max, a.signature.out_bytes_max) ||
            !close(d.in_bytes_min, a.signature.in_bytes_min) ||
            !close(d.in_bytes_max, a.signature.in_bytes_max))
            fail(TP_E_SCHEMA, "archetype '" + a.name +
                                  "': declared signature does not match its phases");
    }
    for (size_t i = 0; i < archetypes.size(); ++i)
        for (size_t j = i + 1; j < archetypes.size(); ++j) {
            const auto& x = archetypes[i].signature;
            const auto& y = archetypes[j].signature;
            bool sep = disjoint(x.idle_min, x.idle_max, y.idle_min, y.idle_max) ||
                       disjoint(x.out_bytes_min, x.out_bytes_max, y.out_bytes_min, y.out_bytes_max) ||
                       disjoint(x.in_bytes_min, x.in_bytes_max, y.in_bytes_min, y.in_bytes_max);
            if (!sep)
                fail(TP_E_SCHEMA, "archetypes '" + archetypes[i].name + "' and '" +
                                      archetypes[j].name + "' are not separated on any axis");
        }
}

const BehaviorArchetype& ArchetypeLibrary::by_name(const std::string& name) const {
    for (const auto& a : archetypes)
        if (a.name == name) return a;
    fail(TP_E_INVALID, "unknown archetype '" + name + "'");
}

ArchetypeLibrary ArchetypeLibrary::builtin() {
    auto phase = [](double d0, double d1, int oc0, int oc1, int64_t os0, int64_t os1, int ic0,
                    int ic1, int64_t is0, int64_t is1, double g0, double g1) {
        PhaseSpec p;
        p.delay_min = d0; p.delay_max = d1;
        p.out_count_min = oc0; p.out_count_max = oc1;
        p.out_size_min = os0; p.out_size_max = os1;
        p.in_count_min = ic0; p.in_count_max = ic1;
        p.in_size_min = is0; p.in_size_max = is1;
        p.gap_min = g0; p.gap_max = g1;
        return p;
    };

    ArchetypeLibrary lib;
    lib.version = 1;

    // Steady inbound text stream, no tool use, no long silence.
    BehaviorArchetype plain;
    plain.name = "plain_text";
    plain.behavior_label = "PlainText";
    plain.phases = {
        phase(0, 0, 2, 4, 200, 600, 0, 0, 0, 0, 0.02, 0.05),
        phase(0.2, 0.4, 0, 0, 0, 0, 60, 120, 400, 800, 0.02, 0.05),
    };

    // Quick third-party call, then a long streamed summary.
    BehaviorArchetype fast;
    fast.name = "fast_api";
    fast.behavior_label = "Action";
    fast.phases = {
        phase(0, 0, 3, 5, 300, 700, 0, 0, 0, 0, 0.02, 0.05),
        phase(0.5, 0.8, 0, 0, 0, 0, 4, 8, 600, 1200, 0.02, 0.05),
        phase(0.1, 0.3, 0, 0, 0, 0, 150, 250, 700, 1000, 0.01, 0.04),
    };

    // Repeated generate-upload-execute rounds with heavy outbound mass.
    BehaviorArchetype code;
    code.name = "code_exec";
    code.behavior_label = "Analysis";
    code.phases = {
        phase(0, 0, 2, 4, 300, 700, 0, 0, 0, 0, 0.02, 0.05),
        phase(0.3, 0.6, 0, 0, 0, 0, 30, 60, 500, 900, 0.01, 0.04),
        phase(0.9, 1.4, 25, 45, 700, 1200, 0, 0, 0, 0, 0.01, 0.03),
        phase(0.9, 1.4, 0, 0, 0, 0, 20, 40, 500, 900, 0.01, 0.04),
        phase(0.9, 1.4, 25, 45, 700, 1200, 0, 0, 0, 0, 0.01, 0.03),
        phase(0.9, 1.4, 0, 0, 0, 0, 20, 40, 500, 900, 0.01, 0.04),
    };

    // Retrieval burst, a reading pause, a summary burst, then client-side
    // follow-up requests to linked resources.
    BehaviorArchetype search;
    search.name = "two_phase_search";
    search.behavior_label = "Redirect";
    search.phases = {
        phase(0, 0, 2, 4, 300, 700, 0, 0, 0, 0, 0.02, 0.05),
        phase(0.3, 0.6, 0, 0, 0, 0, 30, 60, 500, 900, 0.01, 0.04),
        phase(1.6, 2.4, 0, 0, 0, 0, 40, 80, 500, 900, 0.01, 0.04),
        phase(0.3, 0.6, 6, 12, 200, 500, 0, 0, 0, 0, 0.02, 0.05),
    };

    // Short description, a generation wait, then a dense asset download.
    BehaviorArchetype image;
    image.name = "image_gen";
    image.behavior_label = "Image";
    image.phases = {
        phase(0, 0, 2, 4, 300, 700, 0, 0, 0, 0, 0.02, 0.05),
        phase(0.2, 0.5, 0, 0, 0, 0, 20, 40, 500, 900, 0.02, 0.05),
        phase(2.6, 3.4, 0, 0, 0, 0, 600, 900, 1200, 1450, 0.002, 0.01),
    };

    // One slow third-party call dominating the timeline.
    BehaviorArchetype slow;
    slow.name = "slow_api";
    slow.behavior_label = "Action";
    slow.phases = {
        phase(0, 0, 3, 5, 300, 700, 0, 0, 0, 0, 0.02, 0.05),
        phase(4.0, 6.0, 0, 0, 0, 0, 5, 10, 800, 1400, 0.02, 0.05),
        phase(0.1, 0.3, 0, 0, 0, 0, 40, 80, 500, 900, 0.01, 0.04),
    };

    lib.archetypes = {plain, fast, code, search, image, slow};
    for (auto& a : lib.archetypes) a.signature = derive_signature(a);
    lib.validate();
    return lib;
}

// ------------------------------------------------------------------- json

static nlohmann::ordered_json range_json(double a, double b) { return {a, b}; }

std::string format_archetypes(const ArchetypeLibrary& lib) {
    nlohmann::ordered_json j;
    j["version"] = lib.version;
    auto arr = nlohmann::ordered_json::array();
    for (const auto& a : lib.archetypes) {
        nlohmann::ordered_json ja;
        ja["name"] = a.name;
        ja["behavior_label"] = a.behavior_label;
        auto phases = nlohmann::ordered_json::array();
        for (const auto& p : a.phases) {
            nlohmann::ordered_json jp;
            jp["delay"] = range_json(p.delay_min, p.delay_max);
            jp["out_count"] = {p.out_count_min, p.out_count_max};
            jp["out_size"] = {p.out_size_min, p.out_size_max};
            jp["in_count"] = {p.in_count_min, p.in_count_max};
            jp["in_size"] = {p.in_size_min, p.in_size_max};
            jp["gap"] = range_json(p.gap_min, p.gap_max);
            phases.push_back(std::move(jp));
        }
        ja["phases"] = std::move(phases);
        ja["signature"] = {{"idle", range_json(a.signature.idle_min, a.signature.idle_max)},
                           {"out_bytes", range_json(a.signature.out_bytes_min, a.signature.out_bytes_max)},
                           {"in_bytes", range_json(a.signature.in_bytes_min, a.signature.in_bytes_max)}};
        arr.push_back(std::move(ja));
    }
    j["archetypes"] = std::move(arr);
    return j.dump(2) + "\n";
}

ArchetypeLibrary load_archetypes(const std::string& json_path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(json_path));
    } catch (const nlohmann::json::exception& e) {
        fail(TP_E_SCHEMA, json_path + ": invalid JSON: " + std::string(e.what()));
    }
    ArchetypeLibrary lib;
    try {
        lib.version = j.at("version").get<int>();
        for (const auto& ja : j.at("archetypes")) {
            BehaviorArchetype a;
            a.name = ja.at("name").get<std::string>();
            a.behavior_label = ja.at("behavior_label").get<std::string>();
            for (const auto& jp : ja.at("phases")) {
                PhaseSpec p;
                p.delay_min = jp.at("delay")[0].get<double>();
                p.delay_max = jp.at("delay")[1].get<double>();
                p.out_count_min = jp.at("out_count")[0].get<int>();
                p.out_count_max = jp.at("out_count")[1].get<int>();
                p.out_size_min = jp.at("out_size")[0].get<int64_t>();
                p.out_size_max = jp.at("out_size")[1].get<int64_t>();
                p.in_count_min = jp.at("in_count")[0].get<int>();
                p.in_count_max = jp.at("in_count")[1].get<int>();
                p.in_size_min = jp.at("in_size")[0].get<int64_t>();
                p.in_size_max = jp.at("in_size")[1].get<int64_t>();
                p.gap_min = jp.at("gap")[0].get<double>();
                p.gap_max = jp.at("gap")[1].get<double>();
                a.phases.push_back(p);
            }
            a.signature.idle_min = ja.at("signature").at("idle")[0].get<double>();
            a.signature.idle_max = ja.at("signature").at("idle")[1].get<double>();
            a.signature.out_bytes_min = ja.at("signature").at("out_bytes")[0].get<double>();
            a.signature.out_bytes_max = ja.at("signature").at("out_bytes")[1].get<double>();
            a.signature.in_bytes_min = ja.at("signature").at("in_bytes")[0].get<double>();
            a.signature.in_bytes_max = ja.at("signature").at("in_bytes")[1].get<double>();
            lib.archetypes.push_back(std::move(a));
        }
    } catch (const nlohmann::json::exception& e) {
        fail(TP_E_SCHEMA, json_path + ": " + std::string(e.what()));
    }
    if (lib.version != 1)
        fail(TP_E_VERSION, json_path + ": unsupported archetype library version " +
                               std::to_string(lib.version));
    lib.validate();
    return lib;
}

// -------------------------------------------------------------- generator

Trace gen_trace(const BehaviorArchetype& a, uint64_t seed, SimLabel label_kind) {
    Rng rng(Rng::derive(seed, fnv1a64(a.name)));
    Trace t;
    t.trace_id = a.name + "-" + std::to_string(seed);
    t.label = label_kind == SimLabel::archetype ? a.name : a.behavior_label;
    t.flow_scope = FlowScope::primary;

    double cursor = 0.0;
    bool any = false;
    bool no_gap_next = true;  // the first packet after a silence sits exactly at the cursor
    auto place = [&](int d, int64_t smin, int64_t smax, double gmin, double gmax) {
        if (!no_gap_next) cursor += rng.uniform(gmin, gmax);
        no_gap_next = false;
        any = true;
        PacketRecord p;
        p.t = cursor;
        p.d = d;
        p.s = rng.uniform_int(smin, smax);
        p.provider_flow = true;
        t.packets.push_back(std::move(p));
    };

    for (const auto& ph : a.phases) {
        if (any && ph.delay_max > 0) {
            cursor += rng.uniform(ph.delay_min, ph.delay_max);
            no_gap_next = true;
        }
        int oc = int(rng.uniform_int(ph.out_count_min, ph.out_count_max));
        int ic = int(rng.uniform_int(ph.in_count_min, ph.in_count_max));
        for (int i = 0; i < oc; ++i) place(1, ph.out_size_min, ph.out_size_max, ph.gap_min, ph.gap_max);
        for (int i = 0; i < ic; ++i) place(-1, ph.in_size_min, ph.in_size_max, ph.gap_min, ph.gap_max);
    }
    if (!t.packets.empty()) {
        double base = t.packets.front().t;
        for (auto& p : t.packets) p.t -= base;
        t.packets.front().t = 0.0;
    }
    return t;
}

ArchetypeSignature trace_signature(const Trace& t) {
    ArchetypeSignature s;
    double max_gap = 0;
    for (size_t i = 1; i < t.packets.size(); ++i)
        max_gap = std::max(max_gap, t.packets[i].t - t.packets[i - 1].t);
    s.idle_min = s.idle_max = max_gap;
    double ob = 0, ib = 0;
    for (const auto& p : t.packets) (p.d > 0 ? ob : ib) += double(p.s);
    s.out_bytes_min = s.out_bytes_max = ob;
    s.in_bytes_min = s.in_bytes_max = ib;
    return s;
}

// ------------------------------------------------------------------ users

VirtualUser gen_user(const VirtualUserSpec& spec) {
    if (spec.agents.size() != spec.weights.size())
        fail(TP_E_INVALID, "agents and weights must have equal length");
    if (spec.list_length < 1) fail(TP_E_INVALID, "list_length must be >= 1");
    size_t support = 0;
    for (double w : spec.weights) {
        if (w < 0) fail(TP_E_INVALID, "agent weights must be >= 0");
        if (w > 0) ++support;
    }
    if (support == 0) fail(TP_E_INVALID, "agent weights must not all be zero");
    if (size_t(spec.list_length) > support)
        fail(TP_E_INSUFFICIENT, "InsufficientAgents: list length " +
                                    std::to_string(spec.list_length) + " exceeds support " +
                                    std::to_string(support));

    Rng rng(Rng::derive(spec.seed, 0x75736572ULL));
    std::vector<size_t> pool;
    for (size_t i = 0; i < spec.weights.size(); ++i)
        if (spec.weights[i] > 0) pool.push_back(i);

    std::vector<size_t> picked;
    std::vector<double> w_pool;
    for (size_t i : pool) w_pool.push_back(spec.weights[i]);
    for (int draw = 0; draw < spec.list_length; ++draw) {
        double total = 0;
        for (double w : w_pool) total += w;
        double u = rng.next_double() * total;
        size_t sel = 0;
        double acc = 0;
        for (size_t i = 0; i < w_pool.size(); ++i) {
            acc += w_pool[i];
            if (u < acc) {
                sel = i;
                break;
            }
            sel = i;  // fp guard: fall back to the last element
        }
        picked.push_back(pool[sel]);
        pool.erase(pool.begin() + long(sel));
        w_pool.erase(w_pool.begin() + long(sel));
    }

    // most-used first: order by weight, seeded noise breaks ties
    std::vector<std::pair<double, double>> keys;  // (-weight, noise)
    for (size_t i : picked) keys.push_back({-spec.weights[i], rng.next_double()});
    std::vector<size_t> order(picked.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return keys[a] < keys[b]; });

    VirtualUser u;
    u.user_id = "user-" + std::to_string(spec.seed);
    u.true_community = spec.true_community;
    for (size_t i : order) u.ranked_agents.push_back(spec.agents[picked[i]]);
    return u;
}

std::vector<std::string> perturb_ranks(std::vector<std::string> ranks, double p, uint64_t seed) {
    if (!(p >= 0 && p <= 1)) fail(TP_E_INVALID, "swap probability must be in [0, 1]");
    size_t n = ranks.size();
    if (n < 2) return ranks;
    Rng rng(Rng::derive(seed, 0x73776170ULL));
    for (size_t i = 0; i < n; ++i) {
        if (rng.next_double() < p) {
            size_t j = rng.next_below(n - 1);
            if (j >= i) ++j;  // uniform over the other positions
            std::swap(ranks[i], ranks[j]);
        }
    }
    return ranks;
}

}  // namespace tp
