#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "trace.hpp"

namespace tp {

// One burst phase of a synthetic interaction: an optional leading silence,
// an outbound burst, then an inbound burst, with jittered intra-burst gaps.
struct PhaseSpec {
    double delay_min = 0, delay_max = 0;  // idle gap before the phase, seconds
    int out_count_min = 0, out_count_max = 0;
    int64_t out_size_min = 0, out_size_max = 0;
    int in_count_min = 0, in_count_max = 0;
    int64_t in_size_min = 0, in_size_max = 0;
    double gap_min = 0.01, gap_max = 0.05;  // spacing between packets in the phase
};

// Declared envelope of the trace features that keep archetypes apart. Every
// generated trace is guaranteed to fall inside its archetype's envelope, and
// any two archetypes are separated on at least one axis.
struct ArchetypeSignature {
    double idle_min = 0, idle_max = 0;          // largest inter-packet gap
    double out_bytes_min = 0, out_bytes_max = 0;
    double in_bytes_min = 0, in_bytes_max = 0;
};

struct BehaviorArchetype {
    std::string name;            // e.g. "slow_api"
    std::string behavior_label;  // classifier category, e.g. "Action"
    std::vector<PhaseSpec> phases;
    ArchetypeSignature signature;
};

struct ArchetypeLibrary {
    int version = 1;
    std::vector<BehaviorArchetype> archetypes;

    // The six shipped interaction shapes; data/archetypes.json mirrors this.
    static ArchetypeLibrary builtin();
    const BehaviorArchetype& by_name(const std::string& name) const;
    // Checks ranges, signature consistency with the phases, and pairwise
    // separation of the declared envelopes.
    void validate() const;
};

ArchetypeLibrary load_archetypes(const std::string& json_path);
std::string format_archetypes(const ArchetypeLibrary& lib);

enum class SimLabel { archetype, behavior };

Trace gen_trace(const BehaviorArchetype& a, uint64_t seed, SimLabel label_kind = SimLabel::archetype);

// Observed signature features of a trace (for separability checks).
ArchetypeSignature trace_signature(const Trace& t);

// Ranked virtual user with planted ground truth.
struct VirtualUserSpec {
    int true_community = -1;
    std::vector<std::string> agents;
    std::vector<double> weights;  // >= 0, not all zero
    int list_length = 1;
    uint64_t seed = 0;
};

struct VirtualUser {
    std::string user_id;
    int true_community = -1;
    std::vector<std::string> ranked_agents;  // most used first
};

// Samples list_length distinct agents proportionally to weight (without
// replacement), then orders them by weight with seeded noise as tie-break.
VirtualUser gen_user(const VirtualUserSpec& spec);

// Position-swap noise: walk positions in order; with probability p swap the
// current position with a uniformly chosen other position. The result is
// always a permutation of the input.
std::vector<std::string> perturb_ranks(std::vector<std::string> ranks, double p, uint64_t seed);

}  // namespace tp
