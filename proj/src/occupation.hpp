#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "taxonomy.hpp"

namespace tp {

// Sørensen-Dice similarity 2|A∩B| / (|A|+|B|) over sorted id vectors.
// Both empty -> 0 by convention.
double sorensen(const std::vector<int>& a, const std::vector<int>& b);

// Weighted occupation graph. Edge weights are pairwise similarities of the
// occupations' work-activity profiles; the profiles themselves travel with
// the network so agents can be probed without re-loading the taxonomy.
struct OccupationNetwork {
    std::vector<std::string> codes;   // node order, sorted by code
    std::vector<std::string> titles;
    std::vector<std::string> dwa_ids;            // network-local id table
    std::vector<std::vector<int>> profiles;      // per node, sorted indices into dwa_ids

    std::vector<double> weights;  // n*n symmetric, zero diagonal
    std::vector<double> strength;
    double total_weight = 0;  // m

    std::vector<int> partition;  // -1 until installed
    int num_communities = 0;
    std::vector<std::string> community_labels;
    bool degenerate = false;  // m == 0 (all profiles pairwise disjoint)

    size_t size() const { return codes.size(); }
    double at(size_t i, size_t j) const { return weights[i * size() + j]; }
    bool has_partition() const { return num_communities > 0; }
    uint64_t digest() const;
};

OccupationNetwork build_network(const Taxonomy& tax);

// Modularity of a total partition: (1/2m) Σ_ij [A_ij - s_i s_j / 2m] δ(c_i,c_j).
double modularity(const OccupationNetwork& net, const std::vector<int>& partition);

// Louvain: greedy local moving + graph aggregation until the gain vanishes.
// Deterministic for a fixed seed and node order. Installs the partition and
// returns its modularity.
double detect_communities(OccupationNetwork& net, uint64_t seed, double resolution = 1.0);

// Installs an externally provided total partition (e.g. a published one).
void set_partition(OccupationNetwork& net, const std::map<std::string, int>& mapping,
                   const std::map<int, std::string>& labels = {});

// partition.csv: occupation_code,community_id,community_label
void set_partition_csv(OccupationNetwork& net, const std::string& partition_csv);

// Agent profile resolved against the network's id table. DWAs unknown to the
// table still count toward the profile size.
struct ResolvedAgent {
    std::string agent_id;
    std::vector<int> dwas;  // sorted indices into net.dwa_ids
    size_t total_dwas = 0;  // including unknown ones
};
ResolvedAgent resolve_agent(const OccupationNetwork& net, const AgentProfile& profile);

// Modularity variation from probing the agent as a virtual node into each
// community of the augmented graph: ΔQ_k = (1/m')(Σ_{i∈C_k} A_ia - s_a s'_Ck / 2m')
// with m' = m + s_a and community strengths taken on the augmented graph.
std::vector<double> probe_agent(const OccupationNetwork& net, const ResolvedAgent& agent);
std::vector<double> probe_agent(const OccupationNetwork& net, const AgentProfile& profile);

// Log revealed-comparative-advantage scores over the probe affinities.
struct CorrelationMatrix {
    std::vector<std::string> agent_ids;
    std::vector<std::string> community_labels;
    std::vector<double> q_raw;  // agents x communities, clamped at epsilon
    std::vector<double> r;      // ln RCA
    size_t clamped = 0;         // cells raised to epsilon
    uint64_t provenance = 0;    // network digest

    size_t rows() const { return agent_ids.size(); }
    size_t cols() const { return community_labels.size(); }
    double r_at(size_t a, size_t c) const { return r[a * cols() + c]; }
};

inline constexpr double kRcaEpsilon = 1e-9;

CorrelationMatrix rca_scores(const std::vector<std::string>& agent_ids,
                             const std::vector<std::string>& community_labels,
                             const std::vector<double>& q_raw_rows /* agents x communities */,
                             uint64_t provenance = 0);

void write_rmatrix_csv(const CorrelationMatrix& rm, const std::string& path);
CorrelationMatrix read_rmatrix_csv(const std::string& path);

// Ranked agent usage, most-used first.
struct UsageRanks {
    std::vector<std::string> ranked_agents;
};

struct OccupationScores {
    std::vector<double> scores;    // per community
    std::vector<int> ranking;      // community indices, best first (ties: lowest index)
    size_t unknown_agents = 0;     // ranked agents absent from the matrix, skipped
};

// EWMA aggregation over the ranked list: ŷ_c = Σ_i α(1-α)^(i-1) R_{a_i,c}.
OccupationScores infer_occupation(const CorrelationMatrix& rm, const UsageRanks& ranks,
                                  double alpha);

bool topk_hit(const std::vector<int>& ranking, int true_community, int k);

// Network container round-trip.
void save_network(const OccupationNetwork& net, const std::string& path);
OccupationNetwork load_network(const std::string& path);

}  // namespace tp
