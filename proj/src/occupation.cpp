#include "occupation.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <set>

#include "csv.hpp"
#include "json.hpp"
#include "rng.hpp"
#include "util.hpp"

namespace tp {

double sorensen(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.empty() && b.empty()) return 0.0;
    size_t inter = 0, i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        if (a[i] < b[j])
            ++i;
        else if (b[j] < a[i])
            ++j;
        else {
            ++inter;
            ++i;
            ++j;
        }
    }
    return 2.0 * double(inter) / double(a.size() + b.size());
}

uint64_t OccupationNetwork::digest() const {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& c : codes) h = fnv1a64(c, h);
    h = fnv1a64(weights.data(), weights.size() * sizeof(double), h);
    h = fnv1a64(partition.data(), partition.size() * sizeof(int), h);
    return h;
}

static void recompute_strengths(OccupationNetwork& net) {
    size_t n = net.size();
    net.strength.assign(n, 0.0);
    double total = 0;
    for (size_t i = 0; i < n; ++i) {
        double s = 0;
        for (size_t j = 0; j < n; ++j) s += net.weights[i * n + j];
        net.strength[i] = s;
        total += s;
    }
    net.total_weight = total / 2.0;
    net.degenerate = net.total_weight <= 0.0;
}

OccupationNetwork build_network(const Taxonomy& tax) {
    if (tax.occupations.size() < 2)
        fail(TP_E_INVALID, "network construction needs at least 2 occupations");
    OccupationNetwork net;
    size_t n = tax.occupations.size();
    net.codes.reserve(n);
    for (const auto& o : tax.occupations) {
        net.codes.push_back(o.code);
        net.titles.push_back(o.title);
    }
    net.dwa_ids = tax.dwa_ids;
    net.profiles.resize(n);
    for (size_t i = 0; i < n; ++i) net.profiles[i] = tax.dwa_profile(int(i));

    net.weights.assign(n * n, 0.0);
    for (size_t i = 0; i < n; ++i)
        for (size_t j = i + 1; j < n; ++j) {
            double w = sorensen(net.profiles[i], net.profiles[j]);
            net.weights[i * n + j] = w;
            net.weights[j * n + i] = w;
        }
    recompute_strengths(net);
    net.partition.assign(n, -1);
    return net;
}

double modularity(const OccupationNetwork& net, const std::vector<int>& partition) {
    size_t n = net.size();
    if (partition.size() != n)
        fail(TP_E_INVALID, "partition must assign every node, got " +
                               std::to_string(partition.size()) + " of " + std::to_string(n));
    int k = 0;
    for (int c : partition) {
        if (c < 0) fail(TP_E_INVALID, "partition must assign every node (found unset id)");
        k = std::max(k, c + 1);
    }
    // Aggregated per-community form; the literal double sum is the test
    // oracle. Strengths and 2m are re-derived from the matrix with the same
    // per-row grouping as the intra-community sums, which makes the
    // all-one-community case cancel to zero exactly.
    std::vector<double> strength(n, 0.0);
    double m2 = 0;
    for (size_t i = 0; i < n; ++i) {
        double row = 0;
        for (size_t j = 0; j < n; ++j) row += net.at(i, j);
        strength[i] = row;
        m2 += row;
    }
    if (m2 <= 0) fail(TP_E_DEGENERATE, "DegenerateNetwork: total edge weight is zero");
    std::vector<double> w_in(size_t(k), 0.0), s_c(size_t(k), 0.0);
    for (size_t i = 0; i < n; ++i) {
        s_c[size_t(partition[i])] += strength[i];
        double row = 0;
        for (size_t j = 0; j < n; ++j)
            if (partition[i] == partition[j]) row += net.at(i, j);
        w_in[size_t(partition[i])] += row;
    }
    double q = 0;
    for (int c = 0; c < k; ++c)
        q += w_in[size_t(c)] / m2 - (s_c[size_t(c)] / m2) * (s_c[size_t(c)] / m2);
    return q;
}

// --------------------------------------------------------------- louvain

namespace {

struct LouvainGraph {
    size_t n = 0;
    std::vector<std::vector<std::pair<size_t, double>>> adj;  // neighbor, weight (no self)
    std::vector<double> self_loop;
    std::vector<double> strength;  // includes self-loop weight (counted twice in 2m)
    double m2 = 0;                 // 2m
};

double one_level(LouvainGraph& g, std::vector<size_t>& comm, Rng& rng, double resolution) {
    std::vector<double> s_tot(g.n, 0.0);
    for (size_t i = 0; i < g.n; ++i) s_tot[comm[i]] += g.strength[i];

    std::vector<size_t> order(g.n);
    std::iota(order.begin(), order.end(), size_t(0));
    rng.shuffle(order);

    bool improved = true, any = false;
    while (improved) {
        improved = false;
        for (size_t oi = 0; oi < g.n; ++oi) {
            size_t node = order[oi];
            size_t home = comm[node];
            // links from node into each adjacent community
            std::map<size_t, double> links;
            links[home] += 0.0;
            for (auto [nb, w] : g.adj[node]) links[comm[nb]] += w;
            s_tot[home] -= g.strength[node];
            double base = links[home] - resolution * g.strength[node] * s_tot[home] / g.m2;
            size_t best = home;
            double best_gain = base;
            for (auto& [c, w_in] : links) {
                if (c == home) continue;
                double gain = w_in - resolution * g.strength[node] * s_tot[c] / g.m2;
                if (gain > best_gain + 1e-12 ||
                    (std::abs(gain - best_gain) <= 1e-12 && c < best)) {
                    best_gain = gain;
                    best = c;
                }
            }
            s_tot[best] += g.strength[node];
            if (best != home) {
                comm[node] = best;
                improved = true;
                any = true;
            }
        }
    }
    return any ? 1.0 : 0.0;
}

LouvainGraph aggregate(const LouvainGraph& g, const std::vector<size_t>& comm,
                       std::vector<size_t>& relabel) {
    relabel.assign(g.n, size_t(-1));
    size_t next = 0;
    for (size_t i = 0; i < g.n; ++i)
        if (relabel[comm[i]] == size_t(-1)) relabel[comm[i]] = next++;
    LouvainGraph h;
    h.n = next;
    h.adj.resize(next);
    h.self_loop.assign(next, 0.0);
    std::vector<std::map<size_t, double>> acc(next);
    for (size_t i = 0; i < g.n; ++i) {
        size_t ci = relabel[comm[i]];
        h.self_loop[ci] += g.self_loop[i];
        for (auto [nb, w] : g.adj[i]) {
            size_t cj = relabel[comm[nb]];
            if (ci == cj)
                h.self_loop[ci] += w / 2.0;  // each undirected edge visited twice
            else
                acc[ci][cj] += w;
        }
    }
    h.strength.assign(next, 0.0);
    for (size_t i = 0; i < next; ++i) {
        for (auto& [j, w] : acc[i]) h.adj[i].push_back({j, w});
        double s = 2.0 * h.self_loop[i];
        for (auto& [j, w] : h.adj[i]) s += w;
        h.strength[i] = s;
        h.m2 += s;
    }
    return h;
}

}  // namespace

double detect_communities(OccupationNetwork& net, uint64_t seed, double resolution) {
    if (net.degenerate || net.total_weight <= 0)
        fail(TP_E_DEGENERATE, "DegenerateNetwork: cannot detect communities with zero weight");
    size_t n = net.size();

    LouvainGraph g;
    g.n = n;
    g.adj.resize(n);
    g.self_loop.assign(n, 0.0);
    g.strength = net.strength;
    g.m2 = 2.0 * net.total_weight;
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j)
            if (j != i && net.at(i, j) > 0) g.adj[i].push_back({j, net.at(i, j)});

    // node -> community at the finest level
    std::vector<size_t> node_comm(n);
    std::iota(node_comm.begin(), node_comm.end(), size_t(0));

    Rng rng(Rng::derive(seed, 0x6c6f7576ULL));
    int level = 0;
    for (;;) {
        std::vector<size_t> comm(g.n);
        std::iota(comm.begin(), comm.end(), size_t(0));
        double moved = one_level(g, comm, rng, resolution);
        std::vector<size_t> relabel;
        LouvainGraph next = aggregate(g, comm, relabel);
        for (size_t i = 0; i < n; ++i) node_comm[i] = relabel[comm[node_comm[i]]];
        if (moved == 0.0 || next.n == g.n) break;
        g = std::move(next);
        ++level;
        if (level > 64) break;  // cycle guard; never reached in practice
    }

    // deterministic ids: communities numbered by their smallest member node
    std::vector<int> first_seen(n, -1);
    int next_id = 0;
    std::vector<int> part(n, -1);
    for (size_t i = 0; i < n; ++i) {
        size_t c = node_comm[i];
        if (first_seen[c] < 0) first_seen[c] = next_id++;
        part[i] = first_seen[c];
    }
    net.partition = part;
    net.num_communities = next_id;
    net.community_labels.clear();
    for (int i = 0; i < next_id; ++i) net.community_labels.push_back("C" + std::to_string(i));
    return modularity(net, net.partition);
}

void set_partition(OccupationNetwork& net, const std::map<std::string, int>& mapping,
                   const std::map<int, std::string>& labels) {
    size_t n = net.size();
    std::vector<int> part(n, -1);
    for (size_t i = 0; i < n; ++i) {
        auto it = mapping.find(net.codes[i]);
        if (it == mapping.end())
            fail(TP_E_SCHEMA, "partition is not total: missing occupation '" + net.codes[i] + "'");
        if (it->second < 0) fail(TP_E_SCHEMA, "community ids must be >= 0");
        part[i] = it->second;
    }
    std::set<int> distinct(part.begin(), part.end());
    int k = *distinct.rbegin() + 1;
    net.partition = std::move(part);
    net.num_communities = k;
    net.community_labels.assign(size_t(k), "");
    for (int c = 0; c < k; ++c) {
        auto it = labels.find(c);
        net.community_labels[size_t(c)] = it != labels.end() ? it->second : "C" + std::to_string(c);
    }
}

void set_partition_csv(OccupationNetwork& net, const std::string& partition_csv) {
    CsvTable tab = read_csv(partition_csv);
    int c_code = tab.column("occupation_code"), c_id = tab.column("community_id"),
        c_label = tab.column("community_label");
    if (c_code < 0 || c_id < 0)
        fail(TP_E_SCHEMA,
             partition_csv + ": header must contain occupation_code,community_id[,community_label]");
    std::map<std::string, int> mapping;
    std::map<int, std::string> labels;
    for (const auto& row : tab.rows) {
        std::string code = trim(row.at(size_t(c_code)));
        int id;
        try {
            id = std::stoi(row.at(size_t(c_id)));
        } catch (...) {
            fail(TP_E_SCHEMA, partition_csv + ": bad community_id for '" + code + "'");
        }
        if (!mapping.emplace(code, id).second)
            fail(TP_E_SCHEMA, partition_csv + ": duplicate occupation '" + code + "'");
        if (c_label >= 0 && size_t(c_label) < row.size() && !row[size_t(c_label)].empty()) {
            auto [it, fresh] = labels.emplace(id, row[size_t(c_label)]);
            if (!fresh && it->second != row[size_t(c_label)])
                fail(TP_E_SCHEMA, partition_csv + ": conflicting labels for community " +
                                      std::to_string(id));
        }
    }
    set_partition(net, mapping, labels);
}

// ---------------------------------------------------------------- probing

ResolvedAgent resolve_agent(const OccupationNetwork& net, const AgentProfile& profile) {
    ResolvedAgent out;
    out.agent_id = profile.agent_id;
    out.total_dwas = profile.dwas.size();
    for (const auto& d : profile.dwas) {
        auto it = std::lower_bound(net.dwa_ids.begin(), net.dwa_ids.end(), d);
        if (it != net.dwa_ids.end() && *it == d) out.dwas.push_back(int(it - net.dwa_ids.begin()));
    }
    std::sort(out.dwas.begin(), out.dwas.end());
    return out;
}

static double sorensen_sized(const std::vector<int>& agent, size_t agent_total,
                             const std::vector<int>& occ) {
    if (agent_total + occ.size() == 0) return 0.0;
    size_t inter = 0, i = 0, j = 0;
    while (i < agent.size() && j < occ.size()) {
        if (agent[i] < occ[j])
            ++i;
        else if (occ[j] < agent[i])
            ++j;
        else {
            ++inter;
            ++i;
            ++j;
        }
    }
    return 2.0 * double(inter) / double(agent_total + occ.size());
}

std::vector<double> probe_agent(const OccupationNetwork& net, const ResolvedAgent& agent) {
    if (!net.has_partition())
        fail(TP_E_INVALID, "probe requires an installed community partition");
    if (net.degenerate || net.total_weight <= 0)
        fail(TP_E_DEGENERATE, "DegenerateNetwork: cannot probe a zero-weight network");
    if (agent.total_dwas == 0)
        fail(TP_E_EMPTY, "EmptyProfile: agent '" + agent.agent_id + "' has no work activities");

    size_t n = net.size();
    int k = net.num_communities;
    std::vector<double> a_ia(n, 0.0);
    double s_a = 0;
    for (size_t i = 0; i < n; ++i) {
        a_ia[i] = sorensen_sized(agent.dwas, agent.total_dwas, net.profiles[i]);
        s_a += a_ia[i];
    }
    double m_aug = net.total_weight + s_a;

    std::vector<double> sum_in(size_t(k), 0.0);   // Σ_{i in C_k} A_ia
    std::vector<double> s_comm(size_t(k), 0.0);   // community strengths on the augmented graph
    for (size_t i = 0; i < n; ++i) {
        int c = net.partition[i];
        sum_in[size_t(c)] += a_ia[i];
        s_comm[size_t(c)] += net.strength[i] + a_ia[i];
    }

    std::vector<double> dq(size_t(k), 0.0);
    if (s_a == 0.0) return dq;  // no connections: every variation is zero
    for (int c = 0; c < k; ++c)
        dq[size_t(c)] = (sum_in[size_t(c)] - s_a * s_comm[size_t(c)] / (2.0 * m_aug)) / m_aug;
    return dq;
}

std::vector<double> probe_agent(const OccupationNetwork& net, const AgentProfile& profile) {
    return probe_agent(net, resolve_agent(net, profile));
}

// -------------------------------------------------------------------- rca

CorrelationMatrix rca_scores(const std::vector<std::string>& agent_ids,
                             const std::vector<std::string>& community_labels,
                             const std::vector<double>& q_raw_rows, uint64_t provenance) {
    size_t na = agent_ids.size(), nc = community_labels.size();
    if (na < 1 || nc < 2)
        fail(TP_E_INVALID, "RCA needs at least 1 agent and 2 communities");
    if (q_raw_rows.size() != na * nc)
        fail(TP_E_INVALID, "affinity matrix size mismatch");

    CorrelationMatrix rm;
    rm.agent_ids = agent_ids;
    rm.community_labels = community_labels;
    rm.provenance = provenance;
    rm.q_raw = q_raw_rows;
    for (auto& v : rm.q_raw) {
        if (v < kRcaEpsilon) {
            v = kRcaEpsilon;
            ++rm.clamped;
        }
    }

    // The double ratio is evaluated on each agent's affinity distribution
    // (row shares), so the community baseline weighs agents equally and
    // rescaling any one agent's affinities cannot move its scores. The map is
    // idempotent in that normalization: shares of shares are the same shares.
    std::vector<double> share(na * nc);
    for (size_t a = 0; a < na; ++a) {
        double row_sum = 0;
        for (size_t c = 0; c < nc; ++c) row_sum += rm.q_raw[a * nc + c];
        if (row_sum <= 0)
            fail(TP_E_DEGENERATE, "DegenerateMatrix: zero affinity row after clamping");
        for (size_t c = 0; c < nc; ++c) share[a * nc + c] = rm.q_raw[a * nc + c] / row_sum;
    }
    std::vector<double> col_sum(nc, 0.0);
    double grand = 0;
    for (size_t c = 0; c < nc; ++c) {
        for (size_t a = 0; a < na; ++a) col_sum[c] += share[a * nc + c];
        grand += col_sum[c];
    }
    if (grand <= 0) fail(TP_E_DEGENERATE, "DegenerateMatrix: zero grand total after clamping");

    rm.r.resize(na * nc);
    for (size_t a = 0; a < na; ++a)
        for (size_t c = 0; c < nc; ++c)
            rm.r[a * nc + c] = std::log((share[a * nc + c]) / (col_sum[c] / grand));
    return rm;
}

void write_rmatrix_csv(const CorrelationMatrix& rm, const std::string& path) {
    std::string out = "# provenance=" + std::to_string(rm.provenance) +
                      " clamped=" + std::to_string(rm.clamped) + "\n";
    std::vector<std::string> hdr{"agent_id"};
    hdr.insert(hdr.end(), rm.community_labels.begin(), rm.community_labels.end());
    out += csv_join(hdr) + "\n";
    for (size_t a = 0; a < rm.rows(); ++a) {
        std::vector<std::string> row{rm.agent_ids[a]};
        for (size_t c = 0; c < rm.cols(); ++c) row.push_back(fmt_double(rm.r_at(a, c)));
        out += csv_join(row) + "\n";
    }
    write_file(path, out);
}

CorrelationMatrix read_rmatrix_csv(const std::string& path) {
    CsvTable tab = read_csv(path);
    if (tab.header.size() < 3 || tab.header[0] != "agent_id")
        fail(TP_E_SCHEMA, path + ": expected header agent_id,<community>,...");
    CorrelationMatrix rm;
    rm.community_labels.assign(tab.header.begin() + 1, tab.header.end());
    for (const auto& row : tab.rows) {
        if (row.size() != tab.header.size())
            fail(TP_E_SCHEMA, path + ": ragged row for agent '" + row.at(0) + "'");
        rm.agent_ids.push_back(row[0]);
        for (size_t c = 1; c < row.size(); ++c) {
            try {
                rm.r.push_back(std::stod(row[c]));
            } catch (...) {
                fail(TP_E_SCHEMA, path + ": bad score for agent '" + row[0] + "'");
            }
        }
    }
    rm.q_raw.assign(rm.r.size(), 0.0);  // raw affinities do not survive the CSV
    return rm;
}

// ------------------------------------------------------------------ ewma

OccupationScores infer_occupation(const CorrelationMatrix& rm, const UsageRanks& ranks,
                                  double alpha) {
    if (!(alpha > 0 && alpha < 1)) fail(TP_E_INVALID, "alpha must be in (0, 1)");
    if (ranks.ranked_agents.empty()) fail(TP_E_EMPTY, "EmptyRanks: no ranked agents");
    {
        std::set<std::string> seen;
        for (const auto& a : ranks.ranked_agents)
            if (!seen.insert(a).second)
                fail(TP_E_INVALID, "rank list contains agent '" + a + "' more than once");
    }

    OccupationScores out;
    size_t nc = rm.cols();
    out.scores.assign(nc, 0.0);
    size_t used = 0;
    for (const auto& agent : ranks.ranked_agents) {
        auto it = std::find(rm.agent_ids.begin(), rm.agent_ids.end(), agent);
        if (it == rm.agent_ids.end()) {
            ++out.unknown_agents;
            continue;
        }
        size_t a = size_t(it - rm.agent_ids.begin());
        double w = alpha * std::pow(1.0 - alpha, double(used));
        for (size_t c = 0; c < nc; ++c) out.scores[c] += w * rm.r_at(a, c);
        ++used;
    }
    if (used == 0) fail(TP_E_EMPTY, "EmptyRanks: no ranked agent is present in the matrix");

    out.ranking.resize(nc);
    std::iota(out.ranking.begin(), out.ranking.end(), 0);
    std::stable_sort(out.ranking.begin(), out.ranking.end(), [&](int a, int b) {
        if (out.scores[size_t(a)] != out.scores[size_t(b)])
            return out.scores[size_t(a)] > out.scores[size_t(b)];
        return a < b;
    });
    return out;
}

bool topk_hit(const std::vector<int>& ranking, int true_community, int k) {
    if (k < 1) fail(TP_E_INVALID, "K must be >= 1");
    for (int i = 0; i < k && i < int(ranking.size()); ++i)
        if (ranking[size_t(i)] == true_community) return true;
    return false;
}

// ------------------------------------------------------------- container

namespace {
constexpr char kNetMagic[4] = {'T', 'P', 'N', 'W'};
constexpr uint32_t kNetVersion = 1;
}  // namespace

void save_network(const OccupationNetwork& net, const std::string& path) {
    nlohmann::ordered_json hdr;
    hdr["format_version"] = kNetVersion;
    hdr["codes"] = net.codes;
    hdr["titles"] = net.titles;
    hdr["dwa_ids"] = net.dwa_ids;
    hdr["profiles"] = net.profiles;
    hdr["partition"] = net.partition;
    hdr["num_communities"] = net.num_communities;
    hdr["community_labels"] = net.community_labels;
    std::string hj = hdr.dump();

    std::string out;
    out.append(kNetMagic, 4);
    uint32_t v = kNetVersion;
    out.append(reinterpret_cast<char*>(&v), 4);
    uint32_t hl = uint32_t(hj.size());
    out.append(reinterpret_cast<char*>(&hl), 4);
    out += hj;
    uint64_t cells = net.weights.size();
    out.append(reinterpret_cast<char*>(&cells), 8);
    out.append(reinterpret_cast<const char*>(net.weights.data()), cells * sizeof(double));
    uint64_t digest = fnv1a64(net.weights.data(), cells * sizeof(double));
    out.append(reinterpret_cast<char*>(&digest), 8);
    write_file(path, out);
}

OccupationNetwork load_network(const std::string& path) {
    std::string buf = read_file(path);
    size_t pos = 0;
    auto need = [&](size_t n) {
        if (pos + n > buf.size()) fail(TP_E_CORRUPT, path + ": truncated network container");
    };
    need(12);
    if (std::memcmp(buf.data(), kNetMagic, 4) != 0)
        fail(TP_E_CORRUPT, path + ": not a network container");
    pos = 4;
    uint32_t version;
    std::memcpy(&version, buf.data() + pos, 4);
    pos += 4;
    if (version != kNetVersion)
        fail(TP_E_VERSION, path + ": unsupported network version " + std::to_string(version));
    uint32_t hl;
    std::memcpy(&hl, buf.data() + pos, 4);
    pos += 4;
    need(hl);
    nlohmann::json hdr;
    try {
        hdr = nlohmann::json::parse(buf.substr(pos, hl));
    } catch (const nlohmann::json::exception& e) {
        fail(TP_E_CORRUPT, path + ": bad network header: " + std::string(e.what()));
    }
    pos += hl;

    OccupationNetwork net;
    net.codes = hdr.at("codes").get<std::vector<std::string>>();
    net.titles = hdr.at("titles").get<std::vector<std::string>>();
    net.dwa_ids = hdr.at("dwa_ids").get<std::vector<std::string>>();
    net.profiles = hdr.at("profiles").get<std::vector<std::vector<int>>>();
    net.partition = hdr.at("partition").get<std::vector<int>>();
    net.num_communities = hdr.at("num_communities").get<int>();
    net.community_labels = hdr.at("community_labels").get<std::vector<std::string>>();

    need(8);
    uint64_t cells;
    std::memcpy(&cells, buf.data() + pos, 8);
    pos += 8;
    size_t n = net.codes.size();
    if (cells != n * n) fail(TP_E_CORRUPT, path + ": weight matrix size mismatch");
    need(cells * sizeof(double));
    net.weights.resize(cells);
    std::memcpy(net.weights.data(), buf.data() + pos, cells * sizeof(double));
    uint64_t digest = fnv1a64(buf.data() + pos, cells * sizeof(double));
    pos += cells * sizeof(double);
    need(8);
    uint64_t stored;
    std::memcpy(&stored, buf.data() + pos, 8);
    if (stored != digest) fail(TP_E_CORRUPT, path + ": weight digest mismatch");
    recompute_strengths(net);
    return net;
}

}  // namespace tp
