#include "trafficprint.h"

#include <cmath>
#include <cstring>
#include <optional>
#include <set>

#include "csv.hpp"
#include "dataset.hpp"
#include "eval.hpp"
#include "model.hpp"
#include "occupation.hpp"
#include "rng.hpp"
#include "sim.hpp"
#include "trace.hpp"
#include "util.hpp"

// Thin extern "C" layer: opaque handles wrap the core types, exceptions are
// mapped to status codes, messages land in a thread-local slot.

struct tp_traces {
    std::vector<tp::Trace> v;
};
struct tp_dataset {
    tp::Dataset ds;
};
struct tp_model {
    tp::Model m;
};
struct tp_network {
    tp::OccupationNetwork net;
};
struct tp_rmatrix {
    tp::CorrelationMatrix rm;
};

namespace {

thread_local std::string g_last_error;

template <typename F>
tp_status guarded(F&& f) {
    try {
        f();
        g_last_error.clear();
        return TP_OK;
    } catch (const tp::Error& e) {
        g_last_error = e.what();
        return e.code();
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return TP_E_INTERNAL;
    } catch (...) {
        g_last_error = "unknown error";
        return TP_E_INTERNAL;
    }
}

std::string require(const char* s, const char* what) {
    if (!s || !*s) tp::fail(TP_E_INVALID, std::string(what) + " must be provided");
    return s;
}

tp::IngestConfig ingest_config(const tp_ingest_options* opt) {
    if (!opt) tp::fail(TP_E_INVALID, "ingest options must be provided");
    tp::IngestConfig cfg;
    for (auto& a : tp::split(require(opt->client_addrs, "client_addrs"), ','))
        if (!tp::trim(a).empty()) cfg.client_addrs.push_back(tp::trim(a));
    if (opt->provider_addrs)
        for (auto& a : tp::split(opt->provider_addrs, ','))
            if (!tp::trim(a).empty()) cfg.provider_addrs.push_back(tp::trim(a));
    cfg.scope = tp::flow_scope_from_string(require(opt->scope, "scope"));
    cfg.min_payload = opt->min_payload;
    cfg.validate();
    return cfg;
}

tp::MtamConfig mtam_config(const tp_extract_options* opt) {
    if (!opt) tp::fail(TP_E_INVALID, "extract options must be provided");
    tp::MtamConfig cfg;
    cfg.windows = opt->windows;
    cfg.mode = tp::window_mode_from_string(require(opt->mode, "mode"));
    cfg.gap = opt->gap;
    cfg.clip_counts = opt->clip_counts;
    cfg.clip_bytes = opt->clip_bytes;
    cfg.validate();
    return cfg;
}

tp::TrainConfig train_config(const tp_train_options* opt) {
    if (!opt) tp::fail(TP_E_INVALID, "train options must be provided");
    tp::TrainConfig cfg;
    cfg.epochs = opt->epochs;
    cfg.batch_size = opt->batch_size;
    cfg.learning_rate = opt->learning_rate;
    std::string o = require(opt->optimizer, "optimizer");
    if (o == "adam")
        cfg.optimizer = tp::TrainConfig::Opt::adam;
    else if (o == "sgd_momentum")
        cfg.optimizer = tp::TrainConfig::Opt::sgd_momentum;
    else
        tp::fail(TP_E_INVALID, "unknown optimizer '" + o + "'");
    cfg.seed = opt->seed;
    cfg.validation_fraction = opt->validation_fraction;
    cfg.early_stop_train_acc = opt->early_stop_train_acc;
    cfg.early_stop_train_loss = opt->early_stop_train_loss;
    cfg.validate();
    return cfg;
}

struct RankRow {
    std::string user_id;
    std::string true_community;  // may be empty
    std::vector<std::string> agents;
};

std::vector<RankRow> read_ranks_csv(const std::string& path) {
    tp::CsvTable tab = tp::read_csv(path);
    int c_user = tab.column("user_id"), c_true = tab.column("true_community"),
        c_agents = tab.column("agents");
    if (c_user < 0 || c_agents < 0)
        tp::fail(TP_E_SCHEMA, path + ": header must contain user_id[,true_community],agents");
    std::vector<RankRow> rows;
    for (const auto& row : tab.rows) {
        RankRow r;
        r.user_id = row.at(size_t(c_user));
        if (c_true >= 0 && size_t(c_true) < row.size()) r.true_community = row[size_t(c_true)];
        for (auto& a : tp::split(row.at(size_t(c_agents)), ';'))
            if (!tp::trim(a).empty()) r.agents.push_back(tp::trim(a));
        if (r.agents.empty())
            tp::fail(TP_E_SCHEMA, path + ": user '" + r.user_id + "' has no ranked agents");
        std::set<std::string> seen(r.agents.begin(), r.agents.end());
        if (seen.size() != r.agents.size())
            tp::fail(TP_E_SCHEMA,
                     path + ": user '" + r.user_id + "' ranks the same agent more than once");
        rows.push_back(std::move(r));
    }
    return rows;
}

void write_preds(const std::vector<std::string>& ids, const std::vector<std::string>& labels,
                 const std::vector<tp::Prediction>& preds, const std::string& path) {
    std::string out = "trace_id,label,predicted,confidence\n";
    for (size_t i = 0; i < preds.size(); ++i) {
        double conf = 0;
        for (double p : preds[i].probs) conf = std::max(conf, p);
        out += tp::csv_join({ids[i], labels[i], preds[i].label, tp::fmt_double(conf)}) + "\n";
    }
    tp::write_file(path, out);
}

void write_embeddings(const std::vector<std::string>& ids, const std::vector<std::string>& labels,
                      const std::vector<tp::Prediction>& preds, const std::string& path) {
    if (preds.empty()) {
        tp::write_file(path, "trace_id,label\n");
        return;
    }
    std::string out = "trace_id,label";
    for (size_t k = 0; k < preds[0].embedding.size(); ++k)
        out += ",v_" + std::to_string(k + 1);
    out += "\n";
    for (size_t i = 0; i < preds.size(); ++i) {
        std::vector<std::string> row{ids[i], labels[i]};
        for (double v : preds[i].embedding) row.push_back(tp::fmt_double(v));
        out += tp::csv_join(row) + "\n";
    }
    tp::write_file(path, out);
}

}  // namespace

extern "C" {

const char* tp_version(void) { return "0.1.0"; }

const char* tp_status_name(tp_status s) {
    switch (s) {
        case TP_OK: return "ok";
        case TP_E_INVALID: return "invalid-argument";
        case TP_E_PARSE: return "parse-error";
        case TP_E_SCHEMA: return "schema-error";
        case TP_E_ORDER: return "order-error";
        case TP_E_IO: return "io-error";
        case TP_E_VERSION: return "version-error";
        case TP_E_CORRUPT: return "corrupt-container";
        case TP_E_SHAPE: return "shape-error";
        case TP_E_DEGENERATE: return "degenerate-input";
        case TP_E_DIVERGENCE: return "divergence";
        case TP_E_INSUFFICIENT: return "insufficient-input";
        case TP_E_EMPTY: return "empty-input";
        case TP_E_INTERNAL: return "internal-error";
    }
    return "unknown";
}

const char* tp_last_error(void) { return g_last_error.c_str(); }

// ------------------------------------------------------------------ ingest

tp_ingest_options tp_ingest_options_default(void) {
    tp_ingest_options o;
    o.client_addrs = nullptr;
    o.provider_addrs = nullptr;
    o.scope = "primary";
    o.session_gap = 30.0;
    o.min_payload = 1;
    o.label = nullptr;
    return o;
}

static void apply_label(std::vector<tp::Trace>& traces, const char* label) {
    if (label && *label)
        for (auto& t : traces) t.label = label;
}

tp_status tp_traces_from_pcap_file(const char* path, const tp_ingest_options* opt,
                                   tp_traces** out) {
    return guarded([&] {
        if (!out) tp::fail(TP_E_INVALID, "output handle must be provided");
        std::string p = require(path, "path");
        tp::IngestConfig cfg = ingest_config(opt);
        std::string bytes = tp::read_file(p);
        auto records = tp::parse_pcap(
            std::span<const uint8_t>(reinterpret_cast<const uint8_t*>(bytes.data()), bytes.size()),
            cfg);
        std::string stem = p;
        if (auto slash = stem.find_last_of('/'); slash != std::string::npos)
            stem = stem.substr(slash + 1);
        if (auto dot = stem.find_last_of('.'); dot != std::string::npos) stem = stem.substr(0, dot);
        auto traces = tp::assemble_traces(std::move(records), cfg, opt->session_gap, stem);
        apply_label(traces, opt->label);
        *out = new tp_traces{std::move(traces)};
    });
}

tp_status tp_traces_from_pcap_buffer(const uint8_t* bytes, size_t len,
                                     const tp_ingest_options* opt, const char* id_prefix,
                                     tp_traces** out) {
    return guarded([&] {
        if (!out || !bytes) tp::fail(TP_E_INVALID, "buffer and output handle must be provided");
        tp::IngestConfig cfg = ingest_config(opt);
        auto records = tp::parse_pcap(std::span<const uint8_t>(bytes, len), cfg);
        auto traces = tp::assemble_traces(std::move(records), cfg, opt->session_gap,
                                          id_prefix && *id_prefix ? id_prefix : "trace");
        apply_label(traces, opt->label);
        *out = new tp_traces{std::move(traces)};
    });
}

tp_status tp_traces_read(const char* path, tp_traces** out) {
    return guarded([&] {
        if (!out) tp::fail(TP_E_INVALID, "output handle must be provided");
        *out = new tp_traces{tp::read_traces(require(path, "path"))};
    });
}

tp_status tp_traces_write(const tp_traces* traces, const char* path) {
    return guarded([&] {
        if (!traces) tp::fail(TP_E_INVALID, "traces handle must be provided");
        tp::write_traces(traces->v, require(path, "path"));
    });
}

tp_status tp_traces_merge(tp_traces* dst, const tp_traces* src) {
    return guarded([&] {
        if (!dst || !src) tp::fail(TP_E_INVALID, "both handles must be provided");
        dst->v.insert(dst->v.end(), src->v.begin(), src->v.end());
    });
}

size_t tp_traces_count(const tp_traces* traces) { return traces ? traces->v.size() : 0; }

void tp_traces_free(tp_traces* traces) { delete traces; }

// ---------------------------------------------------------------- features

tp_extract_options tp_extract_options_default(void) {
    tp_extract_options o;
    o.windows = 1800;
    o.mode = "uniform";
    o.gap = 0.05;
    o.normalize = "none";
    o.clip_counts = -1;
    o.clip_bytes = -1;
    return o;
}

tp_status tp_dataset_extract(const tp_traces* traces, const tp_extract_options* opt,
                             tp_dataset** out, size_t* n_failures) {
    return guarded([&] {
        if (!traces || !out) tp::fail(TP_E_INVALID, "traces and output handle must be provided");
        tp::MtamConfig cfg = mtam_config(opt);
        tp::NormScheme scheme = tp::norm_scheme_from_string(require(opt->normalize, "normalize"));
        tp::DatasetBuild build = tp::make_dataset(traces->v, cfg, scheme);
        if (n_failures) *n_failures = build.failures.size();
        *out = new tp_dataset{std::move(build.dataset)};
    });
}

tp_status tp_dataset_read(const char* path, tp_dataset** out) {
    return guarded([&] {
        if (!out) tp::fail(TP_E_INVALID, "output handle must be provided");
        *out = new tp_dataset{tp::load_dataset(require(path, "path"))};
    });
}

tp_status tp_dataset_write(const tp_dataset* ds, const char* path) {
    return guarded([&] {
        if (!ds) tp::fail(TP_E_INVALID, "dataset handle must be provided");
        tp::save_dataset(ds->ds, require(path, "path"));
    });
}

size_t tp_dataset_count(const tp_dataset* ds) { return ds ? ds->ds.samples.size() : 0; }

int32_t tp_dataset_num_classes(const tp_dataset* ds) { return ds ? ds->ds.num_classes() : 0; }

void tp_dataset_free(tp_dataset* ds) { delete ds; }

// -------------------------------------------------------------- classifier

tp_train_options tp_train_options_default(void) {
    tp_train_options o;
    o.epochs = 100;
    o.batch_size = 32;
    o.learning_rate = 1e-3;
    o.optimizer = "adam";
    o.seed = 0;
    o.validation_fraction = 0.1;
    o.label_kind = "agent";
    o.early_stop_train_acc = 0.999;
    o.early_stop_train_loss = 0.02;
    return o;
}

tp_status tp_model_train(const tp_dataset* ds, const tp_train_options* opt,
                         const char* history_csv, tp_model** out) {
    return guarded([&] {
        if (!ds || !out) tp::fail(TP_E_INVALID, "dataset and output handle must be provided");
        tp::TrainConfig cfg = train_config(opt);
        tp::Model model = tp::build_model(
            tp::nn::ArchConfig::default_for(ds->ds.width(), ds->ds.num_classes()), cfg.seed);
        model.label_kind = opt->label_kind ? opt->label_kind : "";
        auto history = tp::train(model, ds->ds, cfg);
        if (history_csv && *history_csv) tp::write_history_csv(history, history_csv);
        *out = new tp_model{std::move(model)};
    });
}

tp_status tp_model_save(const tp_model* m, const char* path) {
    return guarded([&] {
        if (!m) tp::fail(TP_E_INVALID, "model handle must be provided");
        tp::save_model(m->m, require(path, "path"));
    });
}

tp_status tp_model_read(const char* path, tp_model** out) {
    return guarded([&] {
        if (!out) tp::fail(TP_E_INVALID, "output handle must be provided");
        *out = new tp_model{tp::load_model(require(path, "path"))};
    });
}

tp_status tp_model_classify_traces(tp_model* m, const tp_traces* traces,
                                   double open_world_threshold, const char* preds_csv,
                                   const char* embeddings_csv) {
    return guarded([&] {
        if (!m || !traces) tp::fail(TP_E_INVALID, "model and traces handles must be provided");
        std::optional<double> thr;
        if (open_world_threshold >= 0) thr = open_world_threshold;
        bool want_emb = embeddings_csv && *embeddings_csv;
        // featurize into the model's trained space, then predict in batches
        std::vector<std::string> ids, labels;
        std::vector<std::vector<float>> feats;
        for (const auto& t : traces->v) {
            tp::Mtam mt = tp::normalize(tp::extract_mtam(t, m->m.mtam), m->m.scheme);
            feats.emplace_back(mt.cells.begin(), mt.cells.end());
            ids.push_back(t.trace_id);
            labels.push_back(t.label.value_or(""));
        }
        std::vector<const float*> rows;
        rows.reserve(feats.size());
        for (const auto& f : feats) rows.push_back(f.data());
        auto preds = tp::predict_features(m->m, rows, thr, want_emb);
        write_preds(ids, labels, preds, require(preds_csv, "preds_csv"));
        if (want_emb) write_embeddings(ids, labels, preds, embeddings_csv);
    });
}

tp_status tp_model_classify_dataset(tp_model* m, const tp_dataset* ds,
                                    double open_world_threshold, const char* preds_csv,
                                    const char* embeddings_csv) {
    return guarded([&] {
        if (!m || !ds) tp::fail(TP_E_INVALID, "model and dataset handles must be provided");
        if (ds->ds.config_hash() != m->m.trained_on)
            tp::fail(TP_E_INVALID,
                     "dataset was extracted with a different configuration than the model "
                     "was trained on");
        std::optional<double> thr;
        if (open_world_threshold >= 0) thr = open_world_threshold;
        bool want_emb = embeddings_csv && *embeddings_csv;
        std::vector<const float*> rows;
        std::vector<std::string> ids, labels;
        for (const auto& s : ds->ds.samples) {
            rows.push_back(s.cells.data());
            ids.push_back(s.trace_id);
            labels.push_back(ds->ds.labels[size_t(s.label)]);
        }
        auto preds = tp::predict_features(m->m, rows, thr, want_emb);
        write_preds(ids, labels, preds, require(preds_csv, "preds_csv"));
        if (want_emb) write_embeddings(ids, labels, preds, embeddings_csv);
    });
}

void tp_model_free(tp_model* m) { delete m; }

// -------------------------------------------------------------- evaluation

tp_status tp_evaluate(const tp_dataset* ds, int32_t repeats, const char* ratios,
                      const tp_train_options* opt, uint64_t seed, const char* report_csv,
                      double* macro_f1_mean) {
    return guarded([&] {
        if (!ds) tp::fail(TP_E_INVALID, "dataset handle must be provided");
        tp::SplitRatios r = tp::SplitRatios::parse(require(ratios, "ratios"));
        tp::TrainConfig cfg = train_config(opt);
        tp::EvalReport report = tp::repeated_evaluate(ds->ds, repeats, r, cfg, seed);
        if (report_csv && *report_csv) tp::write_report_csv(report, report_csv);
        if (macro_f1_mean) *macro_f1_mean = report.macro_f1_mean;
    });
}

// ------------------------------------------------------- occupation network

tp_status tp_network_build(const char* occupations_csv, const char* tasks_csv,
                           const char* dwa_links_csv, tp_network** out) {
    return guarded([&] {
        if (!out) tp::fail(TP_E_INVALID, "output handle must be provided");
        tp::Taxonomy tax =
            tp::load_taxonomy(require(occupations_csv, "occupations_csv"),
                              require(tasks_csv, "tasks_csv"), require(dwa_links_csv, "dwa_links_csv"));
        *out = new tp_network{tp::build_network(tax)};
    });
}

tp_status tp_network_detect_communities(tp_network* net, uint64_t seed, double resolution,
                                        int32_t* k_out, double* q_out) {
    return guarded([&] {
        if (!net) tp::fail(TP_E_INVALID, "network handle must be provided");
        double q = tp::detect_communities(net->net, seed, resolution);
        if (k_out) *k_out = net->net.num_communities;
        if (q_out) *q_out = q;
    });
}

tp_status tp_network_set_partition(tp_network* net, const char* partition_csv, int32_t* k_out) {
    return guarded([&] {
        if (!net) tp::fail(TP_E_INVALID, "network handle must be provided");
        tp::set_partition_csv(net->net, require(partition_csv, "partition_csv"));
        if (k_out) *k_out = net->net.num_communities;
    });
}

tp_status tp_network_read(const char* path, tp_network** out) {
    return guarded([&] {
        if (!out) tp::fail(TP_E_INVALID, "output handle must be provided");
        *out = new tp_network{tp::load_network(require(path, "path"))};
    });
}

tp_status tp_network_write(const tp_network* net, const char* path) {
    return guarded([&] {
        if (!net) tp::fail(TP_E_INVALID, "network handle must be provided");
        tp::save_network(net->net, require(path, "path"));
    });
}

tp_status tp_network_modularity(const tp_network* net, double* q_out) {
    return guarded([&] {
        if (!net || !q_out) tp::fail(TP_E_INVALID, "network handle and output must be provided");
        if (!net->net.has_partition())
            tp::fail(TP_E_INVALID, "network has no installed partition");
        *q_out = tp::modularity(net->net, net->net.partition);
    });
}

size_t tp_network_size(const tp_network* net) { return net ? net->net.size() : 0; }

void tp_network_free(tp_network* net) { delete net; }

// ------------------------------------------------------ correlation matrix

tp_status tp_rmatrix_correlate(const tp_network* net, const char* agents_dwa_csv,
                               tp_rmatrix** out) {
    return guarded([&] {
        if (!net || !out) tp::fail(TP_E_INVALID, "network and output handle must be provided");
        if (!net->net.has_partition())
            tp::fail(TP_E_INVALID, "network has no installed partition; run community detection "
                                   "or install one first");
        std::map<std::string, int> known;
        for (size_t i = 0; i < net->net.dwa_ids.size(); ++i) known[net->net.dwa_ids[i]] = int(i);
        auto profiles =
            tp::load_agent_profiles(require(agents_dwa_csv, "agents_dwa_csv"), &known);
        if (profiles.empty()) tp::fail(TP_E_EMPTY, "no agent profiles in " + std::string(agents_dwa_csv));
        std::vector<std::string> agents;
        std::vector<double> q_raw;
        for (const auto& p : profiles) {
            agents.push_back(p.agent_id);
            auto dq = tp::probe_agent(net->net, p);
            q_raw.insert(q_raw.end(), dq.begin(), dq.end());
        }
        *out = new tp_rmatrix{tp::rca_scores(agents, net->net.community_labels, q_raw,
                                             net->net.digest())};
    });
}

tp_status tp_rmatrix_write(const tp_rmatrix* rm, const char* csv_path) {
    return guarded([&] {
        if (!rm) tp::fail(TP_E_INVALID, "matrix handle must be provided");
        tp::write_rmatrix_csv(rm->rm, require(csv_path, "csv_path"));
    });
}

tp_status tp_rmatrix_read(const char* csv_path, tp_rmatrix** out) {
    return guarded([&] {
        if (!out) tp::fail(TP_E_INVALID, "output handle must be provided");
        *out = new tp_rmatrix{tp::read_rmatrix_csv(require(csv_path, "csv_path"))};
    });
}

void tp_rmatrix_free(tp_rmatrix* rm) { delete rm; }

tp_status tp_profile_ranks(const tp_rmatrix* rm, const char* ranks_csv, double alpha,
                           double noise_p, uint64_t seed, int32_t topk, const char* report_csv,
                           double* topk_acc_out) {
    return guarded([&] {
        if (!rm) tp::fail(TP_E_INVALID, "matrix handle must be provided");
        if (topk < 1) tp::fail(TP_E_INVALID, "topk must be >= 1");
        auto rows = read_ranks_csv(require(ranks_csv, "ranks_csv"));

        auto community_index = [&](const std::string& label) {
            for (size_t i = 0; i < rm->rm.community_labels.size(); ++i)
                if (rm->rm.community_labels[i] == label) return int(i);
            tp::fail(TP_E_SCHEMA, "true community '" + label + "' is not a column of the matrix");
        };

        struct Out {
            std::string user;
            std::string truth;
            std::vector<int> ranking;
            std::vector<bool> hits;
        };
        std::vector<Out> outs;
        std::vector<int64_t> hit_counts(size_t(topk), 0);
        int64_t scored = 0;
        size_t unknown_total = 0;
        for (size_t u = 0; u < rows.size(); ++u) {
            tp::UsageRanks ranks{rows[u].agents};
            if (noise_p > 0)
                ranks.ranked_agents =
                    tp::perturb_ranks(ranks.ranked_agents, noise_p, tp::Rng::derive(seed, u));
            auto scores = tp::infer_occupation(rm->rm, ranks, alpha);
            unknown_total += scores.unknown_agents;
            Out o;
            o.user = rows[u].user_id;
            o.truth = rows[u].true_community;
            o.ranking = scores.ranking;
            if (!o.truth.empty()) {
                int truth_idx = community_index(o.truth);
                ++scored;
                for (int kk = 1; kk <= topk; ++kk) {
                    bool hit = tp::topk_hit(o.ranking, truth_idx, kk);
                    o.hits.push_back(hit);
                    if (hit) ++hit_counts[size_t(kk - 1)];
                }
            }
            outs.push_back(std::move(o));
        }

        std::string out = "# profile alpha=" + tp::fmt_double(alpha) +
                          " noise=" + tp::fmt_double(noise_p) + " seed=" + std::to_string(seed) +
                          " topk=" + std::to_string(topk) + " users=" + std::to_string(rows.size()) +
                          " scored=" + std::to_string(scored) +
                          " skipped_unknown_agents=" + std::to_string(unknown_total) + "\n";
        if (scored > 0) {
            out += "#";
            for (int kk = 1; kk <= topk; ++kk)
                out += " acc@" + std::to_string(kk) + "=" +
                       tp::fmt_double(double(hit_counts[size_t(kk - 1)]) / double(scored));
            out += "\n";
        }
        std::vector<std::string> hdr{"user_id", "true_community", "ranking"};
        for (int kk = 1; kk <= topk; ++kk) hdr.push_back("hit@" + std::to_string(kk));
        out += tp::csv_join(hdr) + "\n";
        for (const auto& o : outs) {
            std::string ranking;
            for (size_t i = 0; i < o.ranking.size(); ++i) {
                if (i) ranking += ";";
                ranking += rm->rm.community_labels[size_t(o.ranking[i])];
            }
            std::vector<std::string> row{o.user, o.truth, ranking};
            for (int kk = 1; kk <= topk; ++kk)
                row.push_back(o.hits.empty() ? "" : (o.hits[size_t(kk - 1)] ? "1" : "0"));
            out += tp::csv_join(row) + "\n";
        }
        if (report_csv && *report_csv) tp::write_file(report_csv, out);
        if (topk_acc_out)
            *topk_acc_out =
                scored > 0 ? double(hit_counts[size_t(topk - 1)]) / double(scored) : -1.0;
    });
}

// -------------------------------------------------------------- simulation

tp_status tp_simulate_traffic(const char* archetypes_json, int32_t per_class, uint64_t seed,
                              const char* label_kind, tp_traces** out) {
    return guarded([&] {
        if (!out) tp::fail(TP_E_INVALID, "output handle must be provided");
        if (per_class < 1) tp::fail(TP_E_INVALID, "per_class must be >= 1");
        tp::ArchetypeLibrary lib = tp::load_archetypes(require(archetypes_json, "archetypes_json"));
        std::string lk = label_kind && *label_kind ? label_kind : "archetype";
        tp::SimLabel sl;
        if (lk == "archetype")
            sl = tp::SimLabel::archetype;
        else if (lk == "behavior")
            sl = tp::SimLabel::behavior;
        else
            tp::fail(TP_E_INVALID, "label kind must be archetype|behavior, got '" + lk + "'");
        auto traces = std::make_unique<tp_traces>();
        for (size_t a = 0; a < lib.archetypes.size(); ++a)
            for (int i = 0; i < per_class; ++i)
                traces->v.push_back(tp::gen_trace(lib.archetypes[a],
                                                  tp::Rng::derive(seed, a * 1000003ULL + size_t(i)),
                                                  sl));
        *out = traces.release();
    });
}

tp_status tp_simulate_users(const tp_network* net, const tp_rmatrix* rm, int32_t count,
                            int32_t list_length, uint64_t seed, const char* out_csv) {
    return guarded([&] {
        if (!net || !rm) tp::fail(TP_E_INVALID, "network and matrix handles must be provided");
        if (count < 1) tp::fail(TP_E_INVALID, "count must be >= 1");
        if (!net->net.has_partition())
            tp::fail(TP_E_INVALID, "network has no installed partition");
        int k = net->net.num_communities;
        size_t na = rm->rm.rows();
        if (rm->rm.cols() != size_t(k))
            tp::fail(TP_E_INVALID, "matrix has " + std::to_string(rm->rm.cols()) +
                                       " communities but the network has " + std::to_string(k));
        std::string out = "user_id,true_community,agents\n";
        for (int i = 0; i < count; ++i) {
            tp::VirtualUserSpec spec;
            spec.true_community = i % k;
            spec.agents = rm->rm.agent_ids;
            spec.weights.resize(na);
            for (size_t a = 0; a < na; ++a)
                spec.weights[a] = std::exp(rm->rm.r_at(a, size_t(spec.true_community)));
            spec.list_length = list_length > 0 ? std::min<int>(list_length, int(na)) : int(na);
            spec.seed = tp::Rng::derive(seed, uint64_t(i));
            tp::VirtualUser u = tp::gen_user(spec);
            std::string agents;
            for (size_t a = 0; a < u.ranked_agents.size(); ++a) {
                if (a) agents += ";";
                agents += u.ranked_agents[a];
            }
            out += tp::csv_join({"user-" + std::to_string(i),
                                 net->net.community_labels[size_t(u.true_community)], agents}) +
                   "\n";
        }
        tp::write_file(require(out_csv, "out_csv"), out);
    });
}

}  // extern "C"
