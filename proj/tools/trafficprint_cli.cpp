// trafficprint command line: wires pcap ingestion, feature extraction,
// classifier training/evaluation, the occupation network, and the synthetic
// generators together. Talks to the core exclusively through the C API.

#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "trafficprint.h"

namespace fs = std::filesystem;

namespace {

int exit_code_for(tp_status s) {
    switch (s) {
        case TP_OK:
            return 0;
        case TP_E_IO:
        case TP_E_DIVERGENCE:
        case TP_E_INTERNAL:
            return 2;
        default:
            return 1;  // validation: bad inputs, formats, configs
    }
}

[[noreturn]] void die(tp_status s) {
    std::fprintf(stderr, "error (%s): %s\n", tp_status_name(s), tp_last_error());
    std::exit(exit_code_for(s));
}

void check(tp_status s) {
    if (s != TP_OK) die(s);
}

template <typename T, void (*F)(T*)>
struct Deleter {
    void operator()(T* p) const { F(p); }
};
using TracesPtr = std::unique_ptr<tp_traces, Deleter<tp_traces, tp_traces_free>>;
using DatasetPtr = std::unique_ptr<tp_dataset, Deleter<tp_dataset, tp_dataset_free>>;
using ModelPtr = std::unique_ptr<tp_model, Deleter<tp_model, tp_model_free>>;
using NetworkPtr = std::unique_ptr<tp_network, Deleter<tp_network, tp_network_free>>;
using RmatrixPtr = std::unique_ptr<tp_rmatrix, Deleter<tp_rmatrix, tp_rmatrix_free>>;

struct IngestArgs {
    std::string pcap, client_ip, provider_ip, scope = "primary", label, out;
    double session_gap = 30.0;
    int64_t min_payload = 1;
};

void run_ingest(const IngestArgs& a) {
    tp_ingest_options opt = tp_ingest_options_default();
    opt.client_addrs = a.client_ip.c_str();
    opt.provider_addrs = a.provider_ip.c_str();
    opt.scope = a.scope.c_str();
    opt.session_gap = a.session_gap;
    opt.min_payload = a.min_payload;
    opt.label = a.label.empty() ? nullptr : a.label.c_str();

    std::vector<std::string> files;
    if (fs::is_directory(a.pcap)) {
        for (const auto& e : fs::directory_iterator(a.pcap))
            if (e.is_regular_file() && e.path().extension() == ".pcap")
                files.push_back(e.path().string());
        std::sort(files.begin(), files.end());
        if (files.empty()) {
            std::fprintf(stderr, "error (invalid-argument): no .pcap files in %s\n",
                         a.pcap.c_str());
            std::exit(1);
        }
    } else {
        files.push_back(a.pcap);
    }

    TracesPtr all;
    for (const auto& f : files) {
        tp_traces* t = nullptr;
        check(tp_traces_from_pcap_file(f.c_str(), &opt, &t));
        if (!all) {
            all.reset(t);
        } else {
            check(tp_traces_merge(all.get(), t));
            tp_traces_free(t);
        }
    }
    check(tp_traces_write(all.get(), a.out.c_str()));
    std::printf("ingested %zu traces from %zu capture file(s) -> %s\n",
                tp_traces_count(all.get()), files.size(), a.out.c_str());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"trafficprint: encrypted-traffic fingerprinting toolkit"};
    app.set_version_flag("--version", tp_version());
    app.require_subcommand(1);

    // ingest
    IngestArgs ing;
    auto* c_ingest = app.add_subcommand("ingest", "parse pcap capture(s) into canonical traces");
    c_ingest->add_option("--pcap", ing.pcap, "capture file or directory")->required();
    c_ingest->add_option("--client-ip", ing.client_ip, "comma-separated client addresses")->required();
    c_ingest->add_option("--provider-ip", ing.provider_ip, "comma-separated provider addresses/prefixes");
    c_ingest->add_option("--scope", ing.scope, "primary|mixed");
    c_ingest->add_option("--session-gap", ing.session_gap, "seconds of silence closing a session");
    c_ingest->add_option("--min-payload", ing.min_payload, "minimum transport payload; 0 keeps pure ACKs");
    c_ingest->add_option("--label", ing.label, "label to attach to every trace");
    c_ingest->add_option("--out", ing.out, "output traces.jsonl")->required();

    // extract
    std::string x_traces, x_mode = "uniform", x_norm = "none", x_out;
    int x_windows = 1800;
    double x_gap = 0.05, x_clip_counts = -1, x_clip_bytes = -1;
    auto* c_extract = app.add_subcommand("extract", "turn traces into a traffic-matrix dataset");
    c_extract->add_option("--traces", x_traces)->required();
    c_extract->add_option("--windows", x_windows, "number of time windows (W)");
    c_extract->add_option("--mode", x_mode, "uniform|fixed-gap");
    c_extract->add_option("--gap", x_gap, "seconds per window in fixed-gap mode");
    c_extract->add_option("--normalize", x_norm, "none|log1p");
    c_extract->add_option("--clip-counts", x_clip_counts, "per-cell count cap (<0 off)");
    c_extract->add_option("--clip-bytes", x_clip_bytes, "per-cell byte cap (<0 off)");
    c_extract->add_option("--out", x_out)->required();

    // train
    std::string t_dataset, t_labels = "agent", t_out, t_history, t_optimizer = "adam";
    uint64_t t_seed = 0;
    int t_epochs = 100, t_batch = 32;
    double t_lr = 1e-3, t_valfrac = 0.1;
    auto* c_train = app.add_subcommand("train", "train the convolutional classifier");
    c_train->add_option("--dataset", t_dataset)->required();
    c_train->add_option("--labels", t_labels, "label semantics recorded in the model (behavior|agent)");
    c_train->add_option("--seed", t_seed);
    c_train->add_option("--epochs", t_epochs);
    c_train->add_option("--lr", t_lr);
    c_train->add_option("--batch", t_batch);
    c_train->add_option("--optimizer", t_optimizer, "adam|sgd_momentum");
    c_train->add_option("--val-fraction", t_valfrac);
    c_train->add_option("--history", t_history, "per-epoch loss/accuracy CSV");
    c_train->add_option("--out", t_out)->required();

    // classify
    std::string cl_model, cl_traces, cl_dataset, cl_out, cl_emb;
    bool cl_open = false;
    double cl_threshold = 0.5;
    auto* c_classify = app.add_subcommand("classify", "predict labels for traces or a dataset");
    c_classify->add_option("--model", cl_model)->required();
    c_classify->add_option("--traces", cl_traces);
    c_classify->add_option("--dataset", cl_dataset);
    c_classify->add_flag("--open-world", cl_open, "reject low-confidence predictions");
    c_classify->add_option("--threshold", cl_threshold, "open-world confidence threshold");
    c_classify->add_option("--embeddings", cl_emb, "penultimate feature export CSV");
    c_classify->add_option("--out", cl_out)->required();

    // evaluate
    std::string e_dataset, e_split = "8:1:1", e_out;
    int e_repeats = 10, e_epochs = 30, e_batch = 32;
    double e_lr = 1e-3;
    uint64_t e_seed = 0;
    auto* c_eval = app.add_subcommand("evaluate", "repeated-split evaluation protocol");
    c_eval->add_option("--dataset", e_dataset)->required();
    c_eval->add_option("--repeats", e_repeats, "number of random train/test splits");
    c_eval->add_option("--split", e_split, "ratios, e.g. 8:1:1");
    c_eval->add_option("--seed", e_seed);
    c_eval->add_option("--epochs", e_epochs);
    c_eval->add_option("--lr", e_lr);
    c_eval->add_option("--batch", e_batch);
    c_eval->add_option("--out", e_out)->required();

    // graph build / communities
    auto* c_graph = app.add_subcommand("graph", "occupation network operations");
    c_graph->require_subcommand(1);
    std::string gb_onet, gb_out;
    auto* c_gbuild = c_graph->add_subcommand("build", "build the network from taxonomy CSVs");
    c_gbuild->add_option("--onet", gb_onet, "directory with occupations.csv, tasks.csv, dwa_links.csv")
        ->required();
    c_gbuild->add_option("--out", gb_out)->required();
    std::string gc_network, gc_partition, gc_out;
    uint64_t gc_seed = 0;
    double gc_resolution = 1.0;
    auto* c_gcomm = c_graph->add_subcommand("communities", "detect or install a community partition");
    c_gcomm->add_option("--network", gc_network)->required();
    c_gcomm->add_option("--seed", gc_seed);
    c_gcomm->add_option("--resolution", gc_resolution);
    c_gcomm->add_option("--partition", gc_partition, "install this partition CSV instead of detecting");
    c_gcomm->add_option("--out", gc_out, "output network (default: overwrite input)");

    // correlate
    std::string co_network, co_agents, co_out;
    auto* c_corr = app.add_subcommand("correlate", "agent-community correlation matrix");
    c_corr->add_option("--network", co_network)->required();
    c_corr->add_option("--agents", co_agents, "agents_dwa.csv")->required();
    c_corr->add_option("--out", co_out)->required();

    // profile
    std::string p_rmatrix, p_ranks, p_out;
    double p_alpha = 0.5, p_noise = 0.0;
    uint64_t p_seed = 0;
    int p_topk = 3;
    auto* c_prof = app.add_subcommand("profile", "infer communities from ranked agent usage");
    c_prof->add_option("--rmatrix", p_rmatrix)->required();
    c_prof->add_option("--ranks", p_ranks, "ranks.csv (user_id[,true_community],agents)")->required();
    c_prof->add_option("--alpha", p_alpha, "EWMA decay in (0,1)");
    c_prof->add_option("--noise", p_noise, "rank swap probability");
    c_prof->add_option("--seed", p_seed);
    c_prof->add_option("--topk", p_topk);
    c_prof->add_option("--out", p_out)->required();

    // simulate traffic / users
    auto* c_sim = app.add_subcommand("simulate", "synthetic generators");
    c_sim->require_subcommand(1);
    std::string st_archetypes, st_label = "archetype", st_out;
    int st_per_class = 100;
    uint64_t st_seed = 0;
    auto* c_straffic = c_sim->add_subcommand("traffic", "generate archetype traces");
    c_straffic->add_option("--archetypes", st_archetypes, "archetypes.json")->required();
    c_straffic->add_option("--per-class", st_per_class)->required();
    c_straffic->add_option("--seed", st_seed);
    c_straffic->add_option("--label", st_label, "archetype|behavior");
    c_straffic->add_option("--out", st_out)->required();
    std::string su_network, su_rmatrix, su_out;
    int su_count = 100, su_list = 0;
    uint64_t su_seed = 0;
    auto* c_susers = c_sim->add_subcommand("users", "generate ranked virtual users");
    c_susers->add_option("--network", su_network)->required();
    c_susers->add_option("--rmatrix", su_rmatrix)->required();
    c_susers->add_option("--count", su_count)->required();
    c_susers->add_option("--seed", su_seed);
    c_susers->add_option("--list-length", su_list, "ranked agents per user (0: all)");
    c_susers->add_option("--out", su_out)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    if (*c_ingest) {
        run_ingest(ing);
    } else if (*c_extract) {
        tp_traces* traces = nullptr;
        check(tp_traces_read(x_traces.c_str(), &traces));
        TracesPtr tp_(traces);
        tp_extract_options opt = tp_extract_options_default();
        opt.windows = x_windows;
        opt.mode = x_mode.c_str();
        opt.gap = x_gap;
        opt.normalize = x_norm.c_str();
        opt.clip_counts = x_clip_counts;
        opt.clip_bytes = x_clip_bytes;
        tp_dataset* ds = nullptr;
        size_t failures = 0;
        check(tp_dataset_extract(traces, &opt, &ds, &failures));
        DatasetPtr dp(ds);
        check(tp_dataset_write(ds, x_out.c_str()));
        std::printf("extracted %zu samples (%d classes, %zu skipped) -> %s\n",
                    tp_dataset_count(ds), tp_dataset_num_classes(ds), failures, x_out.c_str());
        if (failures > 0)
            std::fprintf(stderr, "warning: %zu trace(s) were skipped (unlabeled or empty)\n",
                         failures);
    } else if (*c_train) {
        tp_dataset* ds = nullptr;
        check(tp_dataset_read(t_dataset.c_str(), &ds));
        DatasetPtr dp(ds);
        tp_train_options opt = tp_train_options_default();
        opt.epochs = t_epochs;
        opt.batch_size = t_batch;
        opt.learning_rate = t_lr;
        opt.optimizer = t_optimizer.c_str();
        opt.seed = t_seed;
        opt.validation_fraction = t_valfrac;
        opt.label_kind = t_labels.c_str();
        tp_model* m = nullptr;
        check(tp_model_train(ds, &opt, t_history.empty() ? nullptr : t_history.c_str(), &m));
        ModelPtr mp(m);
        check(tp_model_save(m, t_out.c_str()));
        std::printf("trained on %zu samples (%d classes) -> %s\n", tp_dataset_count(ds),
                    tp_dataset_num_classes(ds), t_out.c_str());
    } else if (*c_classify) {
        if (cl_traces.empty() == cl_dataset.empty()) {
            std::fprintf(stderr, "error (invalid-argument): pass exactly one of --traces/--dataset\n");
            return 1;
        }
        tp_model* m = nullptr;
        check(tp_model_read(cl_model.c_str(), &m));
        ModelPtr mp(m);
        double thr = cl_open ? cl_threshold : -1.0;
        const char* emb = cl_emb.empty() ? nullptr : cl_emb.c_str();
        if (!cl_traces.empty()) {
            tp_traces* traces = nullptr;
            check(tp_traces_read(cl_traces.c_str(), &traces));
            TracesPtr tr(traces);
            check(tp_model_classify_traces(m, traces, thr, cl_out.c_str(), emb));
        } else {
            tp_dataset* ds = nullptr;
            check(tp_dataset_read(cl_dataset.c_str(), &ds));
            DatasetPtr dp(ds);
            check(tp_model_classify_dataset(m, ds, thr, cl_out.c_str(), emb));
        }
        std::printf("predictions -> %s\n", cl_out.c_str());
    } else if (*c_eval) {
        tp_dataset* ds = nullptr;
        check(tp_dataset_read(e_dataset.c_str(), &ds));
        DatasetPtr dp(ds);
        tp_train_options opt = tp_train_options_default();
        opt.epochs = e_epochs;
        opt.batch_size = e_batch;
        opt.learning_rate = e_lr;
        double macro = 0;
        check(tp_evaluate(ds, e_repeats, e_split.c_str(), &opt, e_seed, e_out.c_str(), &macro));
        std::printf("evaluation over %d repeats: mean macro-F1 %.4f -> %s\n", e_repeats, macro,
                    e_out.c_str());
    } else if (*c_gbuild) {
        fs::path dir(gb_onet);
        tp_network* net = nullptr;
        check(tp_network_build((dir / "occupations.csv").string().c_str(),
                               (dir / "tasks.csv").string().c_str(),
                               (dir / "dwa_links.csv").string().c_str(), &net));
        NetworkPtr np(net);
        check(tp_network_write(net, gb_out.c_str()));
        std::printf("network with %zu occupations -> %s\n", tp_network_size(net), gb_out.c_str());
    } else if (*c_gcomm) {
        tp_network* net = nullptr;
        check(tp_network_read(gc_network.c_str(), &net));
        NetworkPtr np(net);
        int32_t k = 0;
        if (!gc_partition.empty()) {
            check(tp_network_set_partition(net, gc_partition.c_str(), &k));
            double q = 0;
            check(tp_network_modularity(net, &q));
            std::printf("installed partition: %d communities, Q = %.6f\n", k, q);
        } else {
            double q = 0;
            check(tp_network_detect_communities(net, gc_seed, gc_resolution, &k, &q));
            std::printf("detected %d communities, Q = %.6f\n", k, q);
        }
        std::string out = gc_out.empty() ? gc_network : gc_out;
        check(tp_network_write(net, out.c_str()));
    } else if (*c_corr) {
        tp_network* net = nullptr;
        check(tp_network_read(co_network.c_str(), &net));
        NetworkPtr np(net);
        tp_rmatrix* rm = nullptr;
        check(tp_rmatrix_correlate(net, co_agents.c_str(), &rm));
        RmatrixPtr rp(rm);
        check(tp_rmatrix_write(rm, co_out.c_str()));
        std::printf("correlation matrix -> %s\n", co_out.c_str());
    } else if (*c_prof) {
        tp_rmatrix* rm = nullptr;
        check(tp_rmatrix_read(p_rmatrix.c_str(), &rm));
        RmatrixPtr rp(rm);
        double acc = 0;
        check(tp_profile_ranks(rm, p_ranks.c_str(), p_alpha, p_noise, p_seed, p_topk,
                               p_out.c_str(), &acc));
        if (acc >= 0)
            std::printf("profiled: top-%d accuracy %.4f -> %s\n", p_topk, acc, p_out.c_str());
        else
            std::printf("profiled (no ground truth in ranks) -> %s\n", p_out.c_str());
    } else if (*c_straffic) {
        tp_traces* traces = nullptr;
        check(tp_simulate_traffic(st_archetypes.c_str(), st_per_class, st_seed, st_label.c_str(),
                                  &traces));
        TracesPtr tr(traces);
        check(tp_traces_write(traces, st_out.c_str()));
        std::printf("simulated %zu traces -> %s\n", tp_traces_count(traces), st_out.c_str());
    } else if (*c_susers) {
        tp_network* net = nullptr;
        check(tp_network_read(su_network.c_str(), &net));
        NetworkPtr np(net);
        tp_rmatrix* rm = nullptr;
        check(tp_rmatrix_read(su_rmatrix.c_str(), &rm));
        RmatrixPtr rp(rm);
        check(tp_simulate_users(net, rm, su_count, su_list, su_seed, su_out.c_str()));
        std::printf("simulated %d virtual users -> %s\n", su_count, su_out.c_str());
    }
    return 0;
}
