#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "test_util.hpp"
#include "trafficprint.h"

// End-to-end exercises of the public C surface: every handle type, the file
// formats, and the error conventions the CLI relies on.

namespace {

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f.good());
    return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

void spit(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f << text;
}

int count_lines(const std::string& text) {
    int n = 0;
    for (char c : text)
        if (c == '\n') ++n;
    return n;
}

#ifndef TP_DATA_DIR
#define TP_DATA_DIR "data"
#endif

std::string archetypes_path() { return std::string(TP_DATA_DIR) + "/archetypes.json"; }

struct World {
    std::string dir;
    World() {
        dir = tputil::tmp_path("capi_world");
        std::filesystem::create_directories(dir);
        // two planted communities over disjoint activity pools
        std::string occ = "code,title\n";
        std::string tasks = "task_id,occupation_code\n";
        std::string links = "task_id,dwa_id\n";
        for (int c = 0; c < 2; ++c) {
            for (int o = 0; o < 3; ++o) {
                std::string code = "C" + std::to_string(c) + "O" + std::to_string(o);
                occ += code + ",title " + code + "\n";
                std::string task = "task_" + code;
                tasks += task + "," + code + "\n";
                // consecutive windows of the community pool: heavy overlap
                // within a community, none across
                for (int d = o; d < o + 4; ++d)
                    links += task + ",pool" + std::to_string(c) + "_d" + std::to_string(d % 6) +
                             "\n";
            }
        }
        spit(dir + "/occupations.csv", occ);
        spit(dir + "/tasks.csv", tasks);
        spit(dir + "/dwa_links.csv", links);

        std::string agents = "agent_id,dwa_id\n";
        for (int c = 0; c < 2; ++c)
            for (int a = 0; a < 2; ++a)
                for (int d = 0; d < 6; d += 2)
                    agents += "agent" + std::to_string(c * 2 + a) + ",pool" + std::to_string(c) +
                              "_d" + std::to_string(d) + "\n";
        spit(dir + "/agents_dwa.csv", agents);
    }
};

}  // namespace

TEST_CASE("version and status names") {
    CHECK(std::string(tp_version()).find('.') != std::string::npos);
    CHECK(std::string(tp_status_name(TP_OK)) == "ok");
    CHECK(std::string(tp_status_name(TP_E_SCHEMA)) == "schema-error");
}

TEST_CASE("null arguments are invalid, with a message") {
    tp_traces* out = nullptr;
    CHECK(tp_traces_read(nullptr, &out) == TP_E_INVALID);
    CHECK(std::strlen(tp_last_error()) > 0);
    CHECK(tp_traces_read("/nonexistent/file.jsonl", &out) == TP_E_IO);
}

TEST_CASE("traffic simulation, trace files, datasets, training, classification") {
    tp_traces* traces = nullptr;
    REQUIRE(tp_simulate_traffic(archetypes_path().c_str(), 20, 11, "archetype", &traces) == TP_OK);
    CHECK(tp_traces_count(traces) == 120);

    std::string tpath = tputil::tmp_path("capi_traces.jsonl");
    REQUIRE(tp_traces_write(traces, tpath.c_str()) == TP_OK);
    tp_traces* reread = nullptr;
    REQUIRE(tp_traces_read(tpath.c_str(), &reread) == TP_OK);
    CHECK(tp_traces_count(reread) == 120);

    // canonical file round-trip through the C surface is byte-stable
    std::string tpath2 = tputil::tmp_path("capi_traces2.jsonl");
    REQUIRE(tp_traces_write(reread, tpath2.c_str()) == TP_OK);
    CHECK(slurp(tpath) == slurp(tpath2));

    tp_extract_options xopt = tp_extract_options_default();
    xopt.windows = 32;
    xopt.normalize = "log1p";
    tp_dataset* ds = nullptr;
    size_t failures = 9;
    REQUIRE(tp_dataset_extract(traces, &xopt, &ds, &failures) == TP_OK);
    CHECK(failures == 0);
    CHECK(tp_dataset_count(ds) == 120);
    CHECK(tp_dataset_num_classes(ds) == 6);

    std::string dpath = tputil::tmp_path("capi_ds.bin");
    REQUIRE(tp_dataset_write(ds, dpath.c_str()) == TP_OK);
    tp_dataset* ds2 = nullptr;
    REQUIRE(tp_dataset_read(dpath.c_str(), &ds2) == TP_OK);
    CHECK(tp_dataset_count(ds2) == 120);

    tp_train_options topt = tp_train_options_default();
    topt.epochs = 6;
    topt.seed = 3;
    std::string hpath = tputil::tmp_path("capi_history.csv");
    tp_model* model = nullptr;
    REQUIRE(tp_model_train(ds, &topt, hpath.c_str(), &model) == TP_OK);
    CHECK(slurp(hpath).find("epoch,loss,train_acc,val_acc") == 0);

    std::string mpath = tputil::tmp_path("capi_model.bin");
    REQUIRE(tp_model_save(model, mpath.c_str()) == TP_OK);
    tp_model* model2 = nullptr;
    REQUIRE(tp_model_read(mpath.c_str(), &model2) == TP_OK);

    std::string ppath = tputil::tmp_path("capi_preds.csv");
    std::string epath = tputil::tmp_path("capi_emb.csv");
    REQUIRE(tp_model_classify_dataset(model2, ds, -1.0, ppath.c_str(), epath.c_str()) == TP_OK);
    std::string preds = slurp(ppath);
    CHECK(count_lines(preds) == 121);  // header + one row per sample
    CHECK(preds.find("trace_id,label,predicted,confidence") == 0);
    std::string emb = slurp(epath);
    CHECK(emb.find("v_1") != std::string::npos);
    CHECK(count_lines(emb) == 121);

    // classify raw traces through the model's recorded featurization
    std::string ppath2 = tputil::tmp_path("capi_preds2.csv");
    REQUIRE(tp_model_classify_traces(model2, reread, 0.3, ppath2.c_str(), nullptr) == TP_OK);
    CHECK(count_lines(slurp(ppath2)) == 121);

    // the dataset-config guard refuses mismatched features
    tp_extract_options other = xopt;
    other.windows = 16;
    tp_dataset* ds3 = nullptr;
    REQUIRE(tp_dataset_extract(traces, &other, &ds3, nullptr) == TP_OK);
    CHECK(tp_model_classify_dataset(model2, ds3, -1.0, ppath2.c_str(), nullptr) == TP_E_INVALID);

    tp_dataset_free(ds3);
    tp_model_free(model2);
    tp_model_free(model);
    tp_dataset_free(ds2);
    tp_dataset_free(ds);
    tp_traces_free(reread);
    tp_traces_free(traces);
}

TEST_CASE("pcap buffer ingestion through the C surface") {
    tputil::PcapBuilder b;
    tputil::PcapPacket p;
    p.t = 1.0;
    p.src = "192.168.1.5";
    p.dst = "10.0.0.2";
    p.payload = 444;
    b.add(p);
    tp_ingest_options opt = tp_ingest_options_default();
    opt.client_addrs = "192.168.1.5";
    opt.provider_addrs = "10.0.0.0/8";
    opt.label = "smoke";
    tp_traces* traces = nullptr;
    REQUIRE(tp_traces_from_pcap_buffer(b.bytes.data(), b.bytes.size(), &opt, "cap", &traces) ==
            TP_OK);
    CHECK(tp_traces_count(traces) == 1);

    std::vector<uint8_t> junk{1, 2, 3, 4};
    tp_traces* bad = nullptr;
    CHECK(tp_traces_from_pcap_buffer(junk.data(), junk.size(), &opt, "cap", &bad) == TP_E_PARSE);
    CHECK(std::string(tp_last_error()).find("MalformedHeader") != std::string::npos);
    tp_traces_free(traces);
}

TEST_CASE("network, correlation, users, and profiling through the C surface") {
    World w;
    tp_network* net = nullptr;
    REQUIRE(tp_network_build((w.dir + "/occupations.csv").c_str(), (w.dir + "/tasks.csv").c_str(),
                             (w.dir + "/dwa_links.csv").c_str(), &net) == TP_OK);
    CHECK(tp_network_size(net) == 6);

    // correlate before any partition exists: invalid
    tp_rmatrix* early = nullptr;
    CHECK(tp_rmatrix_correlate(net, (w.dir + "/agents_dwa.csv").c_str(), &early) == TP_E_INVALID);

    int32_t k = 0;
    double q = 0;
    REQUIRE(tp_network_detect_communities(net, 5, 1.0, &k, &q) == TP_OK);
    CHECK(k == 2);
    CHECK(q > 0.3);  // two disjoint pools split cleanly

    double q2 = 0;
    REQUIRE(tp_network_modularity(net, &q2) == TP_OK);
    CHECK(q2 == doctest::Approx(q).epsilon(1e-12));

    std::string npath = tputil::tmp_path("capi_net.bin");
    REQUIRE(tp_network_write(net, npath.c_str()) == TP_OK);
    tp_network* net2 = nullptr;
    REQUIRE(tp_network_read(npath.c_str(), &net2) == TP_OK);
    CHECK(tp_network_size(net2) == 6);

    tp_rmatrix* rm = nullptr;
    REQUIRE(tp_rmatrix_correlate(net2, (w.dir + "/agents_dwa.csv").c_str(), &rm) == TP_OK);
    std::string rpath = tputil::tmp_path("capi_rmatrix.csv");
    REQUIRE(tp_rmatrix_write(rm, rpath.c_str()) == TP_OK);
    tp_rmatrix* rm2 = nullptr;
    REQUIRE(tp_rmatrix_read(rpath.c_str(), &rm2) == TP_OK);

    std::string upath = tputil::tmp_path("capi_users.csv");
    REQUIRE(tp_simulate_users(net2, rm2, 40, 0, 9, upath.c_str()) == TP_OK);
    std::string users = slurp(upath);
    CHECK(users.find("user_id,true_community,agents") == 0);
    CHECK(count_lines(users) == 41);

    std::string prof = tputil::tmp_path("capi_profile.csv");
    double acc = -2;
    REQUIRE(tp_profile_ranks(rm2, upath.c_str(), 0.5, 0.0, 4, 1, prof.c_str(), &acc) == TP_OK);
    CHECK(acc >= 0.9);  // planted communities, noiseless: near-perfect top-1

    double noisy_acc = -2;
    REQUIRE(tp_profile_ranks(rm2, upath.c_str(), 0.5, 1.0, 4, 1, prof.c_str(), &noisy_acc) ==
            TP_OK);
    CHECK(noisy_acc <= acc + 1e-12);

    // partition install path
    std::string pcsv = tputil::tmp_path("capi_partition.csv");
    std::string body = "occupation_code,community_id,community_label\n";
    for (int c = 0; c < 2; ++c)
        for (int o = 0; o < 3; ++o)
            body += "C" + std::to_string(c) + "O" + std::to_string(o) + "," + std::to_string(c) +
                    ",Group" + std::to_string(c) + "\n";
    spit(pcsv, body);
    int32_t k2 = 0;
    REQUIRE(tp_network_set_partition(net2, pcsv.c_str(), &k2) == TP_OK);
    CHECK(k2 == 2);

    tp_rmatrix_free(rm2);
    tp_rmatrix_free(rm);
    tp_network_free(net2);
    tp_network_free(net);
}
