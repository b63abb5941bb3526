#include "dataset.hpp"

#include <algorithm>
#include <cstring>
#include <set>

#include "json.hpp"
#include "util.hpp"

// Dataset container layout (little-endian):
//   magic "TPDS" (4) | u32 version=1 | u32 windows | u32 mode (0 uniform,
//   1 fixed_gap) | f64 gap | f64 clip_counts | f64 clip_bytes | u32 scheme
//   (0 none, 1 log1p) | u64 config_hash | u32 n_labels | n_labels x
//   (u32 len, utf8 bytes) | u64 count | count x record
// record: u32 id_len | trace_id bytes | u32 label_index | f32[4 * windows]
//   row-major rows [count_in, count_out, bytes_in, bytes_out].
// A JSON sidecar (<path>.index.json) mirrors the header and lists every
// record's trace_id and label.

namespace tp {

namespace {

constexpr char kMagic[4] = {'T', 'P', 'D', 'S'};
constexpr uint32_t kVersion = 1;

void put_u32(std::string& out, uint32_t v) { out.append(reinterpret_cast<char*>(&v), 4); }
void put_u64(std::string& out, uint64_t v) { out.append(reinterpret_cast<char*>(&v), 8); }
void put_f64(std::string& out, double v) { out.append(reinterpret_cast<char*>(&v), 8); }
void put_str(std::string& out, const std::string& s) {
    put_u32(out, uint32_t(s.size()));
    out += s;
}

struct Cursor {
    const std::string& buf;
    size_t pos = 0;
    const std::string& origin;

    void need(size_t n) const {
        if (pos + n > buf.size())
            fail(TP_E_CORRUPT, origin + ": truncated dataset container");
    }
    uint32_t u32() {
        need(4);
        uint32_t v;
        std::memcpy(&v, buf.data() + pos, 4);
        pos += 4;
        return v;
    }
    uint64_t u64() {
        need(8);
        uint64_t v;
        std::memcpy(&v, buf.data() + pos, 8);
        pos += 8;
        return v;
    }
    double f64() {
        need(8);
        double v;
        std::memcpy(&v, buf.data() + pos, 8);
        pos += 8;
        return v;
    }
    std::string str() {
        uint32_t n = u32();
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

}  // namespace

uint64_t Dataset::config_hash() const {
    uint64_t h = cfg.hash();
    std::string tail = std::string(";scheme=") + to_string(scheme);
    return fnv1a64(tail.data(), tail.size(), h);
}

DatasetBuild make_dataset(const std::vector<Trace>& traces, const MtamConfig& cfg,
                          NormScheme scheme) {
    DatasetBuild out;
    BatchExtract be = batch_extract(traces, cfg);
    out.failures = std::move(be.failures);

    std::set<std::string> label_set(be.labels.begin(), be.labels.end());
    out.dataset.cfg = cfg;
    out.dataset.scheme = scheme;
    out.dataset.labels.assign(label_set.begin(), label_set.end());

    auto label_index = [&](const std::string& s) {
        auto it = std::lower_bound(out.dataset.labels.begin(), out.dataset.labels.end(), s);
        return int(it - out.dataset.labels.begin());
    };
    for (size_t i = 0; i < be.mtams.size(); ++i) {
        Mtam m = normalize(std::move(be.mtams[i]), scheme);
        Dataset::Sample s;
        s.trace_id = std::move(m.source_trace_id);
        s.label = label_index(be.labels[i]);
        s.cells.assign(m.cells.begin(), m.cells.end());
        out.dataset.samples.push_back(std::move(s));
    }
    return out;
}

void save_dataset(const Dataset& ds, const std::string& path) {
    std::string out;
    out.append(kMagic, 4);
    put_u32(out, kVersion);
    put_u32(out, uint32_t(ds.cfg.windows));
    put_u32(out, ds.cfg.mode == WindowMode::uniform ? 0u : 1u);
    put_f64(out, ds.cfg.gap);
    put_f64(out, ds.cfg.clip_counts);
    put_f64(out, ds.cfg.clip_bytes);
    put_u32(out, ds.scheme == NormScheme::none ? 0u : 1u);
    put_u64(out, ds.config_hash());
    put_u32(out, uint32_t(ds.labels.size()));
    for (const auto& l : ds.labels) put_str(out, l);
    put_u64(out, ds.samples.size());
    for (const auto& s : ds.samples) {
        put_str(out, s.trace_id);
        put_u32(out, uint32_t(s.label));
        out.append(reinterpret_cast<const char*>(s.cells.data()), s.cells.size() * 4);
    }
    write_file(path, out);

    nlohmann::ordered_json idx;
    idx["format_version"] = kVersion;
    idx["windows"] = ds.cfg.windows;
    idx["mode"] = to_string(ds.cfg.mode);
    idx["gap"] = ds.cfg.gap;
    idx["scheme"] = to_string(ds.scheme);
    idx["config_hash"] = ds.config_hash();
    idx["labels"] = ds.labels;
    auto recs = nlohmann::ordered_json::array();
    for (const auto& s : ds.samples) {
        recs.push_back({{"trace_id", s.trace_id}, {"label", ds.labels[size_t(s.label)]}});
    }
    idx["records"] = std::move(recs);
    write_file(path + ".index.json", idx.dump(2) + "\n");
}

Dataset load_dataset(const std::string& path) {
    std::string buf = read_file(path);
    Cursor c{buf, 0, path};
    c.need(4);
    if (std::memcmp(buf.data(), kMagic, 4) != 0)
        fail(TP_E_CORRUPT, path + ": not a dataset container");
    c.pos = 4;
    uint32_t version = c.u32();
    if (version != kVersion)
        fail(TP_E_VERSION, path + ": unsupported dataset version " + std::to_string(version));
    Dataset ds;
    ds.cfg.windows = int(c.u32());
    ds.cfg.mode = c.u32() == 0 ? WindowMode::uniform : WindowMode::fixed_gap;
    ds.cfg.gap = c.f64();
    ds.cfg.clip_counts = c.f64();
    ds.cfg.clip_bytes = c.f64();
    ds.scheme = c.u32() == 0 ? NormScheme::none : NormScheme::log1p;
    uint64_t stored_hash = c.u64();
    uint32_t n_labels = c.u32();
    for (uint32_t i = 0; i < n_labels; ++i) ds.labels.push_back(c.str());
    uint64_t count = c.u64();
    size_t cells = size_t(4) * size_t(ds.cfg.windows);
    for (uint64_t i = 0; i < count; ++i) {
        Dataset::Sample s;
        s.trace_id = c.str();
        s.label = int(c.u32());
        if (s.label < 0 || size_t(s.label) >= ds.labels.size())
            fail(TP_E_CORRUPT, path + ": sample label index out of range");
        c.need(cells * 4);
        s.cells.resize(cells);
        std::memcpy(s.cells.data(), buf.data() + c.pos, cells * 4);
        c.pos += cells * 4;
        ds.samples.push_back(std::move(s));
    }
    if (ds.config_hash() != stored_hash)
        fail(TP_E_CORRUPT, path + ": config hash mismatch");
    return ds;
}

}  // namespace tp
