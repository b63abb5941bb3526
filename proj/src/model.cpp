#include "model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>

#include "json.hpp"
#include "util.hpp"

namespace tp {

using nn::ArchConfig;
using nn::Phase;
using nn::Tensor;

// ---------------------------------------------------------------- arch

nn::ArchConfig nn::ArchConfig::default_for(int width, int num_classes) {
    ArchConfig a;
    a.width = width;
    a.blocks2d = {{32, 2, 8, 1, 8, 0.3}, {64, 2, 8, 2, 8, 0.3}};
    a.reduce_channels = 32;
    a.blocks1d = {{64, 8, 8, 0.3}, {128, 8, 4, 0.3}};
    a.num_classes = num_classes;
    return a;
}

void nn::ArchConfig::validate() const {
    if (width < 1) fail(TP_E_SHAPE, "ShapeError: width must be >= 1");
    if (num_classes < 1) fail(TP_E_SHAPE, "ShapeError: num_classes must be >= 1");
    if (reduce_channels < 1) fail(TP_E_SHAPE, "ShapeError: reduce_channels must be >= 1");
    if (blocks2d.empty()) fail(TP_E_SHAPE, "ShapeError: at least one 2D block is required");
    int h = 2, w = width;
    for (const auto& b : blocks2d) {
        if (b.filters < 1 || b.kh < 1 || b.kw < 1 || b.ph < 1 || b.pw < 1)
            fail(TP_E_SHAPE, "ShapeError: 2D block sizes must be >= 1");
        if (b.dropout < 0 || b.dropout >= 1)
            fail(TP_E_SHAPE, "ShapeError: dropout must be in [0, 1)");
        h = nn::MaxPool<float>::out_len(h, b.ph);
        w = nn::MaxPool<float>::out_len(w, b.pw);
    }
    if (h != 1)
        fail(TP_E_SHAPE, "ShapeError: 2D pools must collapse the height to 1, got " +
                             std::to_string(h));
    for (const auto& b : blocks1d) {
        if (b.filters < 1 || b.k < 1 || b.pool < 1)
            fail(TP_E_SHAPE, "ShapeError: 1D block sizes must be >= 1");
        if (b.dropout < 0 || b.dropout >= 1)
            fail(TP_E_SHAPE, "ShapeError: dropout must be in [0, 1)");
        w = nn::MaxPool<float>::out_len(w, b.pool);
    }
    if (w < 1) fail(TP_E_SHAPE, "ShapeError: pooled width vanished");
}

static nlohmann::ordered_json arch_to_json(const ArchConfig& a) {
    nlohmann::ordered_json j;
    j["width"] = a.width;
    auto b2 = nlohmann::ordered_json::array();
    for (const auto& b : a.blocks2d)
        b2.push_back({{"filters", b.filters},
                      {"kernel", {b.kh, b.kw}},
                      {"pool", {b.ph, b.pw}},
                      {"dropout", b.dropout}});
    j["blocks2d"] = std::move(b2);
    j["reduce_channels"] = a.reduce_channels;
    auto b1 = nlohmann::ordered_json::array();
    for (const auto& b : a.blocks1d)
        b1.push_back({{"filters", b.filters},
                      {"kernel", b.k},
                      {"pool", b.pool},
                      {"dropout", b.dropout}});
    j["blocks1d"] = std::move(b1);
    j["num_classes"] = a.num_classes;
    return j;
}

static ArchConfig arch_from_json(const nlohmann::json& j) {
    ArchConfig a;
    a.width = j.at("width").get<int>();
    for (const auto& b : j.at("blocks2d")) {
        nn::ConvBlock2d cb;
        cb.filters = b.at("filters").get<int>();
        cb.kh = b.at("kernel")[0].get<int>();
        cb.kw = b.at("kernel")[1].get<int>();
        cb.ph = b.at("pool")[0].get<int>();
        cb.pw = b.at("pool")[1].get<int>();
        cb.dropout = b.at("dropout").get<double>();
        a.blocks2d.push_back(cb);
    }
    a.reduce_channels = j.at("reduce_channels").get<int>();
    for (const auto& b : j.at("blocks1d")) {
        nn::ConvBlock1d cb;
        cb.filters = b.at("filters").get<int>();
        cb.k = b.at("kernel").get<int>();
        cb.pool = b.at("pool").get<int>();
        cb.dropout = b.at("dropout").get<double>();
        a.blocks1d.push_back(cb);
    }
    a.num_classes = j.at("num_classes").get<int>();
    return a;
}

// ---------------------------------------------------------------- model

void TrainConfig::validate() const {
    if (epochs < 1) fail(TP_E_INVALID, "train config: epochs must be >= 1");
    if (batch_size < 1) fail(TP_E_INVALID, "train config: batch_size must be >= 1");
    if (!(validation_fraction >= 0 && validation_fraction < 1))
        fail(TP_E_INVALID, "train config: validation_fraction must be in [0, 1)");
    if (!(learning_rate >= 0)) fail(TP_E_INVALID, "train config: learning_rate must be >= 0");
}

Model build_model(const ArchConfig& arch, uint64_t seed) {
    Model m;
    m.arch = arch;
    m.net = nn::Network<float>(arch, seed);
    m.label_map.resize(size_t(arch.num_classes));
    for (int i = 0; i < arch.num_classes; ++i) m.label_map[size_t(i)] = "class" + std::to_string(i);
    return m;
}

static Tensor<float> batch_tensor(const Dataset& ds, const std::vector<size_t>& idx) {
    const int W = ds.width();
    Tensor<float> x(int(idx.size()), 2, 2, W);
    for (size_t k = 0; k < idx.size(); ++k)
        std::memcpy(x.v.data() + k * size_t(4) * W, ds.samples[idx[k]].cells.data(),
                    size_t(4) * W * sizeof(float));
    return x;
}

namespace {

struct Optimizer {
    TrainConfig::Opt kind;
    double lr;
    // one slot per trainable scalar
    std::vector<double> m, v;
    int64_t step_count = 0;

    void init(size_t n, TrainConfig::Opt k, double lr_) {
        kind = k;
        lr = lr_;
        m.assign(n, 0.0);
        v.assign(n, 0.0);
    }

    void step(std::vector<nn::ParamView<float>>& params) {
        ++step_count;
        size_t off = 0;
        const double b1 = 0.9, b2 = 0.999, eps = 1e-8, mu = 0.9;
        double bc1 = 1.0 - std::pow(b1, double(step_count));
        double bc2 = 1.0 - std::pow(b2, double(step_count));
        for (auto& p : params) {
            if (!p.grad) continue;
            for (size_t i = 0; i < p.count; ++i, ++off) {
                double g = double(p.grad[i]);
                if (kind == TrainConfig::Opt::adam) {
                    m[off] = b1 * m[off] + (1 - b1) * g;
                    v[off] = b2 * v[off] + (1 - b2) * g * g;
                    double mh = m[off] / bc1, vh = v[off] / bc2;
                    p.data[i] -= float(lr * mh / (std::sqrt(vh) + eps));
                } else {
                    m[off] = mu * m[off] + g;
                    p.data[i] -= float(lr * m[off]);
                }
            }
        }
    }

    size_t trainable_count(std::vector<nn::ParamView<float>>& params) {
        size_t n = 0;
        for (auto& p : params)
            if (p.grad) n += p.count;
        return n;
    }
};

// Number of samples scored or calibrated in one tensor; bounds activation
// memory on large datasets without introducing shuffle dependence.
constexpr size_t kScoreChunk = 1024;

// Deterministic score of the current weights over an index set. Chunks are
// cut at fixed positions in index order, so the result does not depend on
// shuffling, dropout, or the running-stat trajectory.
std::pair<double, double> score_on(Model& model, const Dataset& ds,
                                   const std::vector<size_t>& idx, Phase phase) {
    if (idx.empty()) return {std::nan(""), std::nan("")};
    double loss_sum = 0;
    size_t correct = 0;
    for (size_t start = 0; start < idx.size(); start += kScoreChunk) {
        std::vector<size_t> chunk(
            idx.begin() + long(start),
            idx.begin() + long(std::min(idx.size(), start + kScoreChunk)));
        Tensor<float> x = batch_tensor(ds, chunk);
        std::vector<int> y;
        y.reserve(chunk.size());
        for (size_t i : chunk) y.push_back(ds.samples[i].label);
        Tensor<float> logits = model.net.logits(x, phase, nullptr);
        loss_sum += nn::softmax_cross_entropy<float>(logits, y, nullptr) * double(chunk.size());
        for (size_t k = 0; k < chunk.size(); ++k) {
            const float* row = logits.v.data() + k * size_t(logits.c);
            int best = 0;
            for (int i = 1; i < logits.c; ++i)
                if (row[i] > row[best]) best = i;
            if (best == y[k]) ++correct;
        }
    }
    return {loss_sum / double(idx.size()), double(correct) / double(idx.size())};
}

}  // namespace

std::vector<EpochStats> train(Model& model, const Dataset& ds, const TrainConfig& cfg) {
    cfg.validate();
    if (ds.num_classes() < 2) fail(TP_E_INVALID, "training needs at least 2 classes");
    if (ds.samples.empty()) fail(TP_E_INVALID, "training needs a non-empty dataset");
    if (ds.num_classes() != model.arch.num_classes)
        fail(TP_E_INVALID, "dataset has " + std::to_string(ds.num_classes()) +
                               " classes but the model expects " +
                               std::to_string(model.arch.num_classes));
    if (ds.width() != model.arch.width)
        fail(TP_E_SHAPE, "ShapeMismatch: dataset width " + std::to_string(ds.width()) +
                             " vs model width " + std::to_string(model.arch.width));

    model.label_map = ds.labels;
    model.scheme = ds.scheme;
    model.mtam = ds.cfg;
    model.trained_on = ds.config_hash();

    Rng rng(Rng::derive(cfg.seed, 0x7261696eULL));

    // stratified validation carve-out
    std::map<int, std::vector<size_t>> by_class;
    for (size_t i = 0; i < ds.samples.size(); ++i) by_class[ds.samples[i].label].push_back(i);
    std::vector<size_t> train_idx, val_idx;
    for (auto& [cls, idx] : by_class) {
        rng.shuffle(idx);
        size_t n_val = size_t(std::floor(double(idx.size()) * cfg.validation_fraction));
        for (size_t i = 0; i < idx.size(); ++i)
            (i < n_val ? val_idx : train_idx).push_back(idx[i]);
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(val_idx.begin(), val_idx.end());
    if (train_idx.empty()) fail(TP_E_INVALID, "validation fraction left no training data");

    auto params = model.net.params();
    Optimizer opt;
    opt.init(opt.trainable_count(params), cfg.optimizer, cfg.learning_rate);

    std::vector<EpochStats> history;
    std::vector<size_t> order = train_idx;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        rng.shuffle(order);
        for (size_t start = 0; start < order.size(); start += size_t(cfg.batch_size)) {
            std::vector<size_t> chunk(
                order.begin() + long(start),
                order.begin() + long(std::min(order.size(), start + size_t(cfg.batch_size))));
            Tensor<float> x = batch_tensor(ds, chunk);
            std::vector<int> y;
            y.reserve(chunk.size());
            for (size_t i : chunk) y.push_back(ds.samples[i].label);

            Tensor<float> logits = model.net.logits(x, Phase::train, &rng);
            Tensor<float> dlogits;
            double loss = nn::softmax_cross_entropy(logits, y, &dlogits);
            if (!std::isfinite(loss))
                fail(TP_E_DIVERGENCE, "DivergenceError: loss became non-finite at epoch " +
                                          std::to_string(epoch));
            model.net.zero_grad();
            model.net.backward(dlogits);
            opt.step(params);
        }
        EpochStats st;
        st.epoch = epoch;
        auto [loss, acc] = score_on(model, ds, train_idx, Phase::measure);
        st.loss = loss;
        st.train_acc = acc;
        st.val_acc = score_on(model, ds, val_idx, Phase::eval).second;
        if (!std::isfinite(st.loss))
            fail(TP_E_DIVERGENCE,
                 "DivergenceError: loss became non-finite at epoch " + std::to_string(epoch));
        history.push_back(st);
        if (st.train_acc >= cfg.early_stop_train_acc && st.loss <= cfg.early_stop_train_loss)
            break;
    }

    // Pin the normalization statistics to the training data: one calibration
    // forward over an evenly strided subset (class groups are contiguous, so
    // the stride keeps every class represented) capped for memory.
    {
        std::vector<size_t> calib;
        size_t stride = (train_idx.size() + kScoreChunk - 1) / kScoreChunk;
        for (size_t i = 0; i < train_idx.size(); i += stride) calib.push_back(train_idx[i]);
        Tensor<float> x = batch_tensor(ds, calib);
        model.net.logits(x, Phase::calibrate, nullptr);
    }
    return history;
}

static Tensor<float> mtam_to_input(const Model& model, const Mtam& raw) {
    if (raw.windows != model.arch.width)
        fail(TP_E_SHAPE, "ShapeMismatch: MTAM width " + std::to_string(raw.windows) +
                             " vs model width " + std::to_string(model.arch.width));
    Mtam m = normalize(raw, model.scheme);
    Tensor<float> x(1, 2, 2, raw.windows);
    for (size_t i = 0; i < m.cells.size(); ++i) x.v[i] = float(m.cells[i]);
    return x;
}

static Prediction prediction_from_row(const Model& model, const double* probs, int c,
                                      std::optional<double> threshold) {
    Prediction p;
    p.probs.assign(probs, probs + c);
    int best = 0;
    for (int i = 1; i < c; ++i)
        if (probs[i] > probs[best]) best = i;  // ties keep the lowest index
    if (threshold && probs[best] < *threshold) {
        p.label = kUnmonitored;
        p.label_index = -1;
    } else {
        p.label = model.label_map[size_t(best)];
        p.label_index = best;
    }
    return p;
}

std::vector<Prediction> predict_features(Model& model, const std::vector<const float*>& rows,
                                         std::optional<double> open_world_threshold,
                                         bool want_embedding) {
    const int W = model.arch.width;
    std::vector<Prediction> out;
    const size_t kChunk = 64;
    for (size_t start = 0; start < rows.size(); start += kChunk) {
        size_t n = std::min(kChunk, rows.size() - start);
        Tensor<float> x(int(n), 2, 2, W);
        for (size_t k = 0; k < n; ++k)
            std::memcpy(x.v.data() + k * size_t(4) * W, rows[start + k],
                        size_t(4) * W * sizeof(float));
        std::vector<std::vector<float>> emb;
        Tensor<float> logits =
            model.net.logits(x, Phase::eval, nullptr, want_embedding ? &emb : nullptr);
        std::vector<double> probs(size_t(logits.c));
        for (size_t k = 0; k < n; ++k) {
            nn::softmax_row(logits.v.data() + k * size_t(logits.c), logits.c, probs.data());
            Prediction p = prediction_from_row(model, probs.data(), logits.c, open_world_threshold);
            if (want_embedding) p.embedding.assign(emb[k].begin(), emb[k].end());
            out.push_back(std::move(p));
        }
    }
    return out;
}

Prediction predict(Model& model, const Mtam& raw, std::optional<double> open_world_threshold,
                   bool want_embedding) {
    Tensor<float> x = mtam_to_input(model, raw);
    std::vector<std::vector<float>> emb;
    Tensor<float> logits =
        model.net.logits(x, Phase::eval, nullptr, want_embedding ? &emb : nullptr);
    std::vector<double> probs(size_t(logits.c));
    nn::softmax_row(logits.v.data(), logits.c, probs.data());
    Prediction p = prediction_from_row(model, probs.data(), logits.c, open_world_threshold);
    if (want_embedding) p.embedding.assign(emb[0].begin(), emb[0].end());
    return p;
}

// ------------------------------------------------------- gradient check

double gradient_check(const Model& model, const Mtam& sample, int label, double eps,
                      int per_tensor, uint64_t seed) {
    // Rebuild the network in double precision with the model's weights.
    nn::Network<double> net(model.arch, 0);
    {
        // const_cast confined here: params() is non-const but copying from a
        // trained model must not mutate it, and collect() only exposes views.
        auto src = const_cast<Model&>(model).net.params();
        auto dst = net.params();
        for (size_t i = 0; i < src.size(); ++i)
            for (size_t k = 0; k < src[i].count; ++k) dst[i].data[k] = double(src[i].data[k]);
    }

    Mtam norm = normalize(sample, model.scheme);
    Tensor<double> x(1, 2, 2, norm.windows);
    for (size_t i = 0; i < norm.cells.size(); ++i) x.v[i] = norm.cells[i];
    std::vector<int> y{label};

    auto loss_at = [&]() {
        Tensor<double> logits = net.logits(x, Phase::eval, nullptr);
        return nn::softmax_cross_entropy<double>(logits, y, nullptr);
    };

    // analytic gradients on the frozen eval path
    net.zero_grad();
    Tensor<double> logits = net.logits(x, Phase::eval, nullptr);
    Tensor<double> dlogits;
    nn::softmax_cross_entropy(logits, y, &dlogits);
    net.backward(dlogits);

    Rng rng(seed);
    double worst = 0;
    for (auto& p : net.params()) {
        if (!p.grad) continue;
        int n_samples = int(std::min<size_t>(size_t(per_tensor), p.count));
        std::vector<size_t> idx(p.count);
        for (size_t i = 0; i < p.count; ++i) idx[i] = i;
        rng.shuffle(idx);
        for (int s = 0; s < n_samples; ++s) {
            size_t i = idx[size_t(s)];
            double orig = p.data[i];
            p.data[i] = orig + eps;
            double lp = loss_at();
            p.data[i] = orig - eps;
            double lm = loss_at();
            p.data[i] = orig;
            double numeric = (lp - lm) / (2 * eps);
            double analytic = p.grad[i];
            double rel = std::abs(numeric - analytic) /
                         std::max(1e-8, std::abs(numeric) + std::abs(analytic));
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

// --------------------------------------------------------- persistence

namespace {
constexpr char kModelMagic[4] = {'T', 'P', 'M', 'D'};
constexpr uint32_t kModelVersion = 1;
}  // namespace

void save_model(const Model& m, const std::string& path) {
    nlohmann::ordered_json hdr;
    hdr["format_version"] = kModelVersion;
    hdr["arch"] = arch_to_json(m.arch);
    hdr["label_map"] = m.label_map;
    hdr["normalize"] = to_string(m.scheme);
    hdr["mtam"] = {{"windows", m.mtam.windows},
                   {"mode", to_string(m.mtam.mode)},
                   {"gap", m.mtam.gap},
                   {"clip_counts", m.mtam.clip_counts},
                   {"clip_bytes", m.mtam.clip_bytes}};
    hdr["label_kind"] = m.label_kind;
    hdr["trained_on"] = m.trained_on;
    hdr["input_layout"] = "channels(count,bytes) x height(in,out) x width";
    std::string hj = hdr.dump();

    std::string out;
    out.append(kModelMagic, 4);
    uint32_t v = kModelVersion;
    out.append(reinterpret_cast<char*>(&v), 4);
    uint32_t hl = uint32_t(hj.size());
    out.append(reinterpret_cast<char*>(&hl), 4);
    out += hj;

    auto params = const_cast<Model&>(m).net.params();
    uint32_t nt = uint32_t(params.size());
    out.append(reinterpret_cast<char*>(&nt), 4);
    uint64_t digest = 0xcbf29ce484222325ULL;
    for (auto& p : params) {
        uint32_t nl = uint32_t(p.name.size());
        out.append(reinterpret_cast<char*>(&nl), 4);
        out += p.name;
        uint32_t nd = uint32_t(p.dims.size());
        out.append(reinterpret_cast<char*>(&nd), 4);
        for (int d : p.dims) {
            uint32_t dv = uint32_t(d);
            out.append(reinterpret_cast<char*>(&dv), 4);
        }
        uint64_t bytes = p.count * sizeof(float);
        out.append(reinterpret_cast<char*>(&bytes), 8);
        out.append(reinterpret_cast<const char*>(p.data), bytes);
        digest = fnv1a64(p.data, bytes, digest);
    }
    out.append(reinterpret_cast<char*>(&digest), 8);
    write_file(path, out);
}

Model load_model(const std::string& path) {
    std::string buf = read_file(path);
    size_t pos = 0;
    auto need = [&](size_t n) {
        if (pos + n > buf.size()) fail(TP_E_CORRUPT, "CorruptWeights: truncated model file " + path);
    };
    need(12);
    if (std::memcmp(buf.data(), kModelMagic, 4) != 0)
        fail(TP_E_CORRUPT, "CorruptWeights: not a model file: " + path);
    pos = 4;
    uint32_t version;
    std::memcpy(&version, buf.data() + pos, 4);
    pos += 4;
    if (version != kModelVersion)
        fail(TP_E_VERSION, "VersionError: model format version " + std::to_string(version) +
                               " unsupported (expected " + std::to_string(kModelVersion) + ")");
    uint32_t hl;
    std::memcpy(&hl, buf.data() + pos, 4);
    pos += 4;
    need(hl);
    nlohmann::json hdr;
    try {
        hdr = nlohmann::json::parse(buf.substr(pos, hl));
    } catch (const nlohmann::json::exception& e) {
        fail(TP_E_CORRUPT, std::string("CorruptWeights: bad model header: ") + e.what());
    }
    pos += hl;

    Model m;
    m.arch = arch_from_json(hdr.at("arch"));
    m.label_map = hdr.at("label_map").get<std::vector<std::string>>();
    m.scheme = norm_scheme_from_string(hdr.at("normalize").get<std::string>());
    m.mtam.windows = hdr.at("mtam").at("windows").get<int>();
    m.mtam.mode = window_mode_from_string(hdr.at("mtam").at("mode").get<std::string>());
    m.mtam.gap = hdr.at("mtam").at("gap").get<double>();
    m.mtam.clip_counts = hdr.at("mtam").at("clip_counts").get<double>();
    m.mtam.clip_bytes = hdr.at("mtam").at("clip_bytes").get<double>();
    m.label_kind = hdr.at("label_kind").get<std::string>();
    m.trained_on = hdr.at("trained_on").get<uint64_t>();
    if (m.label_map.size() != size_t(m.arch.num_classes))
        fail(TP_E_CORRUPT, "CorruptWeights: label map does not match num_classes");
    m.net = nn::Network<float>(m.arch, 0);

    uint32_t nt;
    need(4);
    std::memcpy(&nt, buf.data() + pos, 4);
    pos += 4;
    auto params = m.net.params();
    if (nt != params.size())
        fail(TP_E_CORRUPT, "CorruptWeights: tensor count mismatch in " + path);
    uint64_t digest = 0xcbf29ce484222325ULL;
    for (auto& p : params) {
        need(4);
        uint32_t nl;
        std::memcpy(&nl, buf.data() + pos, 4);
        pos += 4;
        need(nl);
        std::string name = buf.substr(pos, nl);
        pos += nl;
        if (name != p.name)
            fail(TP_E_CORRUPT, "CorruptWeights: tensor '" + name + "' where '" + p.name +
                                   "' was expected");
        need(4);
        uint32_t nd;
        std::memcpy(&nd, buf.data() + pos, 4);
        pos += 4;
        if (nd != p.dims.size()) fail(TP_E_CORRUPT, "CorruptWeights: rank mismatch for " + name);
        for (size_t d = 0; d < nd; ++d) {
            need(4);
            uint32_t dv;
            std::memcpy(&dv, buf.data() + pos, 4);
            pos += 4;
            if (int(dv) != p.dims[d])
                fail(TP_E_CORRUPT, "CorruptWeights: shape mismatch for " + name);
        }
        need(8);
        uint64_t bytes;
        std::memcpy(&bytes, buf.data() + pos, 8);
        pos += 8;
        if (bytes != p.count * sizeof(float))
            fail(TP_E_CORRUPT, "CorruptWeights: size mismatch for " + name);
        need(bytes);
        std::memcpy(p.data, buf.data() + pos, bytes);
        digest = fnv1a64(buf.data() + pos, bytes, digest);
        pos += bytes;
    }
    need(8);
    uint64_t stored;
    std::memcpy(&stored, buf.data() + pos, 8);
    if (stored != digest) fail(TP_E_CORRUPT, "CorruptWeights: digest mismatch in " + path);
    return m;
}

void write_history_csv(const std::vector<EpochStats>& hist, const std::string& path) {
    std::string out = "epoch,loss,train_acc,val_acc\n";
    for (const auto& h : hist)
        out += std::to_string(h.epoch) + "," + fmt_double(h.loss) + "," +
               fmt_double(h.train_acc) + "," + fmt_double(h.val_acc) + "\n";
    write_file(path, out);
}

}  // namespace tp
