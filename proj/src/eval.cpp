#include "eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "csv.hpp"
#include "rng.hpp"
#include "util.hpp"

namespace tp {

EvalReport compute_metrics(const std::vector<std::vector<double>>& probs,
                           const std::vector<int>& truth,
                           const std::vector<std::string>& labels) {
    if (probs.size() != truth.size())
        fail(TP_E_INVALID, "LengthMismatch: " + std::to_string(probs.size()) +
                               " predictions vs " + std::to_string(truth.size()) + " truths");
    size_t k = labels.size();
    EvalReport r;
    r.labels = labels;
    r.confusion.assign(k * k, 0);

    size_t top_hits[3] = {0, 0, 0};
    for (size_t i = 0; i < probs.size(); ++i) {
        if (probs[i].size() != k) fail(TP_E_INVALID, "prediction row has wrong width");
        int y = truth[i];
        if (y < 0 || size_t(y) >= k)
            fail(TP_E_INVALID, "truth label " + std::to_string(y) + " outside the label map");
        // rank classes by probability, ties to the lower index
        std::vector<int> order(k);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            return probs[i][size_t(a)] > probs[i][size_t(b)];
        });
        r.confusion[size_t(y) * k + size_t(order[0])] += 1;
        for (int kk = 0; kk < 3; ++kk)
            for (size_t j = 0; j <= size_t(kk) && j < k; ++j)
                if (order[j] == y) {
                    ++top_hits[kk];
                    break;
                }
    }

    r.precision.assign(k, 0);
    r.recall.assign(k, 0);
    r.f1.assign(k, 0);
    int64_t correct = 0;
    double f1_sum = 0;
    int f1_classes = 0;
    for (size_t c = 0; c < k; ++c) {
        int64_t tp = r.confusion[c * k + c];
        int64_t support = 0, predicted = 0;
        for (size_t j = 0; j < k; ++j) {
            support += r.confusion[c * k + j];
            predicted += r.confusion[j * k + c];
        }
        correct += tp;
        r.precision[c] = predicted > 0 ? double(tp) / double(predicted) : 0.0;
        r.recall[c] = support > 0 ? double(tp) / double(support) : 0.0;
        double pr = r.precision[c] + r.recall[c];
        r.f1[c] = pr > 0 ? 2.0 * r.precision[c] * r.recall[c] / pr : 0.0;
        if (support > 0) {
            f1_sum += r.f1[c];
            ++f1_classes;
        } else {
            ++r.zero_support_classes;
        }
    }
    r.accuracy = probs.empty() ? 0.0 : double(correct) / double(probs.size());
    r.macro_f1 = f1_classes > 0 ? f1_sum / double(f1_classes) : 0.0;
    for (int kk = 0; kk < 3; ++kk)
        r.topk[size_t(kk)] = probs.empty() ? 0.0 : double(top_hits[kk]) / double(probs.size());
    return r;
}

SplitRatios SplitRatios::parse(const std::string& spec) {
    auto parts = split(spec, ':');
    if (parts.size() != 3) fail(TP_E_INVALID, "split ratios must look like 8:1:1, got '" + spec + "'");
    double a, b, c;
    try {
        a = std::stod(parts[0]);
        b = std::stod(parts[1]);
        c = std::stod(parts[2]);
    } catch (...) {
        fail(TP_E_INVALID, "split ratios must be numeric, got '" + spec + "'");
    }
    double total = a + b + c;
    if (!(a > 0) || b < 0 || c < 0 || total <= 0)
        fail(TP_E_INVALID, "split ratios must be positive, got '" + spec + "'");
    return {a / total, b / total, c / total};
}

Split split_dataset(const Dataset& ds, const SplitRatios& ratios, uint64_t seed) {
    std::map<int, std::vector<size_t>> by_class;
    for (size_t i = 0; i < ds.samples.size(); ++i) by_class[ds.samples[i].label].push_back(i);
    for (auto& [c, idx] : by_class)
        if (idx.size() < 10)
            fail(TP_E_INSUFFICIENT, "InsufficientSamples: class '" + ds.labels[size_t(c)] +
                                        "' has " + std::to_string(idx.size()) +
                                        " samples (need >= 10)");
    Rng rng(Rng::derive(seed, 0x73706c69ULL));
    Split out;
    for (auto& [c, idx] : by_class) {
        rng.shuffle(idx);
        size_t n = idx.size();
        size_t n_val = size_t(std::floor(double(n) * ratios.val));
        size_t n_test = size_t(std::floor(double(n) * ratios.test));
        for (size_t i = 0; i < n; ++i) {
            if (i < n_val)
                out.val.push_back(idx[i]);
            else if (i < n_val + n_test)
                out.test.push_back(idx[i]);
            else
                out.train.push_back(idx[i]);
        }
    }
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.val.begin(), out.val.end());
    std::sort(out.test.begin(), out.test.end());
    return out;
}

Dataset subset(const Dataset& ds, const std::vector<size_t>& idx) {
    Dataset out;
    out.cfg = ds.cfg;
    out.scheme = ds.scheme;
    out.labels = ds.labels;
    for (size_t i : idx) out.samples.push_back(ds.samples[i]);
    return out;
}

static void mean_std(const std::vector<double>& v, double& mean, double& sd) {
    mean = 0;
    sd = 0;
    if (v.empty()) return;
    for (double x : v) mean += x;
    mean /= double(v.size());
    if (v.size() < 2) return;
    double acc = 0;
    for (double x : v) acc += (x - mean) * (x - mean);
    sd = std::sqrt(acc / double(v.size() - 1));
}

EvalReport repeated_evaluate(const Dataset& ds, int repeats, const SplitRatios& ratios,
                             const TrainConfig& cfg, uint64_t seed) {
    if (repeats < 2) fail(TP_E_INVALID, "repeated evaluation needs at least 2 repeats");
    std::vector<std::vector<double>> all_probs;
    std::vector<int> all_truth;
    EvalReport agg;
    for (int fold = 0; fold < repeats; ++fold) {
        uint64_t fold_seed = Rng::derive(seed, uint64_t(fold));
        Split sp;
        try {
            sp = split_dataset(ds, ratios, fold_seed);
        } catch (Error& e) {
            fail(e.code(), "fold " + std::to_string(fold) + ": " + e.what());
        }
        // train on train+val (validation is carved back out inside train())
        std::vector<size_t> trainval = sp.train;
        trainval.insert(trainval.end(), sp.val.begin(), sp.val.end());
        std::sort(trainval.begin(), trainval.end());
        Dataset train_ds = subset(ds, trainval);

        TrainConfig fold_cfg = cfg;
        fold_cfg.seed = fold_seed;
        Model model = build_model(nn::ArchConfig::default_for(ds.width(), ds.num_classes()),
                                  fold_seed);
        try {
            train(model, train_ds, fold_cfg);
        } catch (Error& e) {
            fail(e.code(), "fold " + std::to_string(fold) + ": " + e.what());
        }

        std::vector<const float*> rows;
        std::vector<int> truth;
        for (size_t i : sp.test) {
            rows.push_back(ds.samples[i].cells.data());
            truth.push_back(ds.samples[i].label);
        }
        auto preds = predict_features(model, rows, std::nullopt);
        std::vector<std::vector<double>> probs;
        for (auto& p : preds) probs.push_back(p.probs);
        EvalReport fold_report = compute_metrics(probs, truth, ds.labels);
        agg.fold_macro_f1.push_back(fold_report.macro_f1);
        agg.fold_accuracy.push_back(fold_report.accuracy);
        agg.fold_test_size.push_back(int64_t(sp.test.size()));
        all_probs.insert(all_probs.end(), probs.begin(), probs.end());
        all_truth.insert(all_truth.end(), truth.begin(), truth.end());
    }
    EvalReport pooled = compute_metrics(all_probs, all_truth, ds.labels);
    pooled.fold_macro_f1 = agg.fold_macro_f1;
    pooled.fold_accuracy = agg.fold_accuracy;
    pooled.fold_test_size = agg.fold_test_size;
    mean_std(pooled.fold_macro_f1, pooled.macro_f1_mean, pooled.macro_f1_std);
    mean_std(pooled.fold_accuracy, pooled.accuracy_mean, pooled.accuracy_std);
    return pooled;
}

// ----------------------------------------------------------------- report

void write_report_csv(const EvalReport& r, const std::string& path) {
    std::string out = "section,key,col,value\n";
    auto row = [&](const std::string& s, const std::string& k, const std::string& c,
                   const std::string& v) { out += csv_join({s, k, c, v}) + "\n"; };
    row("summary", "accuracy", "", fmt_double(r.accuracy));
    row("summary", "macro_f1", "", fmt_double(r.macro_f1));
    row("summary", "zero_support_classes", "", std::to_string(r.zero_support_classes));
    for (int kk = 0; kk < 3; ++kk)
        row("topk", std::to_string(kk + 1), "", fmt_double(r.topk[size_t(kk)]));
    for (size_t c = 0; c < r.labels.size(); ++c) {
        row("perclass", r.labels[c], "precision", fmt_double(r.precision[c]));
        row("perclass", r.labels[c], "recall", fmt_double(r.recall[c]));
        row("perclass", r.labels[c], "f1", fmt_double(r.f1[c]));
    }
    for (size_t t = 0; t < r.labels.size(); ++t)
        for (size_t p = 0; p < r.labels.size(); ++p)
            if (r.confusion_at(t, p) != 0)
                row("confusion", r.labels[t], r.labels[p], std::to_string(r.confusion_at(t, p)));
    for (size_t f = 0; f < r.fold_macro_f1.size(); ++f) {
        row("fold", std::to_string(f), "macro_f1", fmt_double(r.fold_macro_f1[f]));
        row("fold", std::to_string(f), "accuracy", fmt_double(r.fold_accuracy[f]));
        row("fold", std::to_string(f), "test_size", std::to_string(r.fold_test_size[f]));
    }
    if (!r.fold_macro_f1.empty()) {
        row("aggregate", "macro_f1_mean", "", fmt_double(r.macro_f1_mean));
        row("aggregate", "macro_f1_std", "", fmt_double(r.macro_f1_std));
        row("aggregate", "accuracy_mean", "", fmt_double(r.accuracy_mean));
        row("aggregate", "accuracy_std", "", fmt_double(r.accuracy_std));
    }
    row("labels", "count", "", std::to_string(r.labels.size()));
    for (size_t c = 0; c < r.labels.size(); ++c) row("labels", std::to_string(c), "", r.labels[c]);
    write_file(path, out);
}

EvalReport read_report_csv(const std::string& path) {
    CsvTable tab = read_csv(path);
    if (tab.header != std::vector<std::string>{"section", "key", "col", "value"})
        fail(TP_E_SCHEMA, path + ": not an evaluation report");
    EvalReport r;
    auto num = [&](const std::string& v) -> double {
        try {
            return std::stod(v);
        } catch (...) {
            fail(TP_E_SCHEMA, path + ": malformed numeric value '" + v + "'");
        }
    };
    auto integer = [&](const std::string& v) -> int64_t {
        try {
            return std::stoll(v);
        } catch (...) {
            fail(TP_E_SCHEMA, path + ": malformed integer value '" + v + "'");
        }
    };
    // first pass: label table sizes everything else
    for (const auto& row : tab.rows) {
        if (row[0] == "labels" && row[1] != "count") r.labels.push_back(row[3]);
    }
    size_t k = r.labels.size();
    r.confusion.assign(k * k, 0);
    r.precision.assign(k, 0);
    r.recall.assign(k, 0);
    r.f1.assign(k, 0);
    auto label_index = [&](const std::string& l) {
        for (size_t i = 0; i < k; ++i)
            if (r.labels[i] == l) return i;
        fail(TP_E_SCHEMA, path + ": unknown label '" + l + "' in report");
    };
    for (const auto& row : tab.rows) {
        if (row.size() != 4) fail(TP_E_SCHEMA, path + ": ragged report row");
        const std::string &sec = row[0], &key = row[1], &col = row[2], &val = row[3];
        if (sec == "summary") {
            if (key == "accuracy") r.accuracy = num(val);
            else if (key == "macro_f1") r.macro_f1 = num(val);
            else if (key == "zero_support_classes") r.zero_support_classes = int(integer(val));
        } else if (sec == "topk") {
            r.topk[size_t(integer(key) - 1)] = num(val);
        } else if (sec == "perclass") {
            size_t c = label_index(key);
            if (col == "precision") r.precision[c] = num(val);
            else if (col == "recall") r.recall[c] = num(val);
            else if (col == "f1") r.f1[c] = num(val);
        } else if (sec == "confusion") {
            r.confusion[label_index(key) * k + label_index(col)] = integer(val);
        } else if (sec == "fold") {
            size_t f = size_t(integer(key));
            if (r.fold_macro_f1.size() <= f) {
                r.fold_macro_f1.resize(f + 1, 0);
                r.fold_accuracy.resize(f + 1, 0);
                r.fold_test_size.resize(f + 1, 0);
            }
            if (col == "macro_f1") r.fold_macro_f1[f] = num(val);
            else if (col == "accuracy") r.fold_accuracy[f] = num(val);
            else if (col == "test_size") r.fold_test_size[f] = integer(val);
        } else if (sec == "aggregate") {
            if (key == "macro_f1_mean") r.macro_f1_mean = num(val);
            else if (key == "macro_f1_std") r.macro_f1_std = num(val);
            else if (key == "accuracy_mean") r.accuracy_mean = num(val);
            else if (key == "accuracy_std") r.accuracy_std = num(val);
        }
    }
    return r;
}

}  // namespace tp
