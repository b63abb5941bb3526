#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dataset.hpp"
#include "model.hpp"

namespace tp {

struct EvalReport {
    std::vector<std::string> labels;
    std::vector<int64_t> confusion;  // labels x labels, [true][pred]
    std::vector<double> precision, recall, f1;  // per class
    double accuracy = 0;
    double macro_f1 = 0;
    std::array<double, 3> topk{0, 0, 0};  // K = 1, 2, 3
    int zero_support_classes = 0;         // excluded from the macro average

    // filled by repeated evaluation
    std::vector<double> fold_macro_f1;
    std::vector<double> fold_accuracy;
    std::vector<int64_t> fold_test_size;
    double macro_f1_mean = 0, macro_f1_std = 0;
    double accuracy_mean = 0, accuracy_std = 0;

    int64_t confusion_at(size_t t, size_t p) const { return confusion[t * labels.size() + p]; }
};

// Standard multi-class metrics from probability rows. Classes with zero
// support are excluded from the macro average (and counted).
EvalReport compute_metrics(const std::vector<std::vector<double>>& probs,
                           const std::vector<int>& truth, const std::vector<std::string>& labels);

struct SplitRatios {
    double train = 0.8, val = 0.1, test = 0.1;

    static SplitRatios parse(const std::string& spec);  // e.g. "8:1:1"
};

struct Split {
    std::vector<size_t> train, val, test;
};

// Stratified per class: floor(n * ratio) validation and test samples per
// class, remainder to train. Requires >= 10 samples per class.
Split split_dataset(const Dataset& ds, const SplitRatios& ratios, uint64_t seed);

Dataset subset(const Dataset& ds, const std::vector<size_t>& idx);

// Repeated random splits (the protocol re-draws the split every repeat rather
// than rotating disjoint folds). Trains a fresh default-architecture model
// per repeat and aggregates the reports.
EvalReport repeated_evaluate(const Dataset& ds, int repeats, const SplitRatios& ratios,
                             const TrainConfig& cfg, uint64_t seed);

// Long-format CSV (section,key,col,value) that round-trips numeric values.
void write_report_csv(const EvalReport& r, const std::string& path);
EvalReport read_report_csv(const std::string& path);

}  // namespace tp
