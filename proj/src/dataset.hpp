#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mtam.hpp"

namespace tp {

// Fixed-size training samples: float32 MTAM cells plus a class index into a
// sorted label table. Persisted as a binary container with a JSON sidecar
// index (<path>.index.json).
struct Dataset {
    MtamConfig cfg;
    NormScheme scheme = NormScheme::none;
    std::vector<std::string> labels;  // sorted, index = class id

    struct Sample {
        std::string trace_id;
        int label = -1;
        std::vector<float> cells;  // 4 * cfg.windows
    };
    std::vector<Sample> samples;

    int width() const { return cfg.windows; }
    int num_classes() const { return int(labels.size()); }
    // Covers windowing, clipping and normalization so a model trained on this
    // dataset can refuse mismatched features.
    uint64_t config_hash() const;
};

struct DatasetBuild {
    Dataset dataset;
    std::vector<ExtractFailure> failures;
};

DatasetBuild make_dataset(const std::vector<Trace>& traces, const MtamConfig& cfg,
                          NormScheme scheme);

void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace tp
