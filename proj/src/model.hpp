#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dataset.hpp"
#include "nn.hpp"

namespace tp {

// Sentinel label for open-world rejection.
inline constexpr const char* kUnmonitored = "unmonitored";

struct TrainConfig {
    int epochs = 100;
    int batch_size = 32;
    double learning_rate = 1e-3;
    enum class Opt { adam, sgd_momentum } optimizer = Opt::adam;
    uint64_t seed = 0;
    double validation_fraction = 0.1;
    // Stop once train accuracy reaches this; > 1 disables. The loss gate
    // keeps training until the boundary is confident, not merely correct.
    double early_stop_train_acc = 0.999;
    double early_stop_train_loss = 0.02;

    void validate() const;
};

// Weights plus everything needed to reproduce the trained feature space.
// Forward passes cache activations inside the layers, so a Model instance is
// not shareable across threads; give each thread its own (load_model or a
// save/load round trip clones one exactly).
struct Model {
    nn::ArchConfig arch;
    std::vector<std::string> label_map;  // index -> label
    NormScheme scheme = NormScheme::none;
    MtamConfig mtam;        // featurization the model was trained with
    std::string label_kind; // e.g. "behavior" / "agent"; informational
    uint64_t trained_on = 0;  // dataset config hash
    nn::Network<float> net;
};

Model build_model(const nn::ArchConfig& arch, uint64_t seed);

struct EpochStats {
    int epoch = 0;
    double loss = 0;
    double train_acc = 0;
    double val_acc = 0;  // NaN when no validation data
};

// Supervised training; carves a stratified validation subset out of the
// dataset unless validation_fraction == 0. Fully seeded.
std::vector<EpochStats> train(Model& model, const Dataset& ds, const TrainConfig& cfg);

struct Prediction {
    std::vector<double> probs;   // simplex over label_map
    std::string label;           // argmax label or kUnmonitored
    int label_index = -1;        // -1 for unmonitored
    std::vector<double> embedding;
};

// Features must already live in the model's trained space (dataset samples).
std::vector<Prediction> predict_features(Model& model, const std::vector<const float*>& rows,
                                         std::optional<double> open_world_threshold,
                                         bool want_embedding = false);

// Raw MTAM path: applies the model's normalization scheme first.
Prediction predict(Model& model, const Mtam& raw, std::optional<double> open_world_threshold,
                   bool want_embedding = false);

// Central-difference verification of backpropagation on the eval-mode path
// (dropout off, batch norm frozen), in double precision. Samples up to
// per_tensor weights from every parameter tensor; returns the max relative
// error observed.
double gradient_check(const Model& model, const Mtam& sample, int label, double eps,
                      int per_tensor = 100, uint64_t seed = 7);

void save_model(const Model& m, const std::string& path);
Model load_model(const std::string& path);

void write_history_csv(const std::vector<EpochStats>& hist, const std::string& path);

}  // namespace tp
