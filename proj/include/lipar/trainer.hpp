#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lipar/can_data.hpp"
#include "lipar/metrics.hpp"
#include "lipar/model.hpp"

namespace lipar::train {

struct TrainConfig {
    double lr = 1e-4;
    int batch = 32;
    int epochs = 14;
    uint64_t seed = 0;
    model::Variant variant = model::Variant::StParNet;
    bool verbose = false;
};

struct EpochStats {
    int epoch = 0; // 1-based
    double train_loss = 0.0;
    double train_accuracy = 0.0;
    double val_loss = 0.0;
    double val_accuracy = 0.0;
    double seconds = 0.0;
};

struct TrainResult {
    model::ModelParams params;
    std::vector<EpochStats> history;
};

/// Trains the selected variant with Adam and softmax cross-entropy on the
/// final logits. Shuffling, initialization and dropout are all driven by the
/// config seed, so a rerun reproduces the loss sequence exactly. Aborts if
/// the loss turns non-finite.
TrainResult train(const can::DatasetSplit& split, const TrainConfig& config);

struct EvalReport {
    metrics::Confusion confusion{};
    double accuracy = 0.0;
    double auc_macro = 0.0;
    std::array<double, can::kNumClasses> per_class_accuracy{};
    double items_per_second_train = 0.0;
    double items_per_second_infer = 0.0;
    int64_t count = 0;
    std::vector<std::string> warnings;
};

/// Eval-mode pass over `windows`: argmax predictions (ties to the lowest
/// class), confusion counts, top-1 accuracy and macro one-vs-rest AUC from
/// softmax scores. Absent classes are excluded from the AUC with a warning.
EvalReport evaluate(const model::ModelParams& params, std::span<const can::Window> windows);

/// Eval-mode predictions only.
std::vector<int> predict(const model::ModelParams& params, std::span<const can::Window> windows,
                         int batch = 128);

enum class ThroughputMode { Train, Infer };

/// Median wall-clock throughput in batches per second ("items/s", one item =
/// one batch of `batch` windows). Train mode times forward+backward+optimizer
/// on a scratch copy of the parameters.
double measure_throughput(const model::ModelParams& params, std::span<const can::Window> windows,
                          ThroughputMode mode, int warmup, int repetitions, int batch = 32);

} // namespace lipar::train
