#include "lipar/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <numeric>
#include <optional>

#include "lipar/optim.hpp"
#include "lipar/prng.hpp"

namespace lipar::train {

namespace {

using Clock = std::chrono::steady_clock;
using can::Window;
using model::ForwardCtx;
using model::ModelParams;
using model::Variant;
using nn::Tensor;

std::vector<int> window_labels(std::span<const Window> windows) {
    std::vector<int> labels(windows.size());
    for (size_t i = 0; i < windows.size(); ++i)
        labels[i] = static_cast<int>(windows[i].label);
    return labels;
}

Tensor forward_variant(const ModelParams& params, std::span<const Window> windows,
                       const ForwardCtx& ctx) {
    Tensor images = model::image_batch(windows);
    if (params.variant() == Variant::DwParNet) return model::dwparnet_forward(params, images, ctx);
    return model::stparnet_forward(params, images, model::sequence_batch(windows), ctx);
}

struct BatchEval {
    double loss_sum = 0.0;
    int64_t correct = 0;
    int64_t count = 0;
};

/// Eval-mode loss/accuracy over a window set.
BatchEval evaluate_loss(const ModelParams& params, std::span<const Window> windows, int batch) {
    nn::NoGradGuard guard;
    BatchEval acc;
    ForwardCtx ctx; // eval mode
    for (size_t off = 0; off < windows.size(); off += static_cast<size_t>(batch)) {
        const auto take = std::min(static_cast<size_t>(batch), windows.size() - off);
        auto chunk = windows.subspan(off, take);
        Tensor logits = forward_variant(params, chunk, ctx);
        const auto labels = window_labels(chunk);
        Tensor loss = nn::softmax_cross_entropy(logits, labels);
        acc.loss_sum += static_cast<double>(loss.item()) * static_cast<double>(take);
        const auto probs = metrics::softmax_rows(logits.data(), logits.dim(0), logits.dim(1));
        for (size_t i = 0; i < take; ++i) {
            const int pred = metrics::argmax_row(
                std::span<const double>(probs.data() + i * can::kNumClasses, can::kNumClasses));
            if (pred == labels[i]) ++acc.correct;
        }
        acc.count += static_cast<int64_t>(take);
    }
    return acc;
}

} // namespace

TrainResult train(const can::DatasetSplit& split, const TrainConfig& config) {
    if (split.train.empty()) throw ConfigError("train: empty training set");
    if (split.validation.empty()) throw ConfigError("train: empty validation set");
    if (config.lr <= 0 || config.batch < 1 || config.epochs < 1)
        throw ConfigError("train: invalid hyperparameters");

    TrainResult result;
    result.params = model::build_model(config.variant, config.seed);
    nn::AdamState adam(result.params.trainable(), nn::AdamConfig{.lr = config.lr});

    std::vector<size_t> order(split.train.size());
    std::iota(order.begin(), order.end(), 0);

    uint64_t step = 0;
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        const auto epoch_start = Clock::now();
        Prng shuffle_rng(mix64(config.seed, 0xE90C4ULL, static_cast<uint64_t>(epoch)));
        deterministic_shuffle(order, shuffle_rng);

        double loss_sum = 0.0;
        int64_t correct = 0;
        std::vector<Window> batch_windows;
        batch_windows.reserve(static_cast<size_t>(config.batch));
        for (size_t off = 0; off < order.size(); off += static_cast<size_t>(config.batch)) {
            const auto take = std::min(static_cast<size_t>(config.batch), order.size() - off);
            batch_windows.clear();
            for (size_t i = 0; i < take; ++i)
                batch_windows.push_back(split.train[order[off + i]]);

            ForwardCtx ctx{.training = true, .dropout_seed = config.seed, .step = step};
            Tensor logits = forward_variant(result.params, batch_windows, ctx);
            const auto labels = window_labels(batch_windows);
            Tensor loss = nn::softmax_cross_entropy(logits, labels);
            const double loss_val = loss.item();
            if (!std::isfinite(loss_val))
                throw Error("train: loss diverged (non-finite) at step " + std::to_string(step));
            loss_sum += loss_val * static_cast<double>(take);

            const auto probs = metrics::softmax_rows(logits.data(), logits.dim(0), logits.dim(1));
            for (size_t i = 0; i < take; ++i) {
                const int pred = metrics::argmax_row(std::span<const double>(
                    probs.data() + i * can::kNumClasses, can::kNumClasses));
                if (pred == labels[i]) ++correct;
            }

            nn::backward(loss);
            adam.step();
            ++step;
        }

        const BatchEval val = evaluate_loss(result.params, split.validation, config.batch);
        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = loss_sum / static_cast<double>(order.size());
        stats.train_accuracy = static_cast<double>(correct) / static_cast<double>(order.size());
        stats.val_loss = val.loss_sum / static_cast<double>(val.count);
        stats.val_accuracy = static_cast<double>(val.correct) / static_cast<double>(val.count);
        stats.seconds = std::chrono::duration<double>(Clock::now() - epoch_start).count();
        result.history.push_back(stats);
        if (config.verbose)
            std::cerr << "epoch " << epoch << "/" << config.epochs
                      << " train_loss=" << stats.train_loss
                      << " train_acc=" << stats.train_accuracy << " val_loss=" << stats.val_loss
                      << " val_acc=" << stats.val_accuracy << " (" << stats.seconds << "s)\n";
    }
    return result;
}

std::vector<int> predict(const ModelParams& params, std::span<const Window> windows, int batch) {
    nn::NoGradGuard guard;
    ForwardCtx ctx;
    std::vector<int> out;
    out.reserve(windows.size());
    for (size_t off = 0; off < windows.size(); off += static_cast<size_t>(batch)) {
        const auto take = std::min(static_cast<size_t>(batch), windows.size() - off);
        Tensor logits = forward_variant(params, windows.subspan(off, take), ctx);
        const auto probs = metrics::softmax_rows(logits.data(), logits.dim(0), logits.dim(1));
        for (size_t i = 0; i < take; ++i)
            out.push_back(metrics::argmax_row(std::span<const double>(
                probs.data() + i * can::kNumClasses, can::kNumClasses)));
    }
    return out;
}

EvalReport evaluate(const ModelParams& params, std::span<const Window> windows) {
    if (windows.empty()) throw ConfigError("evaluate: no windows");
    nn::NoGradGuard guard;
    ForwardCtx ctx;
    EvalReport report;
    report.count = static_cast<int64_t>(windows.size());

    std::vector<int> truth = window_labels(windows);
    std::vector<int> predicted;
    predicted.reserve(windows.size());
    std::vector<double> scores;
    scores.reserve(windows.size() * can::kNumClasses);

    constexpr int kBatch = 128;
    for (size_t off = 0; off < windows.size(); off += kBatch) {
        const auto take = std::min(static_cast<size_t>(kBatch), windows.size() - off);
        Tensor logits = forward_variant(params, windows.subspan(off, take), ctx);
        const auto probs = metrics::softmax_rows(logits.data(), logits.dim(0), logits.dim(1));
        scores.insert(scores.end(), probs.begin(), probs.end());
        for (size_t i = 0; i < take; ++i)
            predicted.push_back(metrics::argmax_row(std::span<const double>(
                probs.data() + i * can::kNumClasses, can::kNumClasses)));
    }

    report.confusion = metrics::confusion_matrix(truth, predicted);
    report.accuracy = metrics::accuracy_from_confusion(report.confusion);
    report.per_class_accuracy = metrics::per_class_accuracy(report.confusion);
    std::vector<int> excluded;
    try {
        report.auc_macro = metrics::macro_auc(scores, truth, can::kNumClasses, &excluded);
    } catch (const ConfigError&) {
        report.auc_macro = 0.0;
        const std::string msg = "macro AUC undefined: no class has both positives and negatives";
        report.warnings.push_back(msg);
        log_warn("evaluate: " + msg);
    }
    for (int cls : excluded) {
        const std::string msg = std::string("class '") +
                                can::label_name(static_cast<can::TrafficLabel>(cls)) +
                                "' absent; excluded from macro AUC";
        report.warnings.push_back(msg);
        log_warn("evaluate: " + msg);
    }
    return report;
}

double measure_throughput(const ModelParams& params, std::span<const Window> windows,
                          ThroughputMode mode, int warmup, int repetitions, int batch) {
    if (windows.empty()) throw ConfigError("measure_throughput: no windows");
    if (warmup < 0 || repetitions < 1)
        throw ConfigError("measure_throughput: warmup must be >= 0 and repetitions >= 1");
    const size_t needed = static_cast<size_t>(warmup + repetitions) * static_cast<size_t>(batch);
    if (windows.size() < needed)
        throw ConfigError("measure_throughput: need " + std::to_string(needed) + " windows, have " +
                          std::to_string(windows.size()));

    ModelParams scratch = mode == ThroughputMode::Train ? params.clone() : ModelParams();
    const ModelParams& active = mode == ThroughputMode::Train ? scratch : params;
    std::optional<nn::AdamState> adam;
    if (mode == ThroughputMode::Train) adam.emplace(scratch.trainable(), nn::AdamConfig{});

    auto run_batch = [&](size_t index) {
        auto chunk = windows.subspan(index * static_cast<size_t>(batch),
                                     static_cast<size_t>(batch));
        if (mode == ThroughputMode::Infer) {
            nn::NoGradGuard guard;
            ForwardCtx ctx;
            Tensor logits = forward_variant(active, chunk, ctx);
            (void)logits;
        } else {
            ForwardCtx ctx{.training = true, .dropout_seed = 1, .step = index};
            Tensor logits = forward_variant(active, chunk, ctx);
            Tensor loss = nn::softmax_cross_entropy(logits, window_labels(chunk));
            nn::backward(loss);
            adam->step();
        }
    };

    size_t index = 0;
    for (int i = 0; i < warmup; ++i) run_batch(index++);
    std::vector<double> times;
    times.reserve(static_cast<size_t>(repetitions));
    for (int i = 0; i < repetitions; ++i) {
        const auto start = Clock::now();
        run_batch(index++);
        times.push_back(std::chrono::duration<double>(Clock::now() - start).count());
    }
    std::sort(times.begin(), times.end());
    const double median = times[times.size() / 2];
    if (median <= 0.0) return 0.0;
    return 1.0 / median;
}

} // namespace lipar::train
