#include "lipar/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace lipar::metrics {

Confusion confusion_matrix(std::span<const int> truth, std::span<const int> predicted) {
    if (truth.size() != predicted.size())
        throw ConfigError("confusion_matrix: label/prediction count mismatch");
    Confusion m{};
    for (size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] < 0 || truth[i] >= can::kNumClasses || predicted[i] < 0 ||
            predicted[i] >= can::kNumClasses)
            throw ConfigError("confusion_matrix: class index out of range");
        m[static_cast<size_t>(truth[i])][static_cast<size_t>(predicted[i])]++;
    }
    return m;
}

double accuracy_from_confusion(const Confusion& m) {
    int64_t total = 0, diag = 0;
    for (int r = 0; r < can::kNumClasses; ++r)
        for (int c = 0; c < can::kNumClasses; ++c) {
            total += m[static_cast<size_t>(r)][static_cast<size_t>(c)];
            if (r == c) diag += m[static_cast<size_t>(r)][static_cast<size_t>(c)];
        }
    return total == 0 ? 0.0 : static_cast<double>(diag) / static_cast<double>(total);
}

std::array<double, can::kNumClasses> per_class_accuracy(const Confusion& m) {
    std::array<double, can::kNumClasses> out{};
    for (int r = 0; r < can::kNumClasses; ++r) {
        int64_t row = 0;
        for (int c = 0; c < can::kNumClasses; ++c)
            row += m[static_cast<size_t>(r)][static_cast<size_t>(c)];
        out[static_cast<size_t>(r)] =
            row == 0 ? -1.0
                     : static_cast<double>(m[static_cast<size_t>(r)][static_cast<size_t>(r)]) /
                           static_cast<double>(row);
    }
    return out;
}

double auc_rank(std::span<const double> scores, const std::vector<bool>& positive) {
    if (scores.size() != positive.size())
        throw ConfigError("auc_rank: score/label count mismatch");
    const size_t n = scores.size();
    int64_t n_pos = 0;
    for (bool p : positive) n_pos += p ? 1 : 0;
    const int64_t n_neg = static_cast<int64_t>(n) - n_pos;
    if (n_pos == 0 || n_neg == 0)
        throw ConfigError("auc_rank: need at least one positive and one negative");

    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return scores[a] < scores[b]; });

    // Average ranks across tied scores, then Mann-Whitney.
    double rank_sum_pos = 0.0;
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (size_t k = i; k <= j; ++k)
            if (positive[order[k]]) rank_sum_pos += avg_rank;
        i = j + 1;
    }
    const double np = static_cast<double>(n_pos);
    return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

double auc_pairwise(std::span<const double> scores, const std::vector<bool>& positive) {
    if (scores.size() != positive.size())
        throw ConfigError("auc_pairwise: score/label count mismatch");
    int64_t n_pos = 0, n_neg = 0;
    double wins = 0.0;
    for (size_t i = 0; i < scores.size(); ++i) {
        if (!positive[i]) continue;
        ++n_pos;
        for (size_t j = 0; j < scores.size(); ++j) {
            if (positive[j]) continue;
            if (scores[i] > scores[j]) wins += 1.0;
            else if (scores[i] == scores[j]) wins += 0.5;
        }
    }
    for (bool p : positive) n_neg += p ? 0 : 1;
    if (n_pos == 0 || n_neg == 0)
        throw ConfigError("auc_pairwise: need at least one positive and one negative");
    return wins / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double macro_auc(std::span<const double> scores, std::span<const int> labels, int classes,
                 std::vector<int>* excluded) {
    if (labels.empty()) throw ConfigError("macro_auc: no samples");
    if (scores.size() != labels.size() * static_cast<size_t>(classes))
        throw ConfigError("macro_auc: score matrix shape mismatch");
    double total = 0.0;
    int used = 0;
    for (int cls = 0; cls < classes; ++cls) {
        std::vector<double> cls_scores(labels.size());
        std::vector<bool> cls_pos(labels.size());
        int64_t n_pos = 0;
        for (size_t i = 0; i < labels.size(); ++i) {
            cls_scores[i] = scores[i * static_cast<size_t>(classes) + static_cast<size_t>(cls)];
            cls_pos[i] = labels[i] == cls;
            n_pos += cls_pos[i] ? 1 : 0;
        }
        if (n_pos == 0 || n_pos == static_cast<int64_t>(labels.size())) {
            if (excluded) excluded->push_back(cls);
            continue;
        }
        total += auc_rank(cls_scores, cls_pos);
        ++used;
    }
    if (used == 0) throw ConfigError("macro_auc: no class had both positives and negatives");
    return total / static_cast<double>(used);
}

std::vector<double> softmax_rows(std::span<const float> logits, int64_t rows, int64_t cols) {
    if (static_cast<int64_t>(logits.size()) != rows * cols)
        throw ConfigError("softmax_rows: shape mismatch");
    std::vector<double> out(logits.size());
    for (int64_t r = 0; r < rows; ++r) {
        const float* row = logits.data() + r * cols;
        double mx = row[0];
        for (int64_t c = 1; c < cols; ++c) mx = std::max(mx, static_cast<double>(row[c]));
        double z = 0.0;
        for (int64_t c = 0; c < cols; ++c) z += std::exp(static_cast<double>(row[c]) - mx);
        for (int64_t c = 0; c < cols; ++c)
            out[static_cast<size_t>(r * cols + c)] =
                std::exp(static_cast<double>(row[c]) - mx) / z;
    }
    return out;
}

int argmax_row(std::span<const double> row) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(row.size()); ++i)
        if (row[static_cast<size_t>(i)] > row[static_cast<size_t>(best)]) best = i;
    return best;
}

} // namespace lipar::metrics
