#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lipar/can_data.hpp"

namespace lipar::metrics {

using Confusion = std::array<std::array<int64_t, can::kNumClasses>, can::kNumClasses>;

/// rows = true class, cols = predicted class.
Confusion confusion_matrix(std::span<const int> truth, std::span<const int> predicted);

double accuracy_from_confusion(const Confusion& m);

/// Diagonal over row sum; -1 for absent classes.
std::array<double, can::kNumClasses> per_class_accuracy(const Confusion& m);

/// Area under the ROC curve by the tie-aware rank (Mann-Whitney) method,
/// equal to the fraction of correctly ordered positive/negative pairs with
/// ties counted one half.
double auc_rank(std::span<const double> scores, const std::vector<bool>& positive);

/// Brute-force pairwise AUC; the independent oracle for auc_rank.
double auc_pairwise(std::span<const double> scores, const std::vector<bool>& positive);

/// Macro one-vs-rest AUC over softmax scores (N x C, row-major). Classes with
/// no positives or no negatives are excluded and reported in `excluded`.
double macro_auc(std::span<const double> scores, std::span<const int> labels, int classes,
                 std::vector<int>* excluded = nullptr);

/// Row-wise softmax in double precision.
std::vector<double> softmax_rows(std::span<const float> logits, int64_t rows, int64_t cols);

/// Deterministic argmax: ties go to the lowest class index.
int argmax_row(std::span<const double> row);

} // namespace lipar::metrics
