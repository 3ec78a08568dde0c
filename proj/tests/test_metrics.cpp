#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "helpers.hpp"
#include "lipar/metrics.hpp"

using namespace lipar;
using namespace lipar::metrics;

TEST_SUITE_BEGIN("metrics");

TEST_CASE("confusion matrix and accuracy from the worked count") {
    const std::vector<int> truth = {0, 1, 1};
    const std::vector<int> predicted = {0, 1, 2};
    const auto m = confusion_matrix(truth, predicted);
    CHECK(m[0][0] == 1);
    CHECK(m[1][1] == 1);
    CHECK(m[1][2] == 1);
    CHECK(accuracy_from_confusion(m) == doctest::Approx(2.0 / 3.0));
    const auto per_class = per_class_accuracy(m);
    CHECK(per_class[0] == doctest::Approx(1.0));
    CHECK(per_class[1] == doctest::Approx(0.5));
    CHECK(per_class[2] == -1.0); // absent class
}

TEST_CASE("confusion row sums equal the per-class counts") {
    Prng rng(3);
    std::vector<int> truth, predicted;
    std::array<int64_t, can::kNumClasses> counts{};
    for (int i = 0; i < 500; ++i) {
        truth.push_back(static_cast<int>(rng.next_below(can::kNumClasses)));
        predicted.push_back(static_cast<int>(rng.next_below(can::kNumClasses)));
        counts[static_cast<size_t>(truth.back())]++;
    }
    const auto m = confusion_matrix(truth, predicted);
    for (int r = 0; r < can::kNumClasses; ++r) {
        int64_t row = 0;
        for (int c = 0; c < can::kNumClasses; ++c) row += m[static_cast<size_t>(r)][static_cast<size_t>(c)];
        CHECK(row == counts[static_cast<size_t>(r)]);
    }
    // diagonal / total = accuracy, exactly
    int64_t diag = 0;
    for (int r = 0; r < can::kNumClasses; ++r) diag += m[static_cast<size_t>(r)][static_cast<size_t>(r)];
    CHECK(accuracy_from_confusion(m) ==
          doctest::Approx(static_cast<double>(diag) / 500.0).epsilon(1e-12));
}

TEST_CASE("perfect separation gives AUC 1, reversal gives 0") {
    const std::vector<double> scores = {0.9, 0.8, 0.2, 0.1};
    const std::vector<bool> pos = {true, true, false, false};
    CHECK(auc_rank(scores, pos) == doctest::Approx(1.0));
    const std::vector<bool> neg = {false, false, true, true};
    CHECK(auc_rank(scores, neg) == doctest::Approx(0.0));
}

TEST_CASE("ties count one half in both AUC routes") {
    const std::vector<double> scores = {0.5, 0.5, 0.5, 0.5};
    const std::vector<bool> pos = {true, false, true, false};
    CHECK(auc_rank(scores, pos) == doctest::Approx(0.5));
    CHECK(auc_pairwise(scores, pos) == doctest::Approx(0.5));
}

TEST_CASE("rank AUC equals the pairwise oracle on random tied data") {
    Prng rng(7);
    for (int trial = 0; trial < 60; ++trial) {
        const size_t n = 5 + rng.next_below(90);
        std::vector<double> scores(n);
        std::vector<bool> pos(n);
        bool has_pos = false, has_neg = false;
        for (size_t i = 0; i < n; ++i) {
            // few distinct score levels force plenty of ties
            scores[i] = static_cast<double>(rng.next_below(8)) / 7.0;
            pos[i] = rng.next_below(2) == 1;
            has_pos = has_pos || pos[i];
            has_neg = has_neg || !pos[i];
        }
        if (!has_pos) pos[0] = true;
        if (!has_neg) pos[n - 1] = false;
        CHECK(std::abs(auc_rank(scores, pos) - auc_pairwise(scores, pos)) <= 1e-9);
    }
    const std::vector<double> lone = {1.0};
    CHECK_THROWS_AS(auc_rank(lone, std::vector<bool>{true}), ConfigError);
}

TEST_CASE("macro AUC excludes absent classes") {
    // class 3 and 4 absent
    const std::vector<int> labels = {0, 0, 1, 1, 2, 2};
    std::vector<double> scores(labels.size() * can::kNumClasses, 0.2);
    for (size_t i = 0; i < labels.size(); ++i)
        scores[i * can::kNumClasses + static_cast<size_t>(labels[i])] = 0.9;
    std::vector<int> excluded;
    const double auc = macro_auc(scores, labels, can::kNumClasses, &excluded);
    CHECK(auc == doctest::Approx(1.0));
    REQUIRE(excluded.size() == 2);
    CHECK(excluded[0] == 3);
    CHECK(excluded[1] == 4);
}

TEST_CASE("macro AUC is order invariant") {
    Prng rng(11);
    const size_t n = 60;
    std::vector<int> labels(n);
    std::vector<double> scores(n * can::kNumClasses);
    for (size_t i = 0; i < n; ++i) {
        labels[i] = static_cast<int>(rng.next_below(can::kNumClasses));
        for (int c = 0; c < can::kNumClasses; ++c)
            scores[i * can::kNumClasses + static_cast<size_t>(c)] = rng.next_real(0.0, 1.0);
    }
    const double base = macro_auc(scores, labels, can::kNumClasses);

    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;
    deterministic_shuffle(order, rng);
    std::vector<int> labels2(n);
    std::vector<double> scores2(n * can::kNumClasses);
    for (size_t i = 0; i < n; ++i) {
        labels2[i] = labels[order[i]];
        for (int c = 0; c < can::kNumClasses; ++c)
            scores2[i * can::kNumClasses + static_cast<size_t>(c)] =
                scores[order[i] * can::kNumClasses + static_cast<size_t>(c)];
    }
    CHECK(macro_auc(scores2, labels2, can::kNumClasses) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("softmax rows are normalized and argmax ties break low") {
    const std::vector<float> logits = {1.0f, 1.0f, 0.0f, -1.0f, 2.0f, 2.0f};
    const auto probs = softmax_rows(logits, 2, 3);
    for (int r = 0; r < 2; ++r) {
        double sum = 0.0;
        for (int c = 0; c < 3; ++c) sum += probs[static_cast<size_t>(r * 3 + c)];
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
    CHECK(argmax_row(std::span<const double>(probs.data(), 3)) == 0);     // tie 0 vs 1
    CHECK(argmax_row(std::span<const double>(probs.data() + 3, 3)) == 1); // tie 1 vs 2
}

TEST_SUITE_END();
