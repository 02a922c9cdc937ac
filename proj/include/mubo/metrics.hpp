#pragma once

// Imbalance-aware scores. Minority (label 1) is the positive class. Every ratio
// whose denominator is zero is reported as absent (std::nullopt) rather than
// being forced to 0 or 1.

#include <cstddef>
#include <optional>
#include <span>

namespace mubo::metrics {

using Score = std::optional<double>;

struct ConfusionCounts {
    std::size_t tp = 0;  // minority predicted minority
    std::size_t fn = 0;  // minority predicted majority
    std::size_t fp = 0;  // majority predicted minority
    std::size_t tn = 0;  // majority predicted majority

    std::size_t total() const { return tp + fn + fp + tn; }
    bool operator==(const ConfusionCounts&) const = default;
};

/// Throws InvalidInput on a length mismatch, an empty input or labels outside {0,1}.
ConfusionCounts confusion(std::span<const int> predictions, std::span<const int> labels);

/// Throws ContractViolation unless tp + fn == minority and tn + fp == majority.
void check_class_totals(const ConfusionCounts& c, std::size_t minority, std::size_t majority);

struct F1Scores {
    Score minority;
    Score majority;
    Score average;
};

/// F1_m = 2Tp/(2Tp+Fp+Fn), F1_M = 2Tn/(2Tn+Fn+Fp), average = their mean.
F1Scores f1_scores(const ConfusionCounts& c);

struct PrecisionRecall {
    Score precision_minority;
    Score precision_majority;
    Score precision;
    Score recall_minority;
    Score recall_majority;
    Score recall;
};

PrecisionRecall precision_recall(const ConfusionCounts& c);

struct MetricsReport {
    Score f1_minority;
    Score f1_majority;
    Score f1;
    Score precision_minority;
    Score precision_majority;
    Score precision;
    Score recall_minority;
    Score recall_majority;
    Score recall;

    bool operator==(const MetricsReport&) const = default;
};

MetricsReport report(const ConfusionCounts& c);

struct LossBreakdown {
    Score minority_loss;               // J_m = (1/|S|) sum over minority
    Score majority_loss;               // J_M = (1/|S|) sum over majority
    Score truly_classified_majority;   // mean over majority predicted 0 (divisor Tn)
    Score falsely_classified_majority; // mean over majority predicted 1 (divisor Fp)

    bool operator==(const LossBreakdown&) const = default;
};

/// Throws InvalidInput when the three vectors are not aligned.
LossBreakdown loss_breakdown(std::span<const double> per_sample_losses, std::span<const int> predictions,
                             std::span<const int> labels);

}  // namespace mubo::metrics
