#include "mubo/metrics.hpp"

#include <string>

#include "mubo/error.hpp"

namespace mubo::metrics {
namespace {

Score ratio(double numerator, double denominator) {
    if (denominator == 0.0) {
        return std::nullopt;
    }
    return numerator / denominator;
}

Score mean_of(const Score& a, const Score& b) {
    if (!a || !b) {
        return std::nullopt;
    }
    return 0.5 * (*a + *b);
}

}  // namespace

ConfusionCounts confusion(std::span<const int> predictions, std::span<const int> labels) {
    if (predictions.size() != labels.size()) {
        throw InvalidInput("predictions and labels differ in length");
    }
    if (labels.empty()) {
        throw InvalidInput("confusion counts need at least one prediction");
    }
    ConfusionCounts c;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int y = labels[i];
        const int p = predictions[i];
        if ((y != 0 && y != 1) || (p != 0 && p != 1)) {
            throw InvalidInput("labels and predictions must be 0 or 1");
        }
        if (y == 1) {
            (p == 1 ? c.tp : c.fn) += 1;
        } else {
            (p == 1 ? c.fp : c.tn) += 1;
        }
    }
    return c;
}

void check_class_totals(const ConfusionCounts& c, std::size_t minority, std::size_t majority) {
    if (c.tp + c.fn != minority || c.tn + c.fp != majority) {
        throw ContractViolation("confusion counts do not reconcile with class sizes (minority " +
                                std::to_string(minority) + ", majority " + std::to_string(majority) + ")");
    }
}

F1Scores f1_scores(const ConfusionCounts& c) {
    const auto tp = static_cast<double>(c.tp);
    const auto fn = static_cast<double>(c.fn);
    const auto fp = static_cast<double>(c.fp);
    const auto tn = static_cast<double>(c.tn);
    F1Scores s;
    s.minority = ratio(2.0 * tp, 2.0 * tp + fp + fn);
    s.majority = ratio(2.0 * tn, 2.0 * tn + fn + fp);
    s.average = mean_of(s.minority, s.majority);
    return s;
}

PrecisionRecall precision_recall(const ConfusionCounts& c) {
    const auto tp = static_cast<double>(c.tp);
    const auto fn = static_cast<double>(c.fn);
    const auto fp = static_cast<double>(c.fp);
    const auto tn = static_cast<double>(c.tn);
    PrecisionRecall pr;
    pr.precision_minority = ratio(tp, tp + fp);
    pr.precision_majority = ratio(tn, tn + fn);
    pr.precision = mean_of(pr.precision_minority, pr.precision_majority);
    pr.recall_minority = ratio(tp, tp + fn);
    pr.recall_majority = ratio(tn, tn + fp);
    pr.recall = mean_of(pr.recall_minority, pr.recall_majority);
    return pr;
}

MetricsReport report(const ConfusionCounts& c) {
    const F1Scores f1 = f1_scores(c);
    const PrecisionRecall pr = precision_recall(c);
    return MetricsReport{f1.minority,         f1.majority,        f1.average,
                         pr.precision_minority, pr.precision_majority, pr.precision,
                         pr.recall_minority,    pr.recall_majority,    pr.recall};
}

LossBreakdown loss_breakdown(std::span<const double> per_sample_losses, std::span<const int> predictions,
                             std::span<const int> labels) {
    if (per_sample_losses.size() != labels.size() || predictions.size() != labels.size()) {
        throw InvalidInput("losses, predictions and labels must be aligned");
    }
    if (labels.empty()) {
        return {};
    }
    double minority_sum = 0.0;
    double majority_sum = 0.0;
    double true_sum = 0.0;
    double false_sum = 0.0;
    std::size_t true_count = 0;
    std::size_t false_count = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const double l = per_sample_losses[i];
        if (labels[i] == 1) {
            minority_sum += l;
            continue;
        }
        majority_sum += l;
        if (predictions[i] == 0) {
            true_sum += l;
            ++true_count;
        } else {
            false_sum += l;
            ++false_count;
        }
    }
    const auto n = static_cast<double>(labels.size());
    LossBreakdown b;
    b.minority_loss = minority_sum / n;
    b.majority_loss = majority_sum / n;
    b.truly_classified_majority = ratio(true_sum, static_cast<double>(true_count));
    b.falsely_classified_majority = ratio(false_sum, static_cast<double>(false_count));
    return b;
}

}  // namespace mubo::metrics
