#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mubo/bilevel.hpp"
#include "mubo/data.hpp"

namespace mubo::baselines {

enum class MethodKind { none, random_undersample, smote, mubo };

struct RebalanceMethod {
    MethodKind kind = MethodKind::mubo;
    int smote_k = 5;

    bool operator==(const RebalanceMethod&) const = default;
};

std::string to_string(MethodKind kind);

/// Accepts "none", "random_undersample" (or "rus"), "smote", "mubo".
/// Throws ConfigError for anything else.
MethodKind parse_method(std::string_view name);

/// `minority_count` rows drawn uniformly without replacement, returned ascending.
/// When fewer majority rows exist all of them come back and a warning is added.
std::vector<std::size_t> random_undersample(std::span<const std::size_t> majority, std::size_t minority_count,
                                            std::uint64_t seed, std::vector<std::string>* warnings = nullptr);

/// Indices of the k nearest rows of `points` to row `i` (Euclidean, self
/// excluded, ties broken by lower index).
std::vector<std::size_t> nearest_neighbors(const Matrix& points, std::size_t i, std::size_t k);

/// Classic SMOTE: each synthetic row is x + u (x_nn - x) with x a uniformly
/// chosen minority row, x_nn one of its k nearest minority neighbours and
/// u ~ U(0,1). k is clamped to m - 1. Throws InsufficientMinority when m < 2.
Matrix smote(const Matrix& minority, std::size_t n_synthetic, std::size_t k, std::uint64_t seed);

struct Rebalanced {
    data::Dataset sample;  // minority rows first
    std::optional<bilevel::MuboResult> mubo;
    std::vector<std::string> warnings;
};

/// Builds the training sample for one method:
///   none               -> train unchanged
///   random_undersample -> all minority + m majority rows
///   smote              -> minority augmented with M - m synthetic rows, majority unchanged
///   mubo               -> run_mubo()
Rebalanced apply_method(const RebalanceMethod& method, const data::Dataset& train,
                        const bilevel::MuboConfig& config, std::uint64_t seed);

}  // namespace mubo::baselines
