#include "mubo/baselines.hpp"

#include <algorithm>
#include <iterator>
#include <numeric>
#include <random>

#include "mubo/error.hpp"
#include "mubo/seed.hpp"

namespace mubo::baselines {

std::string to_string(MethodKind kind) {
    switch (kind) {
        case MethodKind::none:
            return "none";
        case MethodKind::random_undersample:
            return "random_undersample";
        case MethodKind::smote:
            return "smote";
        case MethodKind::mubo:
            return "mubo";
    }
    return "unknown";
}

MethodKind parse_method(std::string_view name) {
    if (name == "none") {
        return MethodKind::none;
    }
    if (name == "random_undersample" || name == "rus") {
        return MethodKind::random_undersample;
    }
    if (name == "smote") {
        return MethodKind::smote;
    }
    if (name == "mubo") {
        return MethodKind::mubo;
    }
    throw ConfigError("unknown method '" + std::string(name) + "'");
}

std::vector<std::size_t> random_undersample(std::span<const std::size_t> majority, std::size_t minority_count,
                                            std::uint64_t seed, std::vector<std::string>* warnings) {
    if (majority.size() < minority_count && warnings != nullptr) {
        warnings->push_back("random undersampling: only " + std::to_string(majority.size()) +
                            " majority rows for " + std::to_string(minority_count) + " minority rows");
    }
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> kept;
    std::sample(majority.begin(), majority.end(), std::back_inserter(kept), minority_count, rng);
    std::sort(kept.begin(), kept.end());
    return kept;
}

std::vector<std::size_t> nearest_neighbors(const Matrix& points, std::size_t i, std::size_t k) {
    const auto n = static_cast<std::size_t>(points.rows());
    std::vector<std::pair<double, std::size_t>> dist;
    dist.reserve(n);
    const auto origin = points.row(static_cast<Index>(i));
    for (std::size_t j = 0; j < n; ++j) {
        if (j != i) {
            dist.emplace_back((points.row(static_cast<Index>(j)) - origin).squaredNorm(), j);
        }
    }
    k = std::min(k, dist.size());
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
    std::vector<std::size_t> out(k);
    for (std::size_t j = 0; j < k; ++j) {
        out[j] = dist[j].second;
    }
    return out;
}

Matrix smote(const Matrix& minority, std::size_t n_synthetic, std::size_t k, std::uint64_t seed) {
    const auto m = static_cast<std::size_t>(minority.rows());
    if (m < 2) {
        throw InsufficientMinority("SMOTE needs at least two minority rows");
    }
    if (k < 1) {
        throw InvalidInput("SMOTE needs k >= 1");
    }
    k = std::min(k, m - 1);

    std::vector<std::vector<std::size_t>> neighbors(m);
    for (std::size_t i = 0; i < m; ++i) {
        neighbors[i] = nearest_neighbors(minority, i, k);
    }

    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick_base(0, m - 1);
    std::uniform_int_distribution<std::size_t> pick_neighbor(0, k - 1);
    std::uniform_real_distribution<double> gap(0.0, 1.0);

    Matrix synthetic(static_cast<Index>(n_synthetic), minority.cols());
    for (std::size_t s = 0; s < n_synthetic; ++s) {
        const std::size_t base = pick_base(rng);
        const std::size_t nn = neighbors[base][pick_neighbor(rng)];
        const double u = gap(rng);
        const auto x = minority.row(static_cast<Index>(base));
        synthetic.row(static_cast<Index>(s)) = x + u * (minority.row(static_cast<Index>(nn)) - x);
    }
    return synthetic;
}

Rebalanced apply_method(const RebalanceMethod& method, const data::Dataset& train,
                        const bilevel::MuboConfig& config, std::uint64_t seed) {
    train.validate();
    const data::ClassPartition parts = data::partition_classes(train);
    Rebalanced out;

    switch (method.kind) {
        case MethodKind::none:
            out.sample = data::minority_first(train);
            break;
        case MethodKind::random_undersample: {
            std::vector<std::size_t> rows = parts.minority;
            const auto kept =
                random_undersample(parts.majority, parts.minority.size(), derive_seed(seed, 2), &out.warnings);
            rows.insert(rows.end(), kept.begin(), kept.end());
            out.sample = train.subset(rows);
            break;
        }
        case MethodKind::smote: {
            const data::Dataset minority = train.subset(parts.minority);
            const data::Dataset majority = train.subset(parts.majority);
            const std::size_t n_synthetic = parts.majority.size() - parts.minority.size();
            if (method.smote_k < 1) {
                throw ConfigError("smote k must be >= 1");
            }
            const Matrix synthetic = smote(minority.features, n_synthetic, static_cast<std::size_t>(method.smote_k),
                                           derive_seed(seed, 3));
            data::Dataset& s = out.sample;
            s.feature_names = train.feature_names;
            s.features.resize(static_cast<Index>(train.size() + n_synthetic), train.dim());
            const Index m = minority.features.rows();
            const auto n_syn = static_cast<Index>(n_synthetic);
            s.features.topRows(m) = minority.features;
            s.features.middleRows(m, n_syn) = synthetic;
            s.features.bottomRows(majority.features.rows()) = majority.features;
            s.labels.assign(parts.minority.size() + n_synthetic, 1);
            s.labels.insert(s.labels.end(), parts.majority.size(), 0);
            break;
        }
        case MethodKind::mubo: {
            out.mubo = bilevel::run_mubo(train, config, seed);
            out.sample = out.mubo->training_set;
            break;
        }
    }
    return out;
}

}  // namespace mubo::baselines
