#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mubo/nn.hpp"

namespace mubo::data {

/// Feature matrix plus {0,1} labels. Label 1 is always the minority class.
struct Dataset {
    Matrix features;
    std::vector<int> labels;
    std::vector<std::string> feature_names;

    std::size_t size() const { return labels.size(); }
    Index dim() const { return features.cols(); }
    std::size_t count(int label) const;

    /// Rows in the given order.
    Dataset subset(std::span<const std::size_t> rows) const;

    /// Throws DegenerateData/InvalidInput when the invariants do not hold.
    void validate() const;
};

/// Rows with y = 1 and rows with y = 0, ascending.
struct ClassPartition {
    std::vector<std::size_t> minority;
    std::vector<std::size_t> majority;
};

struct StandardizationStats {
    Vector mean;
    Vector stddev;  // population std, zero-variance columns replaced by 1
};

struct LoadOptions {
    std::string label_column = "label";
    std::string positive_label = "1";
};

/// Reads a comma-separated file with a header row. Rows whose label equals
/// `positive_label` become 1, everything else 0. If that makes class 1 the more
/// frequent one the labels are flipped so that 1 stays the minority; a message
/// is appended to `warnings` when one is supplied.
Dataset load_csv(const std::filesystem::path& path, const LoadOptions& options,
                 std::vector<std::string>* warnings = nullptr);

/// Writes `ds` with its feature names and a trailing "label" column.
void write_csv(const Dataset& ds, const std::filesystem::path& path);

/// Number of test rows drawn from each class: round(N * fraction) rows in total,
/// shared out by largest remainder of n_c * fraction, never taking the last
/// training row of a class. Indexed by label.
std::array<std::size_t, 2> stratified_test_counts(std::size_t majority_count, std::size_t minority_count,
                                                  double test_fraction);

struct Split {
    Dataset train;
    Dataset test;
    std::vector<std::size_t> train_rows;  // row indices into the source dataset
    std::vector<std::size_t> test_rows;
};

/// Stratified shuffle split. Throws InvalidInput for a fraction outside (0,1)
/// and DegenerateData when a class has fewer than two rows.
Split stratified_split(const Dataset& ds, double test_fraction, std::uint64_t seed);

struct Standardized {
    Dataset train;
    Dataset test;
    StandardizationStats stats;
};

/// Z-scores both sets with statistics taken from `train` only.
Standardized standardize(const Dataset& train, const Dataset& test);

Matrix apply_standardization(const Matrix& features, const StandardizationStats& stats);
Matrix invert_standardization(const Matrix& features, const StandardizationStats& stats);

/// Throws DegenerateData when either class is missing.
ClassPartition partition_classes(const Dataset& ds);

/// Minority rows first, then majority rows, each in original order.
Dataset minority_first(const Dataset& ds);

}  // namespace mubo::data
