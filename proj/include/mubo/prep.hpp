#pragma once

// Binarization recipes that turn the shipped raw benchmark files into the
// label-column CSV format read by data::load_csv. See data/README.md.

#include <filesystem>
#include <string>

#include "mubo/data.hpp"

namespace mubo::prep {

/// Abalone (sex, seven measurements, rings). Label 1 for rings <= max_minority_rings.
/// Sex is label-encoded alphabetically: F = 0, I = 1, M = 2.
data::Dataset abalone(const std::filesystem::path& raw, int max_minority_rings = 7);

/// KEEL-style rows: comma-separated numeric features, class in the last column.
/// Lines starting with '@' are header metadata and are skipped.
data::Dataset keel(const std::filesystem::path& raw, const std::string& positive_class);

/// Orange .tab file: names row, types row, flags row, then tab-separated data.
/// The column flagged "class" is the label.
data::Dataset orange_tab(const std::filesystem::path& raw, const std::string& positive_class);

/// Runs a recipe by name ("abalone", "keel", "orange") and writes the CSV.
/// `positive_class` is ignored by "abalone". Returns the written dataset.
data::Dataset run_recipe(const std::string& recipe, const std::filesystem::path& raw,
                         const std::filesystem::path& out, const std::string& positive_class);

}  // namespace mubo::prep
