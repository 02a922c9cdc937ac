#include "mubo/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "mubo/error.hpp"

namespace mubo::data {
namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r\n");
    s = s.substr(first, last - first + 1);
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') {
        s = s.substr(1, s.size() - 2);
    }
    return s;
}

std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            cells.push_back(trim(line.substr(start)));
            break;
        }
        cells.push_back(trim(line.substr(start, comma - start)));
        start = comma + 1;
    }
    return cells;
}

bool parse_double(std::string_view cell, double& value) {
    if (!cell.empty() && cell.front() == '+') {
        cell.remove_prefix(1);
    }
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
    return ec == std::errc() && ptr == cell.data() + cell.size() && std::isfinite(value);
}

}  // namespace

std::size_t Dataset::count(int label) const {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), label));
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
    Dataset out;
    out.feature_names = feature_names;
    out.features.resize(static_cast<Index>(rows.size()), features.cols());
    out.labels.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= labels.size()) {
            throw InvalidInput("row index " + std::to_string(rows[i]) + " out of range");
        }
        out.features.row(static_cast<Index>(i)) = features.row(static_cast<Index>(rows[i]));
        out.labels.push_back(labels[rows[i]]);
    }
    return out;
}

void Dataset::validate() const {
    if (static_cast<std::size_t>(features.rows()) != labels.size()) {
        throw InvalidInput("feature rows and label count differ");
    }
    for (int y : labels) {
        if (y != 0 && y != 1) {
            throw InvalidInput("labels must be 0 or 1");
        }
    }
    if (size() < 2 || count(0) == 0 || count(1) == 0) {
        throw DegenerateData("dataset needs at least one row of each class");
    }
    if (!features.allFinite()) {
        throw InvalidInput("dataset contains non-finite features");
    }
}

Dataset load_csv(const std::filesystem::path& path, const LoadOptions& options, std::vector<std::string>* warnings) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw SchemaError(path.string() + ": missing header row");
    }
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) {
        line.erase(0, 3);
    }
    const auto header = split_commas(line);
    const auto label_it = std::find(header.begin(), header.end(), std::string_view(options.label_column));
    if (label_it == header.end()) {
        throw SchemaError(path.string() + ": no column named '" + options.label_column + "'");
    }
    const auto label_col = static_cast<std::size_t>(label_it - header.begin());

    Dataset ds;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (c != label_col) {
            ds.feature_names.emplace_back(header[c]);
        }
    }
    const std::size_t dim = ds.feature_names.size();

    std::vector<double> values;
    std::size_t row_number = 1;
    while (std::getline(in, line)) {
        ++row_number;
        if (trim(line).empty()) {
            continue;
        }
        const auto cells = split_commas(line);
        if (cells.size() != header.size()) {
            throw ParseError(path.string() + ": expected " + std::to_string(header.size()) + " cells, found " +
                                 std::to_string(cells.size()),
                             row_number, std::min(cells.size(), header.size()) + 1);
        }
        for (std::size_t c = 0; c < cells.size(); ++c) {
            if (c == label_col) {
                ds.labels.push_back(cells[c] == options.positive_label ? 1 : 0);
                continue;
            }
            double v = 0.0;
            if (!parse_double(cells[c], v)) {
                throw ParseError(path.string() + ": non-numeric feature '" + std::string(cells[c]) + "'",
                                 row_number, c + 1);
            }
            values.push_back(v);
        }
    }

    const auto n = static_cast<Index>(ds.labels.size());
    ds.features = Eigen::Map<Matrix>(values.data(), n, static_cast<Index>(dim));
    const std::size_t positives = ds.count(1);
    if (positives == 0 || positives == ds.size()) {
        throw DegenerateData(path.string() + ": only one class present after mapping label '" +
                             options.positive_label + "'");
    }
    if (positives > ds.size() - positives) {
        for (int& y : ds.labels) {
            y = 1 - y;
        }
        if (warnings != nullptr) {
            warnings->push_back(path.string() + ": label '" + options.positive_label +
                                "' is the majority class; labels flipped so the minority class is 1");
        }
    }
    return ds;
}

void write_csv(const Dataset& ds, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    for (const auto& name : ds.feature_names) {
        out << name << ',';
    }
    out << "label\n";
    out.precision(17);
    for (Index r = 0; r < ds.features.rows(); ++r) {
        for (Index c = 0; c < ds.features.cols(); ++c) {
            out << ds.features(r, c) << ',';
        }
        out << ds.labels[static_cast<std::size_t>(r)] << '\n';
    }
    if (!out) {
        throw IoError("failed writing " + path.string());
    }
}

std::array<std::size_t, 2> stratified_test_counts(std::size_t majority_count, std::size_t minority_count,
                                                  double test_fraction) {
    const std::array<std::size_t, 2> sizes{majority_count, minority_count};
    const auto total = static_cast<std::size_t>(
        std::llround(static_cast<double>(majority_count + minority_count) * test_fraction));

    std::array<std::size_t, 2> quota{};
    std::array<double, 2> remainder{};
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < 2; ++c) {
        const double exact = static_cast<double>(sizes[c]) * test_fraction;
        quota[c] = std::min(static_cast<std::size_t>(std::floor(exact)), sizes[c] - 1);
        remainder[c] = exact - std::floor(exact);
        assigned += quota[c];
    }
    std::array<std::size_t, 2> order{0, 1};
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (remainder[a] != remainder[b]) {
            return remainder[a] > remainder[b];
        }
        return sizes[a] > sizes[b];
    });
    for (std::size_t c : order) {
        if (assigned >= total) {
            break;
        }
        if (quota[c] + 1 < sizes[c]) {
            ++quota[c];
            ++assigned;
        }
    }
    return quota;
}

Split stratified_split(const Dataset& ds, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
        throw InvalidInput("test fraction must lie strictly between 0 and 1");
    }
    ClassPartition parts = partition_classes(ds);
    if (parts.minority.size() < 2 || parts.majority.size() < 2) {
        throw DegenerateData("stratified split needs at least two rows of each class");
    }
    const auto quota = stratified_test_counts(parts.majority.size(), parts.minority.size(), test_fraction);

    std::mt19937_64 rng(seed);
    Split split;
    for (int label : {0, 1}) {
        auto& rows = label == 0 ? parts.majority : parts.minority;
        std::shuffle(rows.begin(), rows.end(), rng);
        const auto q = static_cast<std::ptrdiff_t>(quota[static_cast<std::size_t>(label)]);
        split.test_rows.insert(split.test_rows.end(), rows.begin(), rows.begin() + q);
        split.train_rows.insert(split.train_rows.end(), rows.begin() + q, rows.end());
    }
    std::sort(split.train_rows.begin(), split.train_rows.end());
    std::sort(split.test_rows.begin(), split.test_rows.end());
    split.train = ds.subset(split.train_rows);
    split.test = ds.subset(split.test_rows);
    return split;
}

Matrix apply_standardization(const Matrix& features, const StandardizationStats& stats) {
    if (features.cols() != stats.mean.size()) {
        throw InvalidDimension("standardization stats do not match feature count");
    }
    return ((features.rowwise() - stats.mean.transpose()).array().rowwise() / stats.stddev.transpose().array())
        .matrix();
}

Matrix invert_standardization(const Matrix& features, const StandardizationStats& stats) {
    if (features.cols() != stats.mean.size()) {
        throw InvalidDimension("standardization stats do not match feature count");
    }
    Matrix out = (features.array().rowwise() * stats.stddev.transpose().array()).matrix();
    out.rowwise() += stats.mean.transpose();
    return out;
}

Standardized standardize(const Dataset& train, const Dataset& test) {
    if (train.size() == 0) {
        throw EmptyInput("cannot standardize with an empty training set");
    }
    const Index d = train.dim();
    const auto n = static_cast<double>(train.features.rows());
    StandardizationStats stats{Vector(d), Vector(d)};
    for (Index c = 0; c < d; ++c) {
        const auto col = train.features.col(c);
        if (col.maxCoeff() == col.minCoeff()) {
            stats.mean(c) = col(0);
            stats.stddev(c) = 1.0;
            continue;
        }
        const double mean = col.sum() / n;
        const double var = (col.array() - mean).square().sum() / n;
        stats.mean(c) = mean;
        stats.stddev(c) = var > 0.0 ? std::sqrt(var) : 1.0;
    }
    Standardized out{train, test, stats};
    out.train.features = apply_standardization(train.features, stats);
    out.test.features = apply_standardization(test.features, stats);
    return out;
}

ClassPartition partition_classes(const Dataset& ds) {
    ClassPartition parts;
    for (std::size_t i = 0; i < ds.labels.size(); ++i) {
        (ds.labels[i] == 1 ? parts.minority : parts.majority).push_back(i);
    }
    if (parts.minority.empty() || parts.majority.empty()) {
        throw DegenerateData("both classes must be present");
    }
    return parts;
}

Dataset minority_first(const Dataset& ds) {
    const ClassPartition parts = partition_classes(ds);
    std::vector<std::size_t> order = parts.minority;
    order.insert(order.end(), parts.majority.begin(), parts.majority.end());
    return ds.subset(order);
}

}  // namespace mubo::data
