#include "mubo/prep.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <string_view>
#include <vector>

#include "mubo/error.hpp"

namespace mubo::prep {
namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) {
        return {};
    }
    return s.substr(first, s.find_last_not_of(" \t\r\n") - first + 1);
}

std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(sep, start);
        cells.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
        if (pos == std::string_view::npos) {
            return cells;
        }
        start = pos + 1;
    }
}

double number(std::string_view cell, const std::filesystem::path& path, std::size_t row, std::size_t col) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v)) {
        throw ParseError(path.string() + ": non-numeric value '" + std::string(cell) + "'", row, col);
    }
    return v;
}

std::ifstream open(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    return in;
}

data::Dataset from_rows(std::vector<std::string> names, const std::vector<double>& values,
                        std::vector<int> labels) {
    data::Dataset ds;
    ds.feature_names = std::move(names);
    ds.labels = std::move(labels);
    ds.features = Eigen::Map<const Matrix>(values.data(), static_cast<Index>(ds.labels.size()),
                                           static_cast<Index>(ds.feature_names.size()));
    ds.validate();
    return ds;
}

}  // namespace

data::Dataset abalone(const std::filesystem::path& raw, int max_minority_rings) {
    auto in = open(raw);
    std::string line;
    std::getline(in, line);
    const auto header = split(line, ',');
    if (header.size() != 9) {
        throw SchemaError(raw.string() + ": expected 9 abalone columns");
    }
    std::vector<std::string> names(header.begin(), header.end() - 1);
    std::vector<double> values;
    std::vector<int> labels;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (trim(line).empty()) {
            continue;
        }
        const auto cells = split(line, ',');
        if (cells.size() != 9) {
            throw ParseError(raw.string() + ": wrong number of cells", row, cells.size());
        }
        if (cells[0] == "F") {
            values.push_back(0.0);
        } else if (cells[0] == "I") {
            values.push_back(1.0);
        } else if (cells[0] == "M") {
            values.push_back(2.0);
        } else {
            throw ParseError(raw.string() + ": unknown sex '" + std::string(cells[0]) + "'", row, 1);
        }
        for (std::size_t c = 1; c < 8; ++c) {
            values.push_back(number(cells[c], raw, row, c + 1));
        }
        const double rings = number(cells[8], raw, row, 9);
        labels.push_back(rings <= max_minority_rings ? 1 : 0);
    }
    return from_rows(std::move(names), values, std::move(labels));
}

data::Dataset keel(const std::filesystem::path& raw, const std::string& positive_class) {
    auto in = open(raw);
    std::string line;
    std::vector<double> values;
    std::vector<int> labels;
    std::size_t width = 0;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        const auto body = trim(line);
        if (body.empty() || body.front() == '@') {
            continue;
        }
        const auto cells = split(body, ',');
        if (width == 0) {
            width = cells.size();
        }
        if (cells.size() != width || width < 2) {
            throw ParseError(raw.string() + ": inconsistent row width", row, cells.size());
        }
        for (std::size_t c = 0; c + 1 < cells.size(); ++c) {
            values.push_back(number(cells[c], raw, row, c + 1));
        }
        labels.push_back(cells.back() == positive_class ? 1 : 0);
    }
    std::vector<std::string> names;
    for (std::size_t c = 1; c < width; ++c) {
        names.push_back("f" + std::to_string(c));
    }
    return from_rows(std::move(names), values, std::move(labels));
}

data::Dataset orange_tab(const std::filesystem::path& raw, const std::string& positive_class) {
    auto in = open(raw);
    std::string names_line;
    std::string types_line;
    std::string flags_line;
    if (!std::getline(in, names_line) || !std::getline(in, types_line) || !std::getline(in, flags_line)) {
        throw SchemaError(raw.string() + ": missing .tab header rows");
    }
    const auto names = split(names_line, '\t');
    auto flags = split(flags_line, '\t');
    flags.resize(names.size());
    std::size_t class_col = names.size();
    for (std::size_t c = 0; c < flags.size(); ++c) {
        if (flags[c] == "class") {
            class_col = c;
        }
    }
    if (class_col == names.size()) {
        throw SchemaError(raw.string() + ": no column flagged 'class'");
    }
    std::vector<std::string> feature_names;
    for (std::size_t c = 0; c < names.size(); ++c) {
        if (c != class_col) {
            feature_names.emplace_back(names[c]);
        }
    }
    std::vector<double> values;
    std::vector<int> labels;
    std::string line;
    std::size_t row = 3;
    while (std::getline(in, line)) {
        ++row;
        if (trim(line).empty()) {
            continue;
        }
        const auto cells = split(line, '\t');
        if (cells.size() != names.size()) {
            throw ParseError(raw.string() + ": wrong number of cells", row, cells.size());
        }
        for (std::size_t c = 0; c < cells.size(); ++c) {
            if (c == class_col) {
                labels.push_back(cells[c] == positive_class ? 1 : 0);
            } else {
                values.push_back(number(cells[c], raw, row, c + 1));
            }
        }
    }
    return from_rows(std::move(feature_names), values, std::move(labels));
}

data::Dataset run_recipe(const std::string& recipe, const std::filesystem::path& raw,
                         const std::filesystem::path& out, const std::string& positive_class) {
    data::Dataset ds;
    if (recipe == "abalone") {
        ds = abalone(raw);
    } else if (recipe == "keel") {
        ds = keel(raw, positive_class);
    } else if (recipe == "orange") {
        ds = orange_tab(raw, positive_class);
    } else {
        throw ConfigError("unknown recipe '" + recipe + "' (expected abalone, keel or orange)");
    }
    if (out.has_parent_path()) {
        std::filesystem::create_directories(out.parent_path());
    }
    data::write_csv(ds, out);
    return ds;
}

}  // namespace mubo::prep
