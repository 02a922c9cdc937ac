// Command-line runner: `mubo run`, `mubo prep`, `mubo report`.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mubo/error.hpp"
#include "mubo/harness.hpp"
#include "mubo/prep.hpp"

namespace {

namespace fs = std::filesystem;
using namespace mubo;

void print_aggregate(const harness::Aggregate& agg) {
    for (const auto& name : harness::metric_names()) {
        const auto it = agg.find(name);
        if (it == agg.end()) {
            continue;
        }
        const harness::SummaryStat& s = it->second;
        if (s.mean) {
            std::printf("%-20s mean %.4f  var %.3e  (n=%zu)\n", name.c_str(), *s.mean, *s.variance, s.count);
        } else {
            std::printf("%-20s absent\n", name.c_str());
        }
    }
}

int cmd_run(const fs::path& config_path, const std::optional<std::string>& method, std::optional<std::uint64_t> seed,
            std::optional<int> runs, const std::optional<fs::path>& out) {
    harness::RunConfig config = harness::load_config(config_path);
    if (method) {
        config.method.kind = baselines::parse_method(*method);
    }
    if (seed) {
        config.base_seed = *seed;
    }
    if (runs) {
        config.n_runs = *runs;
    }
    if (out) {
        config.output_dir = *out;
    }
    const harness::RunReport report = harness::run_experiment(config);
    harness::emit_report(report, config.output_dir);

    for (const auto& w : report.warnings) {
        std::fprintf(stderr, "warning: %s\n", w.c_str());
    }
    int diverged = 0;
    for (const auto& r : report.runs) {
        const auto f1 = r.metrics.f1;
        if (r.status == harness::RunStatus::ok) {
            std::printf("run %d seed %llu  f1 %s  %.1fs\n", r.run, static_cast<unsigned long long>(r.seed),
                        f1 ? std::to_string(*f1).c_str() : "null", r.wall_seconds);
        } else {
            ++diverged;
            std::printf("run %d seed %llu  diverged: %s\n", r.run, static_cast<unsigned long long>(r.seed),
                        r.error.c_str());
        }
    }
    print_aggregate(report.aggregate);
    std::printf("report written to %s\n", config.output_dir.string().c_str());
    return diverged == static_cast<int>(report.runs.size()) ? 2 : 0;
}

int cmd_prep(const std::string& recipe, const fs::path& in, const fs::path& out, const std::string& positive) {
    const data::Dataset ds = prep::run_recipe(recipe, in, out, positive);
    std::printf("%s: %zu rows, %zu features, %zu minority\n", out.string().c_str(), ds.size(), ds.dim(),
                ds.count(1));
    return 0;
}

int cmd_report(const fs::path& dir) {
    const auto runs = harness::read_runs_table(dir / "runs.csv");
    const harness::Aggregate agg = harness::aggregate(runs);
    print_aggregate(agg);

    nlohmann::json doc = nlohmann::json::object();
    for (const auto& [name, s] : agg) {
        doc[name] = {{"mean", s.mean ? nlohmann::json(*s.mean) : nlohmann::json(nullptr)},
                     {"variance", s.variance ? nlohmann::json(*s.variance) : nlohmann::json(nullptr)},
                     {"count", s.count}};
    }
    std::ofstream file(dir / "aggregate.json");
    if (!file) {
        throw IoError("cannot write " + (dir / "aggregate.json").string());
    }
    file << doc.dump(2) << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Majority undersampling experiments"};
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "execute the configured runs and write a report");
    fs::path config_path;
    std::optional<std::string> method;
    std::optional<std::uint64_t> seed;
    std::optional<int> runs;
    std::optional<fs::path> out;
    run->add_option("--config", config_path, "config file")->required()->check(CLI::ExistingFile);
    run->add_option("--method", method, "none | random_undersample | smote | mubo");
    run->add_option("--seed", seed, "base seed");
    run->add_option("--runs", runs, "number of seeded runs");
    run->add_option("--out", out, "output directory");

    auto* prep_cmd = app.add_subcommand("prep", "binarize a raw dataset into the loader's CSV format");
    std::string recipe;
    fs::path raw;
    fs::path prepared;
    std::string positive = "1";
    prep_cmd->add_option("recipe", recipe, "abalone | keel | orange")->required();
    prep_cmd->add_option("--in", raw, "raw file")->required()->check(CLI::ExistingFile);
    prep_cmd->add_option("--out", prepared, "output CSV")->required();
    prep_cmd->add_option("--positive", positive, "raw class value mapped to the minority label");

    auto* report = app.add_subcommand("report", "re-aggregate runs.csv in an output directory");
    fs::path report_dir;
    report->add_option("dir", report_dir, "output directory of a previous run")->required()->check(CLI::ExistingDirectory);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (*run) {
            return cmd_run(config_path, method, seed, runs, out);
        }
        if (*prep_cmd) {
            return cmd_prep(recipe, raw, prepared, positive);
        }
        return cmd_report(report_dir);
    } catch (const mubo::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
