#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mubo/baselines.hpp"
#include "mubo/bilevel.hpp"
#include "mubo/metrics.hpp"

namespace mubo::harness {

struct RunConfig {
    std::filesystem::path dataset_path;
    std::string label_column = "label";
    std::string positive_label = "1";
    baselines::RebalanceMethod method;
    bilevel::MuboConfig mubo;
    double test_fraction = 0.2;
    int n_runs = 5;
    std::uint64_t base_seed = 0;
    std::filesystem::path output_dir = "out";
    int workers = 1;

    /// Throws ConfigError.
    void validate() const;

    bool operator==(const RunConfig&) const = default;
};

/// Reads the TOML-style config file:
///
///   [dataset]  path, label_column, positive_label
///   [run]      method, test_fraction, runs, seed, output_dir, workers, smote_k
///   [mubo]     max_iter, grad_tol, max_epochs, batch_size, learning_rate, initial_majority_loss
///
/// Relative paths are resolved against the config file's directory.
RunConfig load_config(const std::filesystem::path& path);

enum class RunStatus { ok, diverged };

std::string to_string(RunStatus status);

struct RunRecord {
    int run = 0;
    std::uint64_t seed = 0;
    RunStatus status = RunStatus::ok;
    std::string error;
    metrics::MetricsReport metrics;
    metrics::LossBreakdown test_losses;
    double wall_seconds = 0.0;
    std::size_t train_rows = 0;
    std::size_t test_rows = 0;
    std::size_t training_set_rows = 0;  // after rebalancing
    std::size_t accepted_majority = 0;  // mubo only
    std::optional<std::string> trace_file;
    std::vector<bilevel::OuterTraceEntry> trace;
    std::optional<bilevel::StopReason> stop;

    bool operator==(const RunRecord&) const = default;
};

struct SummaryStat {
    std::optional<double> mean;
    std::optional<double> variance;  // population variance over the runs that produced a value
    std::size_t count = 0;

    bool operator==(const SummaryStat&) const = default;
};

/// Keyed by metric name ("f1", "f1_minority", ..., "recall_majority").
using Aggregate = std::map<std::string, SummaryStat>;

struct RunReport {
    RunConfig config;
    std::vector<RunRecord> runs;
    Aggregate aggregate;
    std::vector<std::string> warnings;

    bool operator==(const RunReport&) const = default;
};

/// Metric names in report order.
const std::vector<std::string>& metric_names();

/// Looks up a metric of a MetricsReport by name.
std::optional<double> metric_value(const metrics::MetricsReport& m, const std::string& name);

Aggregate aggregate(std::span<const RunRecord> runs);

/// One seeded run on an already loaded dataset: split, standardize, rebalance,
/// train, evaluate on the held-out rows. DivergenceError is caught and recorded.
RunRecord execute_run(const data::Dataset& dataset, const RunConfig& config, int run_index);

/// All runs for the config (seed = base_seed + run index), in parallel across
/// config.workers threads, followed by the aggregate.
RunReport run_experiment(const RunConfig& config);

/// Writes report.json, runs.csv and trace_run<i>.jsonl for every MUBO run.
void emit_report(const RunReport& report, const std::filesystem::path& dir);

/// Reads a report.json written by emit_report (and the trace files it names).
RunReport parse_report(const std::filesystem::path& report_json);

/// Reads the flat runs.csv table back into records (metrics and losses only).
std::vector<RunRecord> read_runs_table(const std::filesystem::path& runs_csv);

}  // namespace mubo::harness
