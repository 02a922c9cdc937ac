#include "mubo/harness.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mubo/error.hpp"
#include "mubo/seed.hpp"

namespace mubo::harness {
namespace {

using nlohmann::json;

json score_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> score_from(const json& j) {
    if (j.is_null()) {
        return std::nullopt;
    }
    return j.get<double>();
}

std::string csv_cell(const std::optional<double>& v) {
    if (!v) {
        return "null";
    }
    std::ostringstream out;
    out.precision(17);
    out << *v;
    return out.str();
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
    std::istringstream in(text);
    T value{};
    in >> value;
    if (!in || !(in >> std::ws).eof()) {
        throw ConfigError("config key '" + key + "': cannot parse '" + text + "'");
    }
    return value;
}

json losses_json(const metrics::LossBreakdown& b) {
    return {{"minority_loss", score_json(b.minority_loss)},
            {"majority_loss", score_json(b.majority_loss)},
            {"truly_classified_majority", score_json(b.truly_classified_majority)},
            {"falsely_classified_majority", score_json(b.falsely_classified_majority)}};
}

metrics::LossBreakdown losses_from(const json& j) {
    return {score_from(j.at("minority_loss")), score_from(j.at("majority_loss")),
            score_from(j.at("truly_classified_majority")), score_from(j.at("falsely_classified_majority"))};
}

json metrics_json(const metrics::MetricsReport& m) {
    json j = json::object();
    for (const auto& name : metric_names()) {
        j[name] = score_json(metric_value(m, name));
    }
    return j;
}

metrics::MetricsReport metrics_from(const json& j) {
    metrics::MetricsReport m;
    m.f1 = score_from(j.at("f1"));
    m.f1_minority = score_from(j.at("f1_minority"));
    m.f1_majority = score_from(j.at("f1_majority"));
    m.precision = score_from(j.at("precision"));
    m.precision_minority = score_from(j.at("precision_minority"));
    m.precision_majority = score_from(j.at("precision_majority"));
    m.recall = score_from(j.at("recall"));
    m.recall_minority = score_from(j.at("recall_minority"));
    m.recall_majority = score_from(j.at("recall_majority"));
    return m;
}

json config_json(const RunConfig& c) {
    return {{"dataset",
             {{"path", c.dataset_path.string()},
              {"label_column", c.label_column},
              {"positive_label", c.positive_label}}},
            {"run",
             {{"method", baselines::to_string(c.method.kind)},
              {"smote_k", c.method.smote_k},
              {"test_fraction", c.test_fraction},
              {"runs", c.n_runs},
              {"seed", c.base_seed},
              {"output_dir", c.output_dir.string()},
              {"workers", c.workers}}},
            {"mubo",
             {{"max_iter", c.mubo.max_iter},
              {"grad_tol", c.mubo.grad_tol},
              {"max_epochs", c.mubo.max_epochs},
              {"batch_size", c.mubo.batch_size},
              {"learning_rate", c.mubo.learning_rate},
              {"initial_majority_loss", c.mubo.initial_majority_loss}}}};
}

RunConfig config_from(const json& j) {
    RunConfig c;
    const json& d = j.at("dataset");
    c.dataset_path = d.at("path").get<std::string>();
    d.at("label_column").get_to(c.label_column);
    d.at("positive_label").get_to(c.positive_label);
    const json& r = j.at("run");
    c.method.kind = baselines::parse_method(r.at("method").get<std::string>());
    r.at("smote_k").get_to(c.method.smote_k);
    r.at("test_fraction").get_to(c.test_fraction);
    r.at("runs").get_to(c.n_runs);
    r.at("seed").get_to(c.base_seed);
    c.output_dir = r.at("output_dir").get<std::string>();
    r.at("workers").get_to(c.workers);
    const json& m = j.at("mubo");
    m.at("max_iter").get_to(c.mubo.max_iter);
    m.at("grad_tol").get_to(c.mubo.grad_tol);
    m.at("max_epochs").get_to(c.mubo.max_epochs);
    m.at("batch_size").get_to(c.mubo.batch_size);
    m.at("learning_rate").get_to(c.mubo.learning_rate);
    m.at("initial_majority_loss").get_to(c.mubo.initial_majority_loss);
    return c;
}

}  // namespace

void RunConfig::validate() const {
    if (n_runs < 1) {
        throw ConfigError("runs must be >= 1");
    }
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
        throw ConfigError("test_fraction must lie strictly between 0 and 1");
    }
    if (workers < 1) {
        throw ConfigError("workers must be >= 1");
    }
    if (method.smote_k < 1) {
        throw ConfigError("smote_k must be >= 1");
    }
    if (dataset_path.empty()) {
        throw ConfigError("dataset path is required");
    }
    mubo.validate();
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config file " + path.string());
    }
    std::vector<CLI::ConfigItem> items;
    try {
        items = CLI::ConfigTOML().from_config(in);
    } catch (const CLI::Error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }

    const std::filesystem::path base = path.parent_path();
    auto resolve = [&](const std::string& p) {
        const std::filesystem::path candidate(p);
        return candidate.is_absolute() ? candidate : base / candidate;
    };

    RunConfig c;
    for (const CLI::ConfigItem& item : items) {
        if (item.name == "++" || item.name == "--") {
            continue;
        }
        const std::string key = item.fullname();
        if (item.inputs.size() != 1) {
            throw ConfigError("config key '" + key + "' must have exactly one value");
        }
        const std::string& v = item.inputs.front();
        if (key == "dataset.path") {
            c.dataset_path = resolve(v);
        } else if (key == "dataset.label_column") {
            c.label_column = v;
        } else if (key == "dataset.positive_label") {
            c.positive_label = v;
        } else if (key == "run.method") {
            c.method.kind = baselines::parse_method(v);
        } else if (key == "run.smote_k") {
            c.method.smote_k = parse_number<int>(key, v);
        } else if (key == "run.test_fraction") {
            c.test_fraction = parse_number<double>(key, v);
        } else if (key == "run.runs") {
            c.n_runs = parse_number<int>(key, v);
        } else if (key == "run.seed") {
            c.base_seed = parse_number<std::uint64_t>(key, v);
        } else if (key == "run.output_dir") {
            c.output_dir = resolve(v);
        } else if (key == "run.workers") {
            c.workers = parse_number<int>(key, v);
        } else if (key == "mubo.max_iter") {
            c.mubo.max_iter = parse_number<int>(key, v);
        } else if (key == "mubo.grad_tol") {
            c.mubo.grad_tol = parse_number<double>(key, v);
        } else if (key == "mubo.max_epochs") {
            c.mubo.max_epochs = parse_number<int>(key, v);
        } else if (key == "mubo.batch_size") {
            c.mubo.batch_size = parse_number<int>(key, v);
        } else if (key == "mubo.learning_rate") {
            c.mubo.learning_rate = parse_number<double>(key, v);
        } else if (key == "mubo.initial_majority_loss") {
            c.mubo.initial_majority_loss = parse_number<double>(key, v);
        } else {
            throw ConfigError(path.string() + ": unknown key '" + key + "'");
        }
    }
    return c;
}

std::string to_string(RunStatus status) { return status == RunStatus::ok ? "ok" : "diverged"; }

const std::vector<std::string>& metric_names() {
    static const std::vector<std::string> names{
        "f1",     "f1_minority",        "f1_majority",        "precision",       "precision_minority",
        "precision_majority", "recall", "recall_minority", "recall_majority"};
    return names;
}

std::optional<double> metric_value(const metrics::MetricsReport& m, const std::string& name) {
    if (name == "f1") return m.f1;
    if (name == "f1_minority") return m.f1_minority;
    if (name == "f1_majority") return m.f1_majority;
    if (name == "precision") return m.precision;
    if (name == "precision_minority") return m.precision_minority;
    if (name == "precision_majority") return m.precision_majority;
    if (name == "recall") return m.recall;
    if (name == "recall_minority") return m.recall_minority;
    if (name == "recall_majority") return m.recall_majority;
    throw InvalidInput("unknown metric '" + name + "'");
}

Aggregate aggregate(std::span<const RunRecord> runs) {
    Aggregate out;
    for (const auto& name : metric_names()) {
        std::vector<double> values;
        for (const RunRecord& r : runs) {
            if (r.status != RunStatus::ok) {
                continue;
            }
            if (const auto v = metric_value(r.metrics, name)) {
                values.push_back(*v);
            }
        }
        SummaryStat s;
        s.count = values.size();
        if (!values.empty()) {
            double sum = 0.0;
            for (double v : values) {
                sum += v;
            }
            const double mean = sum / static_cast<double>(values.size());
            double sq = 0.0;
            for (double v : values) {
                sq += (v - mean) * (v - mean);
            }
            s.mean = mean;
            s.variance = sq / static_cast<double>(values.size());
        }
        out[name] = s;
    }
    return out;
}

RunRecord execute_run(const data::Dataset& dataset, const RunConfig& config, int run_index) {
    const auto started = std::chrono::steady_clock::now();
    RunRecord record;
    record.run = run_index;
    record.seed = config.base_seed + static_cast<std::uint64_t>(run_index);

    const data::Split split = data::stratified_split(dataset, config.test_fraction, record.seed);
    const data::Standardized scaled = data::standardize(split.train, split.test);
    record.train_rows = scaled.train.size();
    record.test_rows = scaled.test.size();

    try {
        baselines::Rebalanced rebalanced =
            baselines::apply_method(config.method, scaled.train, config.mubo, record.seed);
        record.training_set_rows = rebalanced.sample.size();

        nn::MlpParams params;
        if (rebalanced.mubo) {
            params = std::move(rebalanced.mubo->params);
            record.accepted_majority = rebalanced.mubo->accepted_majority.size();
            record.trace = std::move(rebalanced.mubo->trace);
            record.stop = rebalanced.mubo->stop;
            record.trace_file = "trace_run" + std::to_string(run_index) + ".jsonl";
        } else {
            params = nn::init_params(scaled.train.dim(), derive_seed(record.seed, 0));
            nn::AdamState optimizer = nn::AdamState::fresh(params);
            std::mt19937_64 rng(derive_seed(record.seed, 1));
            bilevel::inner_loop(params, optimizer, rebalanced.sample, config.mubo, rng);
        }

        const Vector z = nn::scores(params, scaled.test.features);
        std::vector<int> predictions(scaled.test.size());
        std::vector<double> losses(scaled.test.size());
        for (std::size_t i = 0; i < predictions.size(); ++i) {
            const double zi = z(static_cast<Index>(i));
            predictions[i] = nn::predict(zi);
            losses[i] = nn::per_sample_loss(zi, scaled.test.labels[i]);
        }
        const metrics::ConfusionCounts counts = metrics::confusion(predictions, scaled.test.labels);
        metrics::check_class_totals(counts, scaled.test.count(1), scaled.test.count(0));
        record.metrics = metrics::report(counts);
        record.test_losses = metrics::loss_breakdown(losses, predictions, scaled.test.labels);
    } catch (const DivergenceError& e) {
        record.status = RunStatus::diverged;
        record.error = e.what();
    }
    record.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return record;
}

RunReport run_experiment(const RunConfig& config) {
    config.validate();
    RunReport report;
    report.config = config;
    data::LoadOptions options{config.label_column, config.positive_label};
    const data::Dataset dataset = data::load_csv(config.dataset_path, options, &report.warnings);
    dataset.validate();

    report.runs.resize(static_cast<std::size_t>(config.n_runs));
    std::atomic<int> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        while (true) {
            const int i = next.fetch_add(1);
            if (i >= config.n_runs) {
                return;
            }
            try {
                report.runs[static_cast<std::size_t>(i)] = execute_run(dataset, config, i);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) {
                    failure = std::current_exception();
                }
            }
        }
    };
    const int threads = std::min(config.workers, config.n_runs);
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (int t = 0; t < threads; ++t) {
            pool.emplace_back(worker);
        }
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
    report.aggregate = aggregate(report.runs);
    return report;
}

void emit_report(const RunReport& report, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) {
        throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
    }

    json runs = json::array();
    for (const RunRecord& r : report.runs) {
        runs.push_back({{"run", r.run},
                        {"seed", r.seed},
                        {"status", to_string(r.status)},
                        {"error", r.error},
                        {"metrics", metrics_json(r.metrics)},
                        {"test_losses", losses_json(r.test_losses)},
                        {"wall_seconds", r.wall_seconds},
                        {"train_rows", r.train_rows},
                        {"test_rows", r.test_rows},
                        {"training_set_rows", r.training_set_rows},
                        {"accepted_majority", r.accepted_majority},
                        {"trace_file", r.trace_file ? json(*r.trace_file) : json(nullptr)}});
        if (r.trace_file) {
            bilevel::write_trace(dir / *r.trace_file, r.trace, r.stop.value_or(bilevel::StopReason::max_iter));
        }
    }
    json agg = json::object();
    for (const auto& [name, s] : report.aggregate) {
        agg[name] = {{"mean", score_json(s.mean)}, {"variance", score_json(s.variance)}, {"count", s.count}};
    }
    const json doc = {{"config", config_json(report.config)},
                      {"warnings", report.warnings},
                      {"runs", runs},
                      {"aggregate", agg}};

    const auto report_path = dir / "report.json";
    std::ofstream out(report_path);
    if (!out) {
        throw IoError("cannot write " + report_path.string());
    }
    out << doc.dump(2) << '\n';

    const auto table_path = dir / "runs.csv";
    std::ofstream table(table_path);
    if (!table) {
        throw IoError("cannot write " + table_path.string());
    }
    table << "run,seed,status";
    for (const auto& name : metric_names()) {
        table << ',' << name;
    }
    table << ",minority_loss,majority_loss,truly_classified_majority,falsely_classified_majority"
             ",wall_seconds,training_set_rows,accepted_majority\n";
    for (const RunRecord& r : report.runs) {
        table << r.run << ',' << r.seed << ',' << to_string(r.status);
        for (const auto& name : metric_names()) {
            table << ',' << csv_cell(metric_value(r.metrics, name));
        }
        table << ',' << csv_cell(r.test_losses.minority_loss) << ',' << csv_cell(r.test_losses.majority_loss) << ','
              << csv_cell(r.test_losses.truly_classified_majority) << ','
              << csv_cell(r.test_losses.falsely_classified_majority) << ',' << csv_cell(r.wall_seconds) << ','
              << r.training_set_rows << ',' << r.accepted_majority << '\n';
    }
    if (!out || !table) {
        throw IoError("failed writing report files in " + dir.string());
    }
}

RunReport parse_report(const std::filesystem::path& report_json) {
    std::ifstream in(report_json);
    if (!in) {
        throw IoError("cannot open " + report_json.string());
    }
    RunReport report;
    try {
        const json doc = json::parse(in);
        report.config = config_from(doc.at("config"));
        doc.at("warnings").get_to(report.warnings);
        for (const json& j : doc.at("runs")) {
            RunRecord r;
            j.at("run").get_to(r.run);
            j.at("seed").get_to(r.seed);
            r.status = j.at("status").get<std::string>() == "ok" ? RunStatus::ok : RunStatus::diverged;
            j.at("error").get_to(r.error);
            r.metrics = metrics_from(j.at("metrics"));
            r.test_losses = losses_from(j.at("test_losses"));
            j.at("wall_seconds").get_to(r.wall_seconds);
            j.at("train_rows").get_to(r.train_rows);
            j.at("test_rows").get_to(r.test_rows);
            j.at("training_set_rows").get_to(r.training_set_rows);
            j.at("accepted_majority").get_to(r.accepted_majority);
            if (!j.at("trace_file").is_null()) {
                r.trace_file = j.at("trace_file").get<std::string>();
                bilevel::TraceFile trace = bilevel::read_trace(report_json.parent_path() / *r.trace_file);
                r.trace = std::move(trace.entries);
                r.stop = trace.stop;
            }
            report.runs.push_back(std::move(r));
        }
        for (const auto& [name, s] : doc.at("aggregate").items()) {
            report.aggregate[name] = SummaryStat{score_from(s.at("mean")), score_from(s.at("variance")),
                                                 s.at("count").get<std::size_t>()};
        }
    } catch (const json::exception& e) {
        throw ParseError(report_json.string() + ": " + e.what(), 0, 0);
    }
    return report;
}

std::vector<RunRecord> read_runs_table(const std::filesystem::path& runs_csv) {
    std::ifstream in(runs_csv);
    if (!in) {
        throw IoError("cannot open " + runs_csv.string());
    }
    std::string line;
    std::getline(in, line);
    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            header.push_back(cell);
        }
    }
    std::vector<RunRecord> runs;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) {
            continue;
        }
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            cells.push_back(cell);
        }
        if (cells.size() != header.size()) {
            throw ParseError(runs_csv.string() + ": row width differs from header", row, cells.size());
        }
        RunRecord r;
        auto value = [&](std::size_t c) -> std::optional<double> {
            if (cells[c] == "null") {
                return std::nullopt;
            }
            try {
                return std::stod(cells[c]);
            } catch (const std::exception&) {
                throw ParseError(runs_csv.string() + ": bad number '" + cells[c] + "'", row, c + 1);
            }
        };
        for (std::size_t c = 0; c < header.size(); ++c) {
            const std::string& h = header[c];
            if (h == "run") {
                r.run = std::stoi(cells[c]);
            } else if (h == "seed") {
                r.seed = std::stoull(cells[c]);
            } else if (h == "status") {
                r.status = cells[c] == "ok" ? RunStatus::ok : RunStatus::diverged;
            } else if (h == "f1") {
                r.metrics.f1 = value(c);
            } else if (h == "f1_minority") {
                r.metrics.f1_minority = value(c);
            } else if (h == "f1_majority") {
                r.metrics.f1_majority = value(c);
            } else if (h == "precision") {
                r.metrics.precision = value(c);
            } else if (h == "precision_minority") {
                r.metrics.precision_minority = value(c);
            } else if (h == "precision_majority") {
                r.metrics.precision_majority = value(c);
            } else if (h == "recall") {
                r.metrics.recall = value(c);
            } else if (h == "recall_minority") {
                r.metrics.recall_minority = value(c);
            } else if (h == "recall_majority") {
                r.metrics.recall_majority = value(c);
            } else if (h == "minority_loss") {
                r.test_losses.minority_loss = value(c);
            } else if (h == "majority_loss") {
                r.test_losses.majority_loss = value(c);
            } else if (h == "truly_classified_majority") {
                r.test_losses.truly_classified_majority = value(c);
            } else if (h == "falsely_classified_majority") {
                r.test_losses.falsely_classified_majority = value(c);
            } else if (h == "wall_seconds") {
                r.wall_seconds = value(c).value_or(0.0);
            } else if (h == "training_set_rows") {
                r.training_set_rows = std::stoull(cells[c]);
            } else if (h == "accepted_majority") {
                r.accepted_majority = std::stoull(cells[c]);
            }
        }
        runs.push_back(std::move(r));
    }
    return runs;
}

}  // namespace mubo::harness
