#include "mubo/bilevel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>

#include <nlohmann/json.hpp>

#include "mubo/error.hpp"
#include "mubo/seed.hpp"

namespace mubo::bilevel {
namespace {

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

void check_minority_first(const data::Dataset& sample) {
    bool seen_majority = false;
    for (int y : sample.labels) {
        if (y == 0) {
            seen_majority = true;
        } else if (seen_majority) {
            throw ContractViolation("inner loop sample must list minority rows before majority rows");
        }
    }
}

}  // namespace

void MuboConfig::validate() const {
    if (max_iter < 0) {
        throw ConfigError("max_iter must be >= 0");
    }
    if (!(grad_tol > 0.0)) {
        throw ConfigError("grad_tol must be > 0");
    }
    if (max_epochs < 1 || batch_size < 1) {
        throw ConfigError("max_epochs and batch_size must be >= 1");
    }
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
        throw ConfigError("learning_rate must be a positive finite number");
    }
    if (!std::isfinite(initial_majority_loss)) {
        throw ConfigError("initial_majority_loss must be finite");
    }
}

std::string to_string(StopReason reason) {
    return reason == StopReason::max_iter ? "max_iter" : "pool_exhausted";
}

std::size_t micro_size(std::size_t previous_set_size, std::size_t minority_count) {
    if (minority_count == 0) {
        throw InvalidInput("micro_size needs at least one minority row");
    }
    // |S_{t-1}| <= (7/4) m, kept in integers.
    if (4 * previous_set_size <= 7 * minority_count) {
        return ceil_div(minority_count, 10);
    }
    return ceil_div(minority_count, 100);
}

std::optional<std::vector<std::size_t>> draw_micro_sample(std::span<const std::size_t> pool, std::size_t count,
                                                          std::mt19937_64& rng) {
    if (pool.empty()) {
        return std::nullopt;
    }
    std::vector<std::size_t> drawn;
    drawn.reserve(std::min(count, pool.size()));
    std::sample(pool.begin(), pool.end(), std::back_inserter(drawn), count, rng);
    return drawn;
}

InnerResult inner_loop(nn::MlpParams& params, nn::AdamState& optimizer, const data::Dataset& sample,
                       const MuboConfig& config, std::mt19937_64& rng) {
    if (sample.size() == 0) {
        throw EmptyInput("inner loop needs a non-empty sample");
    }
    check_minority_first(sample);

    const std::size_t n = sample.size();
    const auto batch = static_cast<std::size_t>(config.batch_size);
    std::vector<Index> order(n);
    std::vector<int> batch_labels;
    Matrix batch_x;

    InnerResult result;
    while (true) {
        nn::FullEvaluation eval = nn::evaluate_full(params, sample.features, sample.labels);
        result.grad_norm = nn::grad_norm(eval.gradient);
        if (!std::isfinite(eval.mean_loss) || !std::isfinite(result.grad_norm)) {
            throw DivergenceError(result.epochs);
        }
        result.mean_loss = eval.mean_loss;
        result.per_sample_losses = std::move(eval.per_sample);
        if (result.grad_norm <= config.grad_tol || result.epochs >= config.max_epochs) {
            break;
        }

        for (std::size_t i = 0; i < n; ++i) {
            order[i] = static_cast<Index>(i);
        }
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < n; start += batch) {
            const std::size_t len = std::min(batch, n - start);
            const std::span<const Index> rows(order.data() + start, len);
            batch_x = sample.features(rows, Eigen::all);
            batch_labels.resize(len);
            for (std::size_t i = 0; i < len; ++i) {
                batch_labels[i] = sample.labels[static_cast<std::size_t>(rows[i])];
            }
            const nn::ForwardResult fwd = nn::forward(params, batch_x);
            const nn::Gradients grads = nn::backward(params, fwd.cache, batch_x, batch_labels);
            nn::adam_step(params, grads, optimizer, config.learning_rate);
        }
        ++result.epochs;
    }
    return result;
}

double majority_loss(std::span<const double> per_sample_losses, std::size_t minority_count) {
    if (per_sample_losses.size() <= minority_count) {
        throw InvalidInput("majority loss needs more losses than minority rows");
    }
    double sum = 0.0;
    for (std::size_t i = minority_count; i < per_sample_losses.size(); ++i) {
        sum += per_sample_losses[i];
    }
    return sum / static_cast<double>(per_sample_losses.size());
}

Decision check_step(double current, double previous) {
    if (std::isnan(current) || std::isnan(previous)) {
        throw ContractViolation("check_step received NaN");
    }
    return current > previous ? Decision::reject : Decision::accept;
}

MuboRun::MuboRun(const data::Dataset& train, MuboConfig config, std::uint64_t seed)
    : train_(train), config_(config), rng_(derive_seed(seed, 1)) {
    config_.validate();
    train_.validate();
    data::ClassPartition parts = data::partition_classes(train_);
    minority_ = std::move(parts.minority);
    state_.pool = std::move(parts.majority);
    state_.previous_majority_loss = config_.initial_majority_loss;
    state_.next_micro_size = ceil_div(minority_.size(), 10);
    state_.params = nn::init_params(train_.dim(), derive_seed(seed, 0));
    state_.optimizer = nn::AdamState::fresh(state_.params);
    if (config_.max_iter == 0) {
        stop_ = StopReason::max_iter;
    }
}

std::optional<OuterTraceEntry> MuboRun::step() {
    if (stop_) {
        return std::nullopt;
    }
    auto proposal = draw_micro_sample(state_.pool, state_.next_micro_size, rng_);
    if (!proposal) {
        stop_ = StopReason::pool_exhausted;
        return std::nullopt;
    }

    const std::size_t m = minority_.size();
    const std::size_t set_size_before = m + state_.accepted_majority.size();
    const nn::Checkpoint checkpoint = nn::snapshot(state_.params, state_.optimizer);

    std::vector<std::size_t> rows = minority_;
    rows.insert(rows.end(), state_.accepted_majority.begin(), state_.accepted_majority.end());
    rows.insert(rows.end(), proposal->begin(), proposal->end());
    const data::Dataset sample = train_.subset(rows);

    const InnerResult inner = inner_loop(state_.params, state_.optimizer, sample, config_, rng_);
    const double loss = majority_loss(inner.per_sample_losses, m);
    const Decision decision = check_step(loss, state_.previous_majority_loss);

    OuterTraceEntry entry;
    entry.t = state_.iteration;
    entry.micro_size = state_.next_micro_size;
    entry.set_size_before = set_size_before;
    entry.majority_loss = loss;
    entry.accepted = decision == Decision::accept;
    entry.epochs = inner.epochs;
    entry.grad_norm = inner.grad_norm;

    if (decision == Decision::accept) {
        state_.accepted_majority.insert(state_.accepted_majority.end(), proposal->begin(), proposal->end());
        std::vector<std::size_t> remaining;
        remaining.reserve(state_.pool.size() - proposal->size());
        std::set_difference(state_.pool.begin(), state_.pool.end(), proposal->begin(), proposal->end(),
                            std::back_inserter(remaining));
        state_.pool = std::move(remaining);
        state_.previous_majority_loss = loss;
    } else {
        std::tie(state_.params, state_.optimizer) = nn::restore(checkpoint);
    }
    entry.proposed = std::move(*proposal);

    state_.next_micro_size = micro_size(set_size_before, m);
    state_.iteration += 1;
    if (state_.iteration >= config_.max_iter) {
        stop_ = StopReason::max_iter;
    }
    trace_.push_back(entry);
    return entry;
}

MuboResult MuboRun::finish() {
    while (step()) {
    }
    MuboResult result;
    std::vector<std::size_t> rows = minority_;
    rows.insert(rows.end(), state_.accepted_majority.begin(), state_.accepted_majority.end());
    result.training_set = train_.subset(rows);
    result.accepted_majority = state_.accepted_majority;
    result.params = state_.params;
    result.optimizer = state_.optimizer;
    result.trace = trace_;
    result.stop = stop_.value_or(StopReason::max_iter);
    return result;
}

MuboResult run_mubo(const data::Dataset& train, const MuboConfig& config, std::uint64_t seed) {
    MuboRun run(train, config, seed);
    return run.finish();
}

void write_trace(const std::filesystem::path& path, std::span<const OuterTraceEntry> trace, StopReason stop) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write trace file " + path.string());
    }
    for (const OuterTraceEntry& e : trace) {
        const nlohmann::json line = {
            {"t", e.t},
            {"micro_size", e.micro_size},
            {"set_size_before", e.set_size_before},
            {"proposed", e.proposed},
            {"majority_loss", e.majority_loss},
            {"accepted", e.accepted},
            {"epochs", e.epochs},
            {"grad_norm", e.grad_norm},
        };
        out << line.dump() << '\n';
    }
    out << nlohmann::json{{"event", "end"}, {"reason", to_string(stop)}, {"iterations", trace.size()}}.dump()
        << '\n';
    if (!out) {
        throw IoError("failed writing trace file " + path.string());
    }
}

TraceFile read_trace(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open trace file " + path.string());
    }
    TraceFile file;
    std::string line;
    std::size_t line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (line.empty()) {
            continue;
        }
        try {
            const auto j = nlohmann::json::parse(line);
            if (j.contains("event")) {
                file.stop = j.at("reason").get<std::string>() == "max_iter" ? StopReason::max_iter
                                                                            : StopReason::pool_exhausted;
                continue;
            }
            OuterTraceEntry e;
            j.at("t").get_to(e.t);
            j.at("micro_size").get_to(e.micro_size);
            j.at("set_size_before").get_to(e.set_size_before);
            j.at("proposed").get_to(e.proposed);
            j.at("majority_loss").get_to(e.majority_loss);
            j.at("accepted").get_to(e.accepted);
            j.at("epochs").get_to(e.epochs);
            j.at("grad_norm").get_to(e.grad_norm);
            file.entries.push_back(std::move(e));
        } catch (const nlohmann::json::exception& ex) {
            throw ParseError(path.string() + ": " + ex.what(), line_number, 1);
        }
    }
    return file;
}

}  // namespace mubo::bilevel
