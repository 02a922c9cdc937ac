#pragma once

// Majority undersampling by bilevel accept/reject.
//
// Outer loop: propose a micro-sample of majority rows, add it to the accepted
// training set, retrain (inner loop), and keep the proposal only if the
// majority share of the mean training loss did not go up. Rejected proposals
// roll the network and optimizer back to their pre-proposal state.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mubo/data.hpp"
#include "mubo/nn.hpp"

namespace mubo::bilevel {

struct MuboConfig {
    int max_iter = 50;
    double grad_tol = 1e-3;
    int max_epochs = 20;
    int batch_size = 32;
    double learning_rate = 1e-4;
    double initial_majority_loss = 10.0;

    /// Throws ConfigError on non-positive settings.
    void validate() const;

    bool operator==(const MuboConfig&) const = default;
};

enum class Decision { accept, reject };

enum class StopReason { max_iter, pool_exhausted };

std::string to_string(StopReason reason);

struct OuterTraceEntry {
    int t = 0;
    std::size_t micro_size = 0;             // scheduled size M_t
    std::vector<std::size_t> proposed;      // train-row indices actually drawn
    std::size_t set_size_before = 0;        // |S_{t-1}|
    double majority_loss = 0.0;             // J(S_{M_t}) after the inner loop
    bool accepted = false;
    int epochs = 0;
    double grad_norm = 0.0;                 // full-sample gradient norm at exit

    bool operator==(const OuterTraceEntry&) const = default;
};

struct MuboState {
    std::vector<std::size_t> accepted_majority;  // in acceptance order
    std::vector<std::size_t> pool;               // not yet accepted, ascending
    double previous_majority_loss = 0.0;         // last accepted J (or the sentinel)
    int iteration = 0;
    std::size_t next_micro_size = 0;
    nn::MlpParams params;
    nn::AdamState optimizer;
};

/// ceil(m/10) while |S_{t-1}| <= 1.75 m, ceil(m/100) afterwards; never 0.
std::size_t micro_size(std::size_t previous_set_size, std::size_t minority_count);

/// Up to `count` distinct entries of `pool`, uniformly without replacement.
/// std::nullopt signals an exhausted (empty) pool.
std::optional<std::vector<std::size_t>> draw_micro_sample(std::span<const std::size_t> pool, std::size_t count,
                                                          std::mt19937_64& rng);

struct InnerResult {
    std::vector<double> per_sample_losses;  // at the final weights, in sample order
    double mean_loss = 0.0;
    int epochs = 0;
    double grad_norm = 0.0;
};

/// Shuffled mini-batch Adam over `sample` (minority rows first) until the
/// full-sample gradient norm drops to grad_tol at an epoch boundary or
/// max_epochs epochs have run. Throws DivergenceError on a non-finite loss.
InnerResult inner_loop(nn::MlpParams& params, nn::AdamState& optimizer, const data::Dataset& sample,
                       const MuboConfig& config, std::mt19937_64& rng);

/// (1/|S|) * sum of the losses past the first `minority_count` entries.
double majority_loss(std::span<const double> per_sample_losses, std::size_t minority_count);

/// Reject iff current > previous. Throws ContractViolation on NaN.
Decision check_step(double current, double previous);

struct MuboResult {
    data::Dataset training_set;                  // every minority row, then accepted majority rows
    std::vector<std::size_t> accepted_majority;  // train-row indices
    nn::MlpParams params;
    nn::AdamState optimizer;
    std::vector<OuterTraceEntry> trace;
    StopReason stop = StopReason::max_iter;
};

/// Step-wise driver; run_mubo() is the loop over step().
class MuboRun {
public:
    MuboRun(const data::Dataset& train, MuboConfig config, std::uint64_t seed);

    /// One outer iteration. std::nullopt once the loop has finished.
    std::optional<OuterTraceEntry> step();

    bool finished() const { return stop_.has_value(); }
    const MuboState& state() const { return state_; }
    const std::vector<OuterTraceEntry>& trace() const { return trace_; }
    std::size_t minority_count() const { return minority_.size(); }

    /// Runs any remaining iterations and returns the outcome.
    MuboResult finish();

private:
    const data::Dataset& train_;
    MuboConfig config_;
    std::vector<std::size_t> minority_;
    std::mt19937_64 rng_;
    MuboState state_;
    std::vector<OuterTraceEntry> trace_;
    std::optional<StopReason> stop_;
};

MuboResult run_mubo(const data::Dataset& train, const MuboConfig& config, std::uint64_t seed);

/// One JSON object per line per outer iteration, then a closing
/// {"event":"end",...} record carrying the stop reason.
void write_trace(const std::filesystem::path& path, std::span<const OuterTraceEntry> trace, StopReason stop);

struct TraceFile {
    std::vector<OuterTraceEntry> entries;
    std::optional<StopReason> stop;
};

TraceFile read_trace(const std::filesystem::path& path);

}  // namespace mubo::bilevel
