#pragma once

// Scalar-output feed-forward network used as the inner learner.
//
// The network maps a row x to a single real z. Class probabilities come from
// the two-class softmax over the logits (1 - z, z):
//
//   p(y=0|x) = e^{1-z} / (e^z + e^{1-z}),   p(y=1|x) = e^z / (e^z + e^{1-z})
//
// which reduces to p(y=1|x) = sigmoid(2z - 1). Everything below is computed
// through that reduction so large |z| never overflows.

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace mubo {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

}  // namespace mubo

namespace mubo::nn {

inline constexpr std::size_t kLayerCount = 4;
inline constexpr std::array<Index, kLayerCount> kLayerWidths{256, 128, 128, 1};

/// One affine map. `weight` is fan_in x fan_out so a batch propagates as X * W + b.
struct Layer {
    Matrix weight;
    Vector bias;
};

/// Weights of the input -> 256 -> 128 -> 128 -> 1 stack (ReLU between layers).
struct MlpParams {
    std::array<Layer, kLayerCount> layers;

    Index input_dim() const { return layers[0].weight.rows(); }
    std::size_t parameter_count() const;
    bool same_shape(const MlpParams& other) const;
    bool all_finite() const;

    /// Same shapes, every entry zero.
    static MlpParams zeros_like(const MlpParams& like);
};

/// Gradients share the parameter layout.
using Gradients = MlpParams;

/// Bitwise comparison (distinguishes -0.0 from 0.0 and compares NaN payloads).
bool bitwise_equal(const MlpParams& a, const MlpParams& b);

struct AdamState {
    MlpParams first_moment;
    MlpParams second_moment;
    std::int64_t step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    static AdamState fresh(const MlpParams& like, double beta1 = 0.9, double beta2 = 0.999,
                           double epsilon = 1e-8);
};

bool bitwise_equal(const AdamState& a, const AdamState& b);

/// Activations kept from one forward pass for the matching backward pass.
struct ForwardCache {
    Matrix input;
    std::array<Matrix, kLayerCount> pre_activation;
    std::array<Matrix, kLayerCount - 1> hidden;  // ReLU outputs

    Index rows() const { return input.rows(); }
};

struct ForwardResult {
    Vector z;
    ForwardCache cache;
};

/// Fan-in scaled uniform init, U(-sqrt(6/fan_in), sqrt(6/fan_in)); biases zero.
/// Throws InvalidDimension for input_dim < 1.
MlpParams init_params(Index input_dim, std::uint64_t seed);

/// Throws InvalidDimension when x.cols() != params.input_dim().
ForwardResult forward(const MlpParams& params, const Matrix& x);

/// Network outputs only; evaluates in row chunks and keeps no cache.
Vector scores(const MlpParams& params, const Matrix& x);

struct ClassProbabilities {
    double majority;  // p(y=0|x)
    double minority;  // p(y=1|x)
};

ClassProbabilities softmax_probs(double z);

/// 0 iff e^{1-z} >= e^z, i.e. z <= 0.5. The tie goes to the majority class.
int predict(double z);

/// Binary cross entropy of the softmax above:
/// log(1 + e^{2z-1}) for y = 0 and log(1 + e^{1-2z}) for y = 1.
double per_sample_loss(double z, int label);

/// d loss / d z = 2 (p(y=1|x) - y).
double loss_derivative(double z, int label);

struct SampleLoss {
    double mean;
    std::vector<double> per_sample;  // minority rows first, then majority rows
};

/// Mean per-sample loss over a sample. `per_sample` is reordered minority-first
/// (stable within each class). Throws EmptyInput on an empty sample.
SampleLoss sample_loss(const MlpParams& params, const Matrix& x, std::span<const int> labels);

/// Gradient of the mean loss over the batch held in `cache`.
/// Throws ContractViolation when `cache` does not belong to (params, x, labels).
Gradients backward(const MlpParams& params, const ForwardCache& cache, const Matrix& x,
                   std::span<const int> labels);

/// One bias-corrected Adam update in place; increments state.step.
/// Throws InvalidDimension when shapes disagree.
void adam_step(MlpParams& params, const Gradients& gradients, AdamState& state, double learning_rate);

/// Global L2 norm over every entry.
double grad_norm(const Gradients& gradients);

struct FullEvaluation {
    double mean_loss = 0.0;
    std::vector<double> per_sample;  // in row order of x
    Gradients gradient;
};

/// Loss and gradient of the mean loss over the whole of x, accumulated over
/// row chunks so memory stays bounded.
FullEvaluation evaluate_full(const MlpParams& params, const Matrix& x, std::span<const int> labels,
                             Index chunk_rows = 512);

struct Checkpoint {
    MlpParams params;
    AdamState optimizer;
};

Checkpoint snapshot(const MlpParams& params, const AdamState& state);
std::pair<MlpParams, AdamState> restore(const Checkpoint& checkpoint);

}  // namespace mubo::nn
