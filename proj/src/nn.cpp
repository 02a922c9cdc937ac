#include "mubo/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <random>
#include <string>

#include "mubo/error.hpp"

namespace mubo::nn {
namespace {

bool bitwise_equal(const Matrix& a, const Matrix& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() &&
           std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

bool bitwise_equal(const Vector& a, const Vector& b) {
    return a.size() == b.size() &&
           std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

double softplus(double t) { return std::max(t, 0.0) + std::log1p(std::exp(-std::abs(t))); }

double sigmoid(double t) {
    if (t >= 0.0) {
        return 1.0 / (1.0 + std::exp(-t));
    }
    const double e = std::exp(t);
    return e / (1.0 + e);
}

void check_label(int label) {
    if (label != 0 && label != 1) {
        throw InvalidInput("label must be 0 or 1, got " + std::to_string(label));
    }
}

void relu_in_place(Matrix& m) { m = m.cwiseMax(0.0); }

// Forward pass writing into `cache`; returns z.
Vector forward_into(const MlpParams& params, const Matrix& x, ForwardCache& cache) {
    cache.input = x;
    const Matrix* input = &cache.input;
    for (std::size_t k = 0; k < kLayerCount; ++k) {
        const Layer& layer = params.layers[k];
        Matrix& pre = cache.pre_activation[k];
        pre.noalias() = (*input) * layer.weight;
        pre.rowwise() += layer.bias.transpose();
        if (k + 1 < kLayerCount) {
            cache.hidden[k] = pre.cwiseMax(0.0);
            input = &cache.hidden[k];
        }
    }
    return cache.pre_activation[kLayerCount - 1].col(0);
}

// Gradient of sum_i scale * l(z_i, y_i); no consistency checks.
Gradients backward_scaled(const MlpParams& params, const ForwardCache& cache, std::span<const int> labels,
                          double scale) {
    const Index n = cache.rows();
    Gradients grads;
    Matrix delta(n, 1);
    const Matrix& out = cache.pre_activation[kLayerCount - 1];
    for (Index i = 0; i < n; ++i) {
        delta(i, 0) = loss_derivative(out(i, 0), labels[static_cast<std::size_t>(i)]) * scale;
    }
    for (std::size_t k = kLayerCount; k-- > 0;) {
        const Matrix& layer_input = k == 0 ? cache.input : cache.hidden[k - 1];
        grads.layers[k].weight.noalias() = layer_input.transpose() * delta;
        grads.layers[k].bias = delta.colwise().sum().transpose();
        if (k > 0) {
            Matrix upstream;
            upstream.noalias() = delta * params.layers[k].weight.transpose();
            delta = (cache.pre_activation[k - 1].array() > 0.0).select(upstream.array(), 0.0).matrix();
        }
    }
    return grads;
}

void accumulate(Gradients& into, const Gradients& g) {
    for (std::size_t k = 0; k < kLayerCount; ++k) {
        into.layers[k].weight += g.layers[k].weight;
        into.layers[k].bias += g.layers[k].bias;
    }
}

}  // namespace

std::size_t MlpParams::parameter_count() const {
    std::size_t total = 0;
    for (const Layer& layer : layers) {
        total += static_cast<std::size_t>(layer.weight.size() + layer.bias.size());
    }
    return total;
}

bool MlpParams::same_shape(const MlpParams& other) const {
    for (std::size_t k = 0; k < kLayerCount; ++k) {
        const Layer& a = layers[k];
        const Layer& b = other.layers[k];
        if (a.weight.rows() != b.weight.rows() || a.weight.cols() != b.weight.cols() ||
            a.bias.size() != b.bias.size()) {
            return false;
        }
    }
    return true;
}

bool MlpParams::all_finite() const {
    return std::all_of(layers.begin(), layers.end(), [](const Layer& layer) {
        return layer.weight.allFinite() && layer.bias.allFinite();
    });
}

MlpParams MlpParams::zeros_like(const MlpParams& like) {
    MlpParams zeros;
    for (std::size_t k = 0; k < kLayerCount; ++k) {
        zeros.layers[k].weight = Matrix::Zero(like.layers[k].weight.rows(), like.layers[k].weight.cols());
        zeros.layers[k].bias = Vector::Zero(like.layers[k].bias.size());
    }
    return zeros;
}

bool bitwise_equal(const MlpParams& a, const MlpParams& b) {
    for (std::size_t k = 0; k < kLayerCount; ++k) {
        if (!bitwise_equal(a.layers[k].weight, b.layers[k].weight) ||
            !bitwise_equal(a.layers[k].bias, b.layers[k].bias)) {
            return false;
        }
    }
    return true;
}

AdamState AdamState::fresh(const MlpParams& like, double beta1, double beta2, double epsilon) {
    AdamState state;
    state.first_moment = MlpParams::zeros_like(like);
    state.second_moment = MlpParams::zeros_like(like);
    state.beta1 = beta1;
    state.beta2 = beta2;
    state.epsilon = epsilon;
    return state;
}

bool bitwise_equal(const AdamState& a, const AdamState& b) {
    return a.step == b.step && std::memcmp(&a.beta1, &b.beta1, sizeof(double)) == 0 &&
           std::memcmp(&a.beta2, &b.beta2, sizeof(double)) == 0 &&
           std::memcmp(&a.epsilon, &b.epsilon, sizeof(double)) == 0 &&
           bitwise_equal(a.first_moment, b.first_moment) && bitwise_equal(a.second_moment, b.second_moment);
}

MlpParams init_params(Index input_dim, std::uint64_t seed) {
    if (input_dim < 1) {
        throw InvalidDimension("input dimension must be at least 1");
    }
    std::mt19937_64 rng(seed);
    MlpParams params;
    Index fan_in = input_dim;
    for (std::size_t k = 0; k < kLayerCount; ++k) {
        const Index fan_out = kLayerWidths[k];
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
        std::uniform_real_distribution<double> dist(-bound, bound);
        Layer& layer = params.layers[k];
        layer.weight.resize(fan_in, fan_out);
        for (Index r = 0; r < fan_in; ++r) {
            for (Index c = 0; c < fan_out; ++c) {
                layer.weight(r, c) = dist(rng);
            }
        }
        layer.bias = Vector::Zero(fan_out);
        fan_in = fan_out;
    }
    return params;
}

ForwardResult forward(const MlpParams& params, const Matrix& x) {
    if (x.cols() != params.input_dim()) {
        throw InvalidDimension("input has " + std::to_string(x.cols()) + " columns, network expects " +
                               std::to_string(params.input_dim()));
    }
    ForwardResult result;
    result.z = forward_into(params, x, result.cache);
    return result;
}

Vector scores(const MlpParams& params, const Matrix& x) {
    if (x.cols() != params.input_dim()) {
        throw InvalidDimension("input has " + std::to_string(x.cols()) + " columns, network expects " +
                               std::to_string(params.input_dim()));
    }
    constexpr Index kChunk = 1024;
    Vector z(x.rows());
    Matrix act;
    for (Index start = 0; start < x.rows(); start += kChunk) {
        const Index len = std::min(kChunk, x.rows() - start);
        act = x.middleRows(start, len);
        for (std::size_t k = 0; k < kLayerCount; ++k) {
            Matrix pre;
            pre.noalias() = act * params.layers[k].weight;
            pre.rowwise() += params.layers[k].bias.transpose();
            if (k + 1 < kLayerCount) {
                relu_in_place(pre);
            }
            act = std::move(pre);
        }
        z.segment(start, len) = act.col(0);
    }
    return z;
}

ClassProbabilities softmax_probs(double z) {
    const double majority_logit = 1.0 - z;
    const double minority_logit = z;
    const double shift = std::max(majority_logit, minority_logit);
    const double e0 = std::exp(majority_logit - shift);
    const double e1 = std::exp(minority_logit - shift);
    const double total = e0 + e1;
    return {e0 / total, e1 / total};
}

int predict(double z) { return z <= 0.5 ? 0 : 1; }

double per_sample_loss(double z, int label) {
    check_label(label);
    return label == 0 ? softplus(2.0 * z - 1.0) : softplus(1.0 - 2.0 * z);
}

double loss_derivative(double z, int label) {
    check_label(label);
    return label == 0 ? 2.0 * sigmoid(2.0 * z - 1.0) : -2.0 * sigmoid(1.0 - 2.0 * z);
}

SampleLoss sample_loss(const MlpParams& params, const Matrix& x, std::span<const int> labels) {
    if (x.rows() == 0) {
        throw EmptyInput("sample loss of an empty sample");
    }
    if (static_cast<std::size_t>(x.rows()) != labels.size()) {
        throw InvalidDimension("feature rows and labels differ in length");
    }
    const Vector z = scores(params, x);
    SampleLoss out;
    out.per_sample.reserve(labels.size());
    double total = 0.0;
    for (int wanted : {1, 0}) {
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] == wanted) {
                const double l = per_sample_loss(z(static_cast<Index>(i)), labels[i]);
                out.per_sample.push_back(l);
                total += l;
            } else {
                check_label(labels[i]);
            }
        }
    }
    out.mean = total / static_cast<double>(labels.size());
    return out;
}

Gradients backward(const MlpParams& params, const ForwardCache& cache, const Matrix& x,
                   std::span<const int> labels) {
    if (cache.rows() == 0 || cache.rows() != x.rows() || static_cast<std::size_t>(x.rows()) != labels.size()) {
        throw ContractViolation("forward cache does not match the batch passed to backward");
    }
    if (cache.input.cols() != params.input_dim() || !bitwise_equal(cache.input, x)) {
        throw ContractViolation("forward cache was produced from a different input");
    }
    for (std::size_t k = 0; k < kLayerCount; ++k) {
        if (cache.pre_activation[k].cols() != params.layers[k].weight.cols()) {
            throw ContractViolation("forward cache layer widths do not match the parameters");
        }
    }
    for (int label : labels) {
        check_label(label);
    }
    return backward_scaled(params, cache, labels, 1.0 / static_cast<double>(x.rows()));
}

void adam_step(MlpParams& params, const Gradients& gradients, AdamState& state, double learning_rate) {
    if (!params.same_shape(gradients) || !params.same_shape(state.first_moment) ||
        !params.same_shape(state.second_moment)) {
        throw InvalidDimension("adam step: parameter, gradient and moment shapes disagree");
    }
    state.step += 1;
    const double b1 = state.beta1;
    const double b2 = state.beta2;
    const double correction1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double correction2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    const double eps = state.epsilon;

    auto update = [&](auto& p, const auto& g, auto& m, auto& v) {
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
        p.array() -= learning_rate * (m.array() / correction1) / ((v.array() / correction2).sqrt() + eps);
    };
    for (std::size_t k = 0; k < kLayerCount; ++k) {
        update(params.layers[k].weight, gradients.layers[k].weight, state.first_moment.layers[k].weight,
               state.second_moment.layers[k].weight);
        update(params.layers[k].bias, gradients.layers[k].bias, state.first_moment.layers[k].bias,
               state.second_moment.layers[k].bias);
    }
}

double grad_norm(const Gradients& gradients) {
    double sum = 0.0;
    for (const Layer& layer : gradients.layers) {
        sum += layer.weight.squaredNorm() + layer.bias.squaredNorm();
    }
    return std::sqrt(sum);
}

FullEvaluation evaluate_full(const MlpParams& params, const Matrix& x, std::span<const int> labels,
                             Index chunk_rows) {
    if (x.rows() == 0) {
        throw EmptyInput("cannot evaluate an empty sample");
    }
    if (x.cols() != params.input_dim() || static_cast<std::size_t>(x.rows()) != labels.size()) {
        throw InvalidDimension("sample shape does not match network or labels");
    }
    for (int label : labels) {
        check_label(label);
    }
    const Index n = x.rows();
    const double scale = 1.0 / static_cast<double>(n);
    FullEvaluation out;
    out.gradient = MlpParams::zeros_like(params);
    out.per_sample.resize(static_cast<std::size_t>(n));
    ForwardCache cache;
    double total = 0.0;
    for (Index start = 0; start < n; start += chunk_rows) {
        const Index len = std::min(chunk_rows, n - start);
        const Vector z = forward_into(params, x.middleRows(start, len), cache);
        const auto chunk_labels = labels.subspan(static_cast<std::size_t>(start), static_cast<std::size_t>(len));
        for (Index i = 0; i < len; ++i) {
            const double l = per_sample_loss(z(i), chunk_labels[static_cast<std::size_t>(i)]);
            out.per_sample[static_cast<std::size_t>(start + i)] = l;
            total += l;
        }
        accumulate(out.gradient, backward_scaled(params, cache, chunk_labels, scale));
    }
    out.mean_loss = total * scale;
    return out;
}

Checkpoint snapshot(const MlpParams& params, const AdamState& state) { return Checkpoint{params, state}; }

std::pair<MlpParams, AdamState> restore(const Checkpoint& checkpoint) {
    return {checkpoint.params, checkpoint.optimizer};
}

}  // namespace mubo::nn
