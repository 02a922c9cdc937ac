#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "gradcheck.hpp"
#include "mubo/error.hpp"
#include "mubo/nn.hpp"
#include "oracles.hpp"

using namespace mubo;
using namespace mubo::nn;

namespace {

Matrix random_rows(Index n, Index d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return oracle::random_matrix(n, d, rng);
}

std::vector<int> random_labels(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution coin(0.4);
    std::vector<int> y(n);
    for (auto& v : y) {
        v = coin(rng) ? 1 : 0;
    }
    return y;
}

}  // namespace

TEST_CASE("init_params shapes, bound and determinism") {
    const auto a = init_params(34, 7);
    const auto b = init_params(34, 7);
    CHECK(bitwise_equal(a, b));
    CHECK_FALSE(bitwise_equal(a, init_params(34, 8)));

    const auto one = init_params(1, 0);
    CHECK(one.layers[0].weight.rows() == 1);
    CHECK(one.layers[0].weight.cols() == 256);
    CHECK(one.layers[1].weight.rows() == 256);
    CHECK(one.layers[2].weight.cols() == 128);
    CHECK(one.layers[3].weight.cols() == 1);

    const auto wide = init_params(5000, 3);
    for (std::size_t l = 0; l < kLayerCount; ++l) {
        const double bound = std::sqrt(6.0 / static_cast<double>(wide.layers[l].weight.rows()));
        CHECK(wide.layers[l].weight.cwiseAbs().maxCoeff() <= bound);
        CHECK(wide.layers[l].bias.isZero(0.0));
    }
    CHECK(wide.layers[0].weight.cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 5000.0));

    CHECK_THROWS_AS(init_params(0, 1), InvalidDimension);
}

TEST_CASE("forward against the hand-composed oracle") {
    const auto p = init_params(6, 11);
    const Matrix x = random_rows(9, 6, 12);
    const auto fwd = forward(p, x);
    REQUIRE(fwd.z.size() == 9);
    for (Index r = 0; r < x.rows(); ++r) {
        CHECK(fwd.z(r) == doctest::Approx(static_cast<double>(oracle::forward_row(p, x, r))).epsilon(1e-12));
    }
    const Vector s = scores(p, x);
    CHECK(s.isApprox(fwd.z, 1e-14));
    CHECK(fwd.cache.rows() == 9);
}

TEST_CASE("forward: zero weights and duplicated rows") {
    const auto p = MlpParams::zeros_like(init_params(4, 1));
    const Matrix x = random_rows(5, 4, 2);
    CHECK(forward(p, x).z.isZero(0.0));

    const auto q = init_params(4, 3);
    Matrix dup(6, 4);
    for (Index r = 0; r < 6; ++r) {
        dup.row(r) = x.row(0);
    }
    // Eigen's product kernels treat trailing rows of a block with a different
    // instruction mix, so equal rows can differ in the last bit or two.
    const Vector z = forward(q, dup).z;
    for (Index r = 1; r < 6; ++r) {
        CHECK(std::abs(z(r) - z(0)) <= 4 * std::numeric_limits<double>::epsilon() * std::abs(z(0)));
    }
    CHECK_THROWS_AS(forward(q, random_rows(2, 5, 1)), InvalidDimension);
}

TEST_CASE("scores matches forward across chunk boundaries") {
    const auto p = init_params(3, 5);
    const Matrix x = random_rows(1500, 3, 6);
    CHECK(scores(p, x).isApprox(forward(p, x).z, 1e-14));
}

TEST_CASE("softmax_probs") {
    const auto half = softmax_probs(0.5);
    CHECK(half.majority == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(half.minority == doctest::Approx(0.5).epsilon(1e-15));

    const double e = std::exp(1.0);
    CHECK(softmax_probs(1.0).minority == doctest::Approx(e / (e + 1.0)).epsilon(1e-14));
    CHECK(softmax_probs(1.0).minority == doctest::Approx(0.73106).epsilon(1e-5));

    const auto big = softmax_probs(1000.0);
    CHECK(std::abs(big.minority - 1.0) <= 1e-12);
    CHECK(std::isfinite(big.majority));

    for (double z : {-1e6, -700.0, -3.0, 0.0, 0.25, 2.0, 800.0, 1e6}) {
        const auto p = softmax_probs(z);
        CHECK(std::abs(p.majority + p.minority - 1.0) <= 1e-12);
        CHECK(p.majority >= 0.0);
        CHECK(p.minority >= 0.0);
    }
}

TEST_CASE("predict") {
    CHECK(predict(0.5) == 0);
    CHECK(predict(0.5000001) == 1);
    CHECK(predict(-3.0) == 0);
    CHECK(predict(std::nextafter(0.5, 1.0)) == 1);
}

TEST_CASE("per_sample_loss closed forms") {
    CHECK(per_sample_loss(0.5, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(per_sample_loss(0.5, 0) == doctest::Approx(0.693147).epsilon(1e-6));
    CHECK(per_sample_loss(1.0, 1) == doctest::Approx(std::log1p(std::exp(-1.0))).epsilon(1e-15));
    CHECK(per_sample_loss(1.0, 1) == doctest::Approx(0.313262).epsilon(1e-6));
    CHECK(per_sample_loss(0.9, 0) == doctest::Approx(per_sample_loss(0.1, 1)).epsilon(1e-15));

    for (double z : {-20.0, -1.5, 0.0, 0.3, 0.5, 0.7, 4.0, 30.0}) {
        for (int y : {0, 1}) {
            const double oracle = static_cast<double>(oracle::softmax_loss(z, y));
            CHECK(per_sample_loss(z, y) == doctest::Approx(oracle).epsilon(1e-13));
            CHECK(per_sample_loss(z, y) > 0.0);
        }
        CHECK(std::abs(per_sample_loss(z, 0) - per_sample_loss(1.0 - z, 1)) <= 1e-12);
    }
    CHECK(std::isfinite(per_sample_loss(1e6, 0)));
    CHECK(per_sample_loss(1e6, 0) == doctest::Approx(2e6 - 1.0));
}

TEST_CASE("loss_derivative matches a finite difference of the loss") {
    for (double z : {-2.0, 0.1, 0.5, 1.7}) {
        for (int y : {0, 1}) {
            const double h = 1e-6;
            const double fd = (per_sample_loss(z + h, y) - per_sample_loss(z - h, y)) / (2 * h);
            CHECK(loss_derivative(z, y) == doctest::Approx(fd).epsilon(1e-7));
        }
    }
}

TEST_CASE("sample_loss") {
    const auto p = init_params(3, 4);
    const Matrix x = random_rows(7, 3, 5);
    const std::vector<int> y{0, 1, 0, 0, 1, 0, 1};

    const auto one = sample_loss(p, x.topRows(1), std::span<const int>(y).first(1));
    REQUIRE(one.per_sample.size() == 1);
    CHECK(one.mean == one.per_sample[0]);

    const auto s = sample_loss(p, x, y);
    const Vector z = forward(p, x).z;
    double sum = 0.0;
    for (Index r = 0; r < 7; ++r) {
        sum += per_sample_loss(z(r), y[static_cast<std::size_t>(r)]);
    }
    CHECK(s.mean == doctest::Approx(sum / 7).epsilon(1e-14));
    CHECK(s.mean == doctest::Approx(static_cast<double>(oracle::mean_loss(p, x, y))).epsilon(1e-12));

    // minority rows 1, 4, 6 come first, then majority rows in order
    const std::vector<Index> order{1, 4, 6, 0, 2, 3, 5};
    for (std::size_t i = 0; i < order.size(); ++i) {
        CHECK(s.per_sample[i] == per_sample_loss(z(order[i]), y[static_cast<std::size_t>(order[i])]));
    }
    CHECK_THROWS_AS(sample_loss(p, Matrix(0, 3), std::span<const int>()), EmptyInput);
}

TEST_CASE("backward: full finite-difference sweep, batch of 8") {
    const auto p = init_params(3, 21);
    const Matrix x = random_rows(8, 3, 22);
    const auto y = random_labels(8, 23);
    const auto res = gradcheck::check(p, x, y, gradcheck::all_coordinates(p));
    CHECK(res.checked + res.skipped_kinks == p.parameter_count());
    CHECK(res.checked > p.parameter_count() * 9 / 10);
    CHECK(res.max_relative_error <= 1e-4);
}

TEST_CASE("backward: duplicated rows leave the mean gradient unchanged") {
    const auto p = init_params(4, 31);
    const Matrix x = random_rows(5, 4, 32);
    const auto y = random_labels(5, 33);
    Matrix x2(10, 4);
    x2 << x, x;
    std::vector<int> y2 = y;
    y2.insert(y2.end(), y.begin(), y.end());

    const auto g1 = backward(p, forward(p, x).cache, x, y);
    const auto g2 = backward(p, forward(p, x2).cache, x2, y2);
    for (std::size_t l = 0; l < kLayerCount; ++l) {
        CHECK(g1.layers[l].weight.isApprox(g2.layers[l].weight, 1e-12));
        CHECK(g1.layers[l].bias.isApprox(g2.layers[l].bias, 1e-12));
    }
}

TEST_CASE("backward: saturated correct outputs give vanishing gradients") {
    auto p = MlpParams::zeros_like(init_params(2, 1));
    p.layers[3].bias(0) = -40.0;  // z = -40 for every row: confidently majority
    const Matrix x = random_rows(4, 2, 3);
    const std::vector<int> y{0, 0, 0, 0};
    CHECK(grad_norm(backward(p, forward(p, x).cache, x, y)) < 1e-30);
}

TEST_CASE("backward rejects a cache from another batch") {
    const auto p = init_params(3, 1);
    const Matrix x = random_rows(4, 3, 2);
    const Matrix other = random_rows(4, 3, 3);
    const std::vector<int> y{0, 1, 0, 1};
    const auto fwd = forward(p, x);
    CHECK_THROWS_AS(backward(p, fwd.cache, other, y), ContractViolation);
    CHECK_THROWS_AS(backward(p, fwd.cache, x, std::span<const int>(y).first(3)), ContractViolation);
}

TEST_CASE("adam_step") {
    const auto p0 = init_params(3, 9);
    SUBCASE("zero gradient leaves parameters unchanged") {
        auto p = p0;
        auto state = AdamState::fresh(p);
        adam_step(p, MlpParams::zeros_like(p), state, 1e-3);
        CHECK(bitwise_equal(p, p0));
        CHECK(state.step == 1);
    }
    SUBCASE("first step from fresh state moves by lr * g / (|g| + eps)") {
        auto p = p0;
        auto state = AdamState::fresh(p);
        auto g = MlpParams::zeros_like(p);
        g.layers[0].weight(0, 0) = 0.3;
        g.layers[2].bias(5) = -2e-9;
        const double lr = 1e-4;
        adam_step(p, g, state, lr);
        // hand-evaluated t=1 recurrence: m_hat = g, v_hat = g^2
        CHECK(p.layers[0].weight(0, 0) - p0.layers[0].weight(0, 0) ==
              doctest::Approx(-lr * 0.3 / (0.3 + 1e-8)).epsilon(1e-9));
        CHECK(p.layers[2].bias(5) - p0.layers[2].bias(5) ==
              doctest::Approx(lr * 2e-9 / (2e-9 + 1e-8)).epsilon(1e-6));
        CHECK(p.layers[1].weight(3, 3) == p0.layers[1].weight(3, 3));
    }
    SUBCASE("deterministic") {
        auto a = p0;
        auto b = p0;
        auto sa = AdamState::fresh(a);
        auto sb = AdamState::fresh(b);
        const Matrix x = random_rows(6, 3, 1);
        const auto y = random_labels(6, 2);
        const auto g = backward(p0, forward(p0, x).cache, x, y);
        adam_step(a, g, sa, 1e-3);
        adam_step(b, g, sb, 1e-3);
        CHECK(bitwise_equal(a, b));
        CHECK(bitwise_equal(sa, sb));
    }
    SUBCASE("shape mismatch") {
        auto p = p0;
        auto state = AdamState::fresh(p);
        CHECK_THROWS_AS(adam_step(p, init_params(4, 1), state, 1e-3), InvalidDimension);
    }
}

TEST_CASE("grad_norm") {
    auto g = MlpParams::zeros_like(init_params(2, 0));
    CHECK(grad_norm(g) == 0.0);
    g.layers[1].weight(4, 7) = 3.0;
    CHECK(grad_norm(g) == 3.0);
    g.layers[3].bias(0) = 4.0;
    CHECK(grad_norm(g) == 5.0);
}

TEST_CASE("evaluate_full agrees with the single-batch path") {
    const auto p = init_params(5, 41);
    const Matrix x = random_rows(1200, 5, 42);
    const auto y = random_labels(1200, 43);
    const auto full = evaluate_full(p, x, y, 256);
    const auto g = backward(p, forward(p, x).cache, x, y);
    CHECK(full.mean_loss == doctest::Approx(sample_loss(p, x, y).mean).epsilon(1e-13));
    CHECK(grad_norm(full.gradient) == doctest::Approx(grad_norm(g)).epsilon(1e-12));
    const Vector z = forward(p, x).z;
    CHECK(full.per_sample[17] == per_sample_loss(z(17), y[17]));
}

TEST_CASE("snapshot and restore") {
    auto p = init_params(3, 2);
    auto state = AdamState::fresh(p);
    const Matrix x = random_rows(4, 3, 1);
    const std::vector<int> y{1, 0, 0, 1};
    adam_step(p, backward(p, forward(p, x).cache, x, y), state, 1e-3);

    const Checkpoint cp = snapshot(p, state);
    auto [rp, rs] = restore(cp);
    CHECK(bitwise_equal(rp, p));
    CHECK(bitwise_equal(rs, state));

    const auto before = p;
    const auto before_state = state;
    adam_step(p, backward(p, forward(p, x).cache, x, y), state, 1e-3);
    CHECK_FALSE(bitwise_equal(p, before));
    CHECK(bitwise_equal(cp.params, before));
    CHECK(bitwise_equal(cp.optimizer, before_state));
    std::tie(p, state) = restore(cp);
    CHECK(bitwise_equal(p, before));
    CHECK(state.step == 1);
}

TEST_CASE("Lemma 1 over random networks") {
    std::mt19937_64 rng(2024);
    const double ln2 = std::log(2.0);
    int violations = 0;
    for (int net = 0; net < 50; ++net) {
        const auto p = init_params(4, static_cast<std::uint64_t>(net));
        const Matrix x = oracle::random_matrix(64, 4, rng, 2.0);
        const Vector z = scores(p, x);
        for (Index r = 0; r < z.size(); ++r) {
            const double l = per_sample_loss(z(r), 0);
            if (predict(z(r)) == 0 ? l > ln2 + 1e-12 : l <= ln2 - 1e-12) {
                ++violations;
            }
        }
    }
    CHECK(violations == 0);
}
