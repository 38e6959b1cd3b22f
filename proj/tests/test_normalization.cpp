#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "tracevae/grad_check.hpp"
#include "tracevae/normalization.hpp"

using namespace tracevae;

TEST(LayerNorm, HandExamples) {
    Tensor y = layer_norm(Tensor::row({1.0, 3.0}), 1.0, 0.0, 0.0);
    EXPECT_DOUBLE_EQ(y(0, 0), -1.0);
    EXPECT_DOUBLE_EQ(y(0, 1), 1.0);
    Tensor z = layer_norm(Tensor::row({0.0, 2.0}), 2.0, 1.0, 0.0);
    EXPECT_DOUBLE_EQ(z(0, 0), -1.0);
    EXPECT_DOUBLE_EQ(z(0, 1), 3.0);
}

TEST(LayerNorm, ConstantRowMapsToBeta) {
    for (double eps : {0.0, 1e-5}) {
        Tensor y = layer_norm(Tensor::row({4.0, 4.0, 4.0}), 7.0, -0.25, eps);
        for (double v : y.values()) EXPECT_EQ(v, -0.25);
    }
}

TEST(LayerNorm, RejectsShortRows) { EXPECT_THROW(layer_norm(Tensor::row({1.0}), 1.0, 0.0, 1e-5), ShapeError); }

TEST(LayerNorm, SumOfSquaresIdentity) {
    RngStream rng(4242);
    for (int trial = 0; trial < 10000; ++trial) {
        const std::size_t m = 2 + rng.below(63);
        const double gamma = 4.0 * rng.uniform() - 2.0, beta = 4.0 * rng.uniform() - 2.0;
        Tensor x(1, m);
        for (double &v : x.mutable_values()) v = 6.0 * rng.normal();
        Tensor y = layer_norm(x, gamma, beta, 0.0);
        double s = 0.0;
        for (double v : y.values()) s += v * v;
        const double expect = static_cast<double>(m) * (gamma * gamma + beta * beta);
        ASSERT_NEAR(s, expect, 1e-9 * expect) << "trial " << trial;
    }
}

TEST(LayerNorm, TrainableBetaGradient) {
    RngStream rng(3);
    Tensor x(3, 6);
    for (double &v : x.mutable_values()) v = rng.normal();
    Tensor beta = Tensor::scalar(0.3, true);
    Tensor w(3, 6);
    for (double &v : w.mutable_values()) v = rng.normal();
    auto rep = finite_difference_check([&] { return sum(mul(square(layer_norm(x, 3.0, beta, 0.0)), w)); },
                                       {{"x", x}, {"beta", beta}}, 1e-5);
    EXPECT_LE(rep.max_rel_error, 1e-6);
}

TEST(SpectralNorm, DiagonalExample) {
    Tensor w = Tensor::matrix({{2.0, 0.0}, {0.0, 0.5}});
    auto res = spectral_normalize(w);
    EXPECT_NEAR(res.sigma, 2.0, 1e-12);
    EXPECT_NEAR(res.weight(0, 0), 1.0, 1e-12);
    EXPECT_NEAR(res.weight(1, 1), 0.25, 1e-12);
    EXPECT_EQ(res.weight(0, 1), 0.0);
}

TEST(SpectralNorm, IdentityUnchanged) {
    Tensor w = Tensor::matrix({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
    auto res = spectral_normalize(w);
    for (std::size_t i = 0; i < 9; ++i) EXPECT_NEAR(res.weight.values()[i], w.values()[i], 1e-12);
}

TEST(SpectralNorm, ZeroMatrixFlagged) {
    Tensor w(3, 3);
    auto res = spectral_normalize(w);
    EXPECT_TRUE(res.zero_matrix);
    for (double v : res.weight.values()) EXPECT_EQ(v, 0.0);
}

TEST(SpectralNorm, RandomMatricesAgainstJacobi) {
    RngStream rng(77);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t r = 2 + rng.below(7), c = 2 + rng.below(7);
        Tensor w(r, c);
        for (double &v : w.mutable_values()) v = rng.normal();
        const double truth = oracle::sigma_max({w.values().begin(), w.values().end()}, r, c);
        auto res = spectral_normalize(w, trial == 0 ? 100 : 20);
        EXPECT_NEAR(res.sigma, truth, 1e-6 * truth);
        const double after = oracle::sigma_max({res.weight.values().begin(), res.weight.values().end()}, r, c);
        EXPECT_GE(after, 1.0 - 1e-3);
        EXPECT_LE(after, 1.0 + 1e-3);
    }
}

TEST(SpectralNorm, Random4x4HundredIterations) {
    RngStream rng(5);
    Tensor w(4, 4);
    for (double &v : w.mutable_values()) v = rng.normal();
    auto res = spectral_normalize(w, 100);
    const double after = oracle::sigma_max({res.weight.values().begin(), res.weight.values().end()}, 4, 4);
    EXPECT_NEAR(after, 1.0, 1e-3);
}
