#include "din/optim.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace din;
using din::test::random_tensor;

namespace {

void set_grad(Tensor<double>& p, const std::vector<double>& g) {
    p.zero_grad();
    auto buf = p.impl()->grad_buffer();
    std::copy(g.begin(), g.end(), buf.begin());
}

}  // namespace

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
    auto p = random_tensor<double>(Shape{2, 2, 3, 3}, 1, -1, 1, true);
    const std::vector<double> before(p.data().begin(), p.data().end());
    std::vector<Tensor<double>> params{p};
    AdamState<double> state;
    for (int i = 0; i < 5; ++i) {
        set_grad(p, std::vector<double>(p.numel(), 0.0));
        adam_step(params, 1e-3, state);
    }
    EXPECT_EQ(std::vector<double>(p.data().begin(), p.data().end()), before);
    EXPECT_EQ(state.step, 5);
}

TEST(Adam, FirstStepClosedForm) {
    Tensor<double> p(Shape{1, 1, 1, 1}, {0.5}, true);
    std::vector<Tensor<double>> params{p};
    AdamState<double> state;
    set_grad(p, {1.0});
    adam_step(params, 1e-4, state);
    // m_hat = g = 1, v_hat = g^2 = 1, so the update is lr * 1 / (1 + eps).
    EXPECT_NEAR(p.data()[0], 0.5 - 1e-4 / (1.0 + 1e-8), 1e-15);
    EXPECT_EQ(state.step, 1);
}

TEST(Adam, MatchesReferenceRecurrence) {
    Tensor<double> p(Shape{1, 1, 1, 3}, {0.1, -0.2, 0.3}, true);
    std::vector<Tensor<double>> params{p};
    AdamState<double> state;
    std::vector<double> ref{0.1, -0.2, 0.3}, m(3, 0), v(3, 0);
    const double lr = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    for (int t = 1; t <= 10; ++t) {
        std::vector<double> g{std::sin(t * 1.0), std::cos(t * 0.5), 0.1 * t};
        set_grad(p, g);
        adam_step(params, lr, state);
        for (int i = 0; i < 3; ++i) {
            m[i] = b1 * m[i] + (1 - b1) * g[i];
            v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
            const double mh = m[i] / (1 - std::pow(b1, t));
            const double vh = v[i] / (1 - std::pow(b2, t));
            ref[i] -= lr * mh / (std::sqrt(vh) + eps);
        }
    }
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(p.data()[i], ref[i], 1e-14);
}

TEST(Adam, IdenticalParametersStayIdentical) {
    auto a = random_tensor<double>(Shape{1, 1, 2, 2}, 3, -1, 1, true);
    Tensor<double> b(a.shape(), std::vector<double>(a.data().begin(), a.data().end()), true);
    std::vector<Tensor<double>> params{a, b};
    AdamState<double> state;
    for (int t = 0; t < 4; ++t) {
        const std::vector<double> g{0.3 * t, -1.0, 2.0, 0.01};
        set_grad(a, g);
        set_grad(b, g);
        adam_step(params, 1e-2, state);
    }
    EXPECT_EQ(std::vector<double>(a.data().begin(), a.data().end()),
              std::vector<double>(b.data().begin(), b.data().end()));
}

TEST(Adam, MissingGradientIsAnError) {
    auto a = random_tensor<double>(Shape{1, 1, 2, 2}, 3, -1, 1, true);
    std::vector<Tensor<double>> params{a};
    AdamState<double> state;
    EXPECT_THROW(adam_step(params, 1e-3, state), std::logic_error);
}

TEST(Xavier, DeterministicAndBounded) {
    const Shape s{8, 6, 3, 3};
    auto a = xavier_init<float>(s, 5);
    auto b = xavier_init<float>(s, 5);
    auto c = xavier_init<float>(s, 6);
    EXPECT_TRUE(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
    EXPECT_FALSE(std::equal(a.data().begin(), a.data().end(), c.data().begin()));
    const double bound = std::sqrt(6.0 / (6 * 9 + 8 * 9));
    EXPECT_DOUBLE_EQ(xavier_bound(s), bound);
    for (float v : a.data()) {
        EXPECT_GE(v, -bound);
        EXPECT_LE(v, bound);
    }
    EXPECT_TRUE(a.requires_grad());
}

TEST(Xavier, SampleVarianceMatchesGlorot) {
    const Shape s{128, 128, 3, 3};  // 147456 draws
    auto w = xavier_init<double>(s, 11);
    double mean = 0;
    for (double v : w.data()) mean += v;
    mean /= static_cast<double>(w.numel());
    double var = 0;
    for (double v : w.data()) var += (v - mean) * (v - mean);
    var /= static_cast<double>(w.numel() - 1);
    const double expected = 2.0 / (128 * 9 + 128 * 9);
    EXPECT_NEAR(var, expected, 0.05 * expected);
}
