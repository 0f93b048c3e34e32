#include <gtest/gtest.h>

#include <cmath>

#include "lra/optim.hpp"

using lra::Act;
using lra::LayerSpec;
using lra::Matrix;
using lra::Network;
using lra::OptimizerState;
using lra::OptKind;
using lra::Rng;
using lra::UpdateSet;

namespace {

Network scalar_net(double w) {
    std::vector<LayerSpec> specs(1);
    specs[0].width = 1;
    specs[0].f = Act::identity;
    Network net(1, specs);
    net.layer(0).w(0, 0) = w;
    return net;
}

UpdateSet scalar_update(double g) {
    UpdateSet u(1);
    lra::LayerUpdate lu;
    lu.dw = Matrix(1, 1, g);
    lu.db = Matrix(1, 1, 0.0);
    u.layers[0] = lu;
    return u;
}

}  // namespace

TEST(Sgd, ZeroUpdateLeavesParametersUnchanged) {
    Network net = scalar_net(2.0);
    OptimizerState st;
    st.learning_rate = 0.01;
    lra::apply_updates(net, scalar_update(0.0), st);
    EXPECT_DOUBLE_EQ(net.layer(0).w(0, 0), 2.0);
}

TEST(Sgd, OneStepArithmetic) {
    Network net = scalar_net(2.0);
    OptimizerState st;
    st.learning_rate = 1.0;
    lra::apply_updates(net, scalar_update(0.5), st);
    EXPECT_DOUBLE_EQ(net.layer(0).w(0, 0), 1.5);
}

TEST(Adam, FirstStepDisplacementIsAboutLearningRate) {
    Network net = scalar_net(0.0);
    OptimizerState st;
    st.kind = OptKind::adam;
    st.learning_rate = 0.01;
    lra::apply_updates(net, scalar_update(0.37), st);
    // Bias-corrected first step: lr * g / (sqrt(g^2) + eps) ~ lr.
    EXPECT_NEAR(net.layer(0).w(0, 0), -0.01, 1e-8);
}

TEST(Adam, ScaleInvariantInTheLongRun) {
    // After many identical-gradient steps, per-step displacement becomes
    // independent of the gradient scale.
    const auto run = [](double g) {
        Network net = scalar_net(0.0);
        OptimizerState st;
        st.kind = OptKind::adam;
        st.learning_rate = 0.001;
        double before = 0.0;
        for (int i = 0; i < 1000; ++i) {
            before = net.layer(0).w(0, 0);
            lra::apply_updates(net, scalar_update(g), st);
        }
        return before - net.layer(0).w(0, 0);
    };
    const double step1 = run(1.0);
    const double step100 = run(100.0);
    EXPECT_NEAR(step1 / step100, 1.0, 0.01);
}

TEST(Adam, HaltedLayersKeepTheirStepCounters) {
    std::vector<LayerSpec> specs(2);
    specs[0].width = 2;
    specs[0].f = Act::tanh;
    specs[1].width = 2;
    specs[1].f = Act::identity;
    Network net(2, specs);
    OptimizerState st;
    st.kind = OptKind::adam;

    UpdateSet top_only(2);
    lra::LayerUpdate lu;
    lu.dw = Matrix(2, 2, 0.1);
    lu.db = Matrix(1, 2, 0.1);
    top_only.layers[1] = lu;

    Matrix w0 = net.layer(0).w;
    lra::apply_updates(net, top_only, st);
    lra::apply_updates(net, top_only, st);
    EXPECT_EQ(net.layer(0).w, w0);         // untouched
    EXPECT_EQ(st.slots[0].step, 0u);       // no bias-correction drift
    EXPECT_EQ(st.slots[1].step, 2u);
}

TEST(Apply, ShapeMismatchRejected) {
    Network net = scalar_net(1.0);
    UpdateSet u(1);
    lra::LayerUpdate lu;
    lu.dw = Matrix(2, 2);
    lu.db = Matrix(1, 1);
    u.layers[0] = lu;
    OptimizerState st;
    EXPECT_THROW(lra::apply_updates(net, u, st), lra::ShapeError);
}

TEST(Apply, DeterministicUnderIdenticalStream) {
    const auto run = [] {
        Network net = scalar_net(0.5);
        OptimizerState st;
        st.kind = OptKind::adam;
        Rng rng(5);
        for (int i = 0; i < 50; ++i)
            lra::apply_updates(net, scalar_update(rng.next_gaussian()), st);
        return net.layer(0).w(0, 0);
    };
    const double a = run(), b = run();
    EXPECT_EQ(a, b);
}

TEST(Init, ZerosScheme) {
    std::vector<LayerSpec> specs(2);
    specs[0].width = 8;
    specs[1].width = 3;
    Network net(5, specs);
    Rng rng(1);
    net.layer(0).w.fill(7.0);
    lra::init_weights(net, {lra::InitScheme::Kind::zeros, 0.0}, rng);
    for (const auto& l : net.layers())
        for (std::size_t i = 0; i < l.w.size(); ++i) EXPECT_EQ(l.w.data()[i], 0.0);
}

TEST(Init, GaussianEmpiricalStd) {
    std::vector<LayerSpec> specs(8, LayerSpec{128, Act::sigmoid, {}, lra::LossKind::log_penalty});
    Network net(128, specs);
    Rng rng(2);
    lra::init_weights(net, {lra::InitScheme::Kind::gaussian, 0.025}, rng);
    double sum = 0.0, sumsq = 0.0;
    std::size_t n = 0;
    for (const auto& l : net.layers())
        for (std::size_t i = 0; i < l.w.size(); ++i) {
            sum += l.w.data()[i];
            sumsq += l.w.data()[i] * l.w.data()[i];
            ++n;
        }
    const double mean = sum / n;
    const double std = std::sqrt(sumsq / n - mean * mean);
    EXPECT_NEAR(std, 0.025, 0.0025);
    for (const auto& l : net.layers())
        for (std::size_t i = 0; i < l.b.size(); ++i) EXPECT_EQ(l.b.data()[i], 0.0);
}

TEST(Init, FanInUniformBound) {
    std::vector<LayerSpec> specs(1);
    specs[0].width = 64;
    Network net(784, specs);
    Rng rng(3);
    lra::init_weights(net, {lra::InitScheme::Kind::fan_in_uniform, 0.0}, rng);
    const double bound = 1.0 / std::sqrt(784.0);
    for (std::size_t i = 0; i < net.layer(0).w.size(); ++i) {
        EXPECT_GE(net.layer(0).w.data()[i], -bound);
        EXPECT_LE(net.layer(0).w.data()[i], bound);
    }
}

TEST(Init, FeedbackMatricesSurviveReinit) {
    std::vector<LayerSpec> specs(2);
    specs[0].width = 4;
    specs[1].width = 2;
    Network net(3, specs);
    Rng rng(4);
    net.attach_feedback(rng, 1.0);
    Matrix e = *net.layer(1).feedback;
    lra::init_weights(net, {lra::InitScheme::Kind::gaussian, 0.1}, rng);
    EXPECT_EQ(*net.layer(1).feedback, e);
}
