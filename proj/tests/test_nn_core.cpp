#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "bae/architecture.hpp"
#include "bae/gradcheck.hpp"
#include "bae/kernels.hpp"
#include "bae/network.hpp"
#include "bae/rng.hpp"

using namespace bae;

namespace {

Tensor random_batch(const Shape& shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    Rng rng(seed);
    Tensor t(shape);
    for (double& v : t.data()) v = lo + (hi - lo) * uniform01(rng);
    return t;
}

Shape with_batch(std::size_t n, const Shape& s) {
    Shape out{n};
    out.insert(out.end(), s.begin(), s.end());
    return out;
}

}  // namespace

TEST(InitNetwork, SameSeedGivesBitwiseIdenticalParameters) {
    const auto arch = preset_architecture("fmnist-conv-paper");
    const Network a = init_network(arch.encoder, InitScheme::paper_normal, 17);
    const Network b = init_network(arch.encoder, InitScheme::paper_normal, 17);
    const Network c = init_network(arch.encoder, InitScheme::paper_normal, 18);
    EXPECT_TRUE(same_parameters(a, b));
    EXPECT_FALSE(same_parameters(a, c));
}

TEST(InitNetwork, PaperNormalMomentsOverManyWeights) {
    const Network net = init_network({{1000}, {Dense{1000, 100}}}, InitScheme::paper_normal, 3);
    const auto w = net.params()[0].data();
    ASSERT_EQ(w.size(), 100000u);
    const double mean = std::accumulate(w.begin(), w.end(), 0.0) / static_cast<double>(w.size());
    double var = 0.0;
    for (double v : w) var += (v - mean) * (v - mean);
    var /= static_cast<double>(w.size() - 1);
    EXPECT_NEAR(mean, 0.0, 3e-2);
    EXPECT_NEAR(var, 1.0, 3e-2);
    for (double b : net.params()[1].data()) EXPECT_EQ(b, 0.0);
}

TEST(InitNetwork, ScaledUsesHeStandardDeviation) {
    const Network net = init_network({{200}, {Dense{200, 500}}}, InitScheme::scaled, 9);
    const auto w = net.params()[0].data();
    double ss = 0.0;
    for (double v : w) ss += v * v;
    EXPECT_NEAR(ss / static_cast<double>(w.size()), 2.0 / 200.0, 2e-4);
}

TEST(InitNetwork, DenseParameterShapes) {
    const Network net({{3}, {Dense{3, 2}}});
    ASSERT_EQ(net.params().size(), 2u);
    EXPECT_EQ(net.params()[0].shape(), (Shape{2, 3}));
    EXPECT_EQ(net.params()[1].shape(), (Shape{2}));
}

TEST(NetworkSpec, InconsistentSpecNamesLayerPair) {
    NetworkSpec spec{{4}, {Dense{4, 3}, relu(), Dense{5, 2}}};
    try {
        spec.validate();
        FAIL() << "expected ShapeError";
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("layer 2 dense(5,2)"), std::string::npos) << msg;
        EXPECT_NE(msg.find("layer 1 relu"), std::string::npos) << msg;
    }
    EXPECT_THROW(Network(NetworkSpec{{4}, {leaky_relu(1.5)}}), ShapeError);
    EXPECT_THROW(Network(NetworkSpec{{1, 2, 2}, {Conv2d{1, 1, 3, 1, 0}}}), ShapeError);
}

TEST(Forward, PaperEncoderOutputShapes) {
    const auto cifar = preset_architecture("cifar-conv-paper");
    EXPECT_EQ(cifar.encoder.output_shape(), (Shape{16, 4, 4}));
    const auto fm = preset_architecture("fmnist-conv-paper");
    EXPECT_EQ(fm.encoder.output_shape(), (Shape{8, 2, 2}));

    const Network enc = init_network(cifar.encoder, InitScheme::scaled, 1);
    const Tensor y = enc.forward(random_batch({2, 3, 32, 32}, 5, 0.0, 1.0));
    EXPECT_EQ(y.shape(), (Shape{2, 16, 4, 4}));
    EXPECT_EQ(element_count(fm.encoder.output_shape()), 32u);
}

TEST(Forward, MirroredDecodersReproduceInputShape) {
    for (const auto& name : preset_names()) {
        const auto arch = preset_architecture(name);
        EXPECT_EQ(arch.decoder.input_shape, arch.encoder.output_shape()) << name;
        EXPECT_EQ(arch.decoder.output_shape(), arch.encoder.input_shape) << name;
        EXPECT_TRUE(std::holds_alternative<Activation>(arch.decoder.layers.back()) ||
                    std::holds_alternative<Reshape>(arch.decoder.layers.back()))
            << name;
    }
    const auto dense = preset_architecture("fmnist-dense-paper");
    ASSERT_EQ(dense.encoder.layers.size(), 8u);
    EXPECT_EQ(std::get<Dense>(dense.encoder.layers[6]), (Dense{128, 50}));
}

TEST(Forward, IdentityKernel) {
    Network net({{1, 3, 3}, {Conv2d{1, 1, 1, 1, 0}}});
    net.params()[0][0] = 1.0;
    net.touch();
    const Tensor x = random_batch({1, 1, 3, 3}, 2);
    EXPECT_EQ(net.forward(x), x);
}

TEST(Forward, RejectsWrongInputShape) {
    const Network net({{4}, {Dense{4, 2}}});
    EXPECT_THROW(net.forward(Tensor({1, 5})), ShapeError);
    EXPECT_THROW(net.forward(Tensor({4})), ShapeError);
}

TEST(Conv2d, OutputShapeFormula) {
    EXPECT_EQ(output_shape(Conv2d{3, 8, 4, 2, 1}, {3, 32, 32}), (Shape{8, 16, 16}));
    EXPECT_EQ(output_shape(Conv2d{4, 8, 3, 2, 1}, {4, 7, 7}), (Shape{8, 4, 4}));
}

TEST(Conv2d, HandCrossCorrelation) {
    Network net({{1, 2, 2}, {Conv2d{1, 1, 2, 1, 0}}});
    net.params()[0].fill(1.0);
    net.touch();
    const Tensor y = net.forward(Tensor({1, 1, 2, 2}, {1, 2, 3, 4}));
    EXPECT_EQ(y.shape(), (Shape{1, 1, 1, 1}));
    EXPECT_EQ(y[0], 10.0);
}

TEST(Conv2d, ZeroInputBroadcastsBias) {
    Network net = init_network({{2, 4, 4}, {Conv2d{2, 3, 3, 1, 1}}}, InitScheme::paper_normal, 4);
    net.params()[1] = Tensor({3}, {0.5, -1.0, 2.0});
    net.touch();
    const Tensor y = net.forward(Tensor({1, 2, 4, 4}));
    for (std::size_t o = 0; o < 3; ++o)
        for (std::size_t i = 0; i < 16; ++i) EXPECT_EQ(y[o * 16 + i], net.params()[1][o]);
}

TEST(Activation, ElementwiseValues) {
    auto apply = [](const LayerSpec& a, double v) {
        return Network({{1}, {a}}).forward(Tensor({1, 1}, {v}))[0];
    };
    EXPECT_DOUBLE_EQ(apply(leaky_relu(0.1), -1.0), -0.1);
    EXPECT_EQ(apply(sigmoid(), 0.0), 0.5);
    EXPECT_EQ(apply(relu(), -5.0), 0.0);
    EXPECT_EQ(apply(relu(), 5.0), 5.0);
}

TEST(MseLoss, Values) {
    const Tensor x({2}, {0.0, 0.0});
    EXPECT_EQ(mse_loss(x, x), 0.0);
    EXPECT_EQ(mse_loss(x, Tensor({2}, {1.0, 1.0})), 1.0);
    EXPECT_THROW(mse_loss(x, Tensor({3})), ShapeError);
}

TEST(MseLoss, MatchesIndependentSummation) {
    const Tensor a = random_batch({7, 13}, 11), b = random_batch({7, 13}, 12);
    // batch-then-feature means, summed the other way round
    double per_sample_mean_sum = 0.0;
    for (std::size_t r = 0; r < 7; ++r) {
        double s = 0.0;
        for (std::size_t c = 13; c-- > 0;) s += std::pow(a[r * 13 + c] - b[r * 13 + c], 2);
        per_sample_mean_sum += s / 13.0;
    }
    EXPECT_NEAR(mse_loss(a, b), per_sample_mean_sum / 7.0, 1e-12);
}

TEST(Backward, FiniteDifferencesEveryLayerKind) {
    const auto results = run_gradcheck(2024, 3);
    ASSERT_EQ(results.size(), 27u);
    for (const auto& r : results) {
        EXPECT_TRUE(r.passed) << r.kind << " " << r.network << " rel err " << r.max_rel_error;
        EXPECT_GT(r.checked, 0u);
    }
}

TEST(Backward, ZeroLossGradientGivesZeroGradients) {
    const auto arch = preset_architecture("fmnist-conv-paper");
    const Network dec = init_network(arch.decoder, InitScheme::scaled, 3);
    const auto cache = dec.forward_train(random_batch({2, 8, 2, 2}, 1));
    const Gradients g = dec.backward(cache, Tensor(cache.output().shape()));
    for (const auto& p : g.params)
        for (double v : p.data()) EXPECT_EQ(v, 0.0);
    for (double v : g.input.data()) EXPECT_EQ(v, 0.0);
}

TEST(Backward, DenseWeightGradientIsOuterProduct) {
    Network net({{2}, {Dense{2, 2}}});
    net.params()[0] = Tensor({2, 2}, {1.0, 2.0, 3.0, 4.0});
    net.touch();
    const Tensor x({1, 2}, {5.0, -1.0});
    const Tensor gy({1, 2}, {0.5, 2.0});
    const Gradients g = net.backward(net.forward_train(x), gy);
    EXPECT_EQ(g.params[0], Tensor({2, 2}, {2.5, -0.5, 10.0, -2.0}));
    EXPECT_EQ(g.params[1], Tensor({2}, {0.5, 2.0}));
    // dx = W^T gy
    EXPECT_EQ(g.input, Tensor({1, 2}, {0.5 * 1 + 2 * 3, 0.5 * 2 + 2 * 4}));
}

TEST(Backward, StaleCacheRejected) {
    Network net = init_network({{3}, {Dense{3, 2}}}, InitScheme::paper_normal, 1);
    const auto cache = net.forward_train(random_batch({1, 3}, 2));
    const Tensor gy({1, 2}, {1.0, 1.0});
    const Gradients g = net.backward(cache, gy);
    net.adam_step(g, AdamConfig{});
    EXPECT_THROW(net.backward(cache, gy), std::logic_error);
    const Network other = net;
    EXPECT_THROW(other.backward(net.forward_train(random_batch({1, 3}, 2)), gy), std::logic_error);
}

TEST(MaxPool, RoutesGradientToArgmaxOnly) {
    const Network net({{2, 4, 6}, {MaxPool2x2{}}});
    const Tensor x = random_batch({3, 2, 4, 6}, 8);
    const auto cache = net.forward_train(x);
    const Tensor gy = random_batch(cache.output().shape(), 9);
    const Gradients g = net.backward(cache, gy);
    const double in_sum = std::accumulate(gy.data().begin(), gy.data().end(), 0.0);
    const double out_sum = std::accumulate(g.input.data().begin(), g.input.data().end(), 0.0);
    EXPECT_NEAR(in_sum, out_sum, 1e-12);
    std::size_t nonzero = 0;
    for (double v : g.input.data()) nonzero += v != 0.0;
    EXPECT_EQ(nonzero, gy.size());
}

TEST(MaxPool, TiesGoToFirstRowMajorPosition) {
    const Network net({{1, 2, 2}, {MaxPool2x2{}}});
    const auto cache = net.forward_train(Tensor({1, 1, 2, 2}, {3.0, 3.0, 3.0, 3.0}));
    const Gradients g = net.backward(cache, Tensor({1, 1, 1, 1}, {1.0}));
    EXPECT_EQ(g.input, Tensor({1, 1, 2, 2}, {1.0, 0.0, 0.0, 0.0}));
}

TEST(Adam, ZeroGradientsLeaveParametersUnchanged) {
    Network net = init_network({{3}, {Dense{3, 2}}}, InitScheme::paper_normal, 5);
    const Network before = net;
    Gradients g;
    for (const auto& p : net.params()) g.params.emplace_back(p.shape());
    net.adam_step(g, AdamConfig{});
    EXPECT_TRUE(same_parameters(net, before));
    EXPECT_EQ(net.adam_steps(), 1u);
}

TEST(Adam, FirstStepHandComputed) {
    Network net({{1}, {Dense{1, 1}}});
    net.params()[0][0] = 0.5;
    Gradients g;
    g.params = {Tensor({1, 1}, {1.0}), Tensor({1}, {0.0})};
    AdamConfig cfg;
    cfg.learning_rate = 0.001;
    net.adam_step(g, cfg);
    // m_hat = 1, v_hat = 1 after bias correction
    EXPECT_DOUBLE_EQ(net.params()[0][0], 0.5 - 0.001 * 1.0 / (1.0 + 1e-8));
}

TEST(Adam, TwoStepsMatchRecurrence) {
    Network net({{1}, {Dense{1, 1}}});
    net.params()[0][0] = 0.3;
    Gradients g;
    g.params = {Tensor({1, 1}, {0.7}), Tensor({1}, {-0.2})};
    AdamConfig cfg{0.01, 0.8, 0.95, 1e-6};
    net.adam_step(g, cfg);
    net.adam_step(g, cfg);
    auto reference = [&](double p, double grad) {
        double m = 0, v = 0;
        for (int t = 1; t <= 2; ++t) {
            m = cfg.beta1 * m + (1 - cfg.beta1) * grad;
            v = cfg.beta2 * v + (1 - cfg.beta2) * grad * grad;
            const double mh = m / (1 - std::pow(cfg.beta1, t));
            const double vh = v / (1 - std::pow(cfg.beta2, t));
            p -= cfg.learning_rate * mh / (std::sqrt(vh) + cfg.epsilon);
        }
        return p;
    };
    EXPECT_NEAR(net.params()[0][0], reference(0.3, 0.7), 1e-12);
    EXPECT_NEAR(net.params()[1][0], reference(0.0, -0.2), 1e-12);
    EXPECT_EQ(net.adam_steps(), 2u);
}

TEST(Adam, ShapeMismatchRejected) {
    Network net({{2}, {Dense{2, 2}}});
    Gradients g;
    g.params = {Tensor({2, 3}), Tensor({2})};
    EXPECT_THROW(net.adam_step(g, AdamConfig{}), ShapeError);
    g.params.pop_back();
    EXPECT_THROW(net.adam_step(g, AdamConfig{}), ShapeError);
}

TEST(Training, DeterministicGivenSpecSeedAndOrder) {
    const auto arch = dense_autoencoder({6}, {4, 2});
    auto run = [&] {
        Network enc = init_network(arch.encoder, InitScheme::scaled, 1);
        Network dec = init_network(arch.decoder, InitScheme::scaled, 2);
        const Tensor x = random_batch({5, 6}, 3, 0.0, 1.0);
        for (int step = 0; step < 20; ++step) {
            const auto ce = enc.forward_train(x);
            const auto cd = dec.forward_train(ce.output());
            const auto gd = dec.backward(cd, mse_loss_grad(cd.output(), x));
            const auto ge = enc.backward(ce, gd.input, false);
            dec.adam_step(gd, AdamConfig{});
            enc.adam_step(ge, AdamConfig{});
        }
        return std::pair{enc, dec};
    };
    const auto [e1, d1] = run();
    const auto [e2, d2] = run();
    EXPECT_TRUE(same_parameters(e1, e2));
    EXPECT_TRUE(same_parameters(d1, d2));
}
