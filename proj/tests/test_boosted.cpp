#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bae/architecture.hpp"
#include "bae/boosted.hpp"
#include "bae/data.hpp"

using namespace bae;

namespace {

Tensor uniform_data(std::size_t n, std::size_t dim, std::uint64_t seed) {
    Rng rng(seed);
    Tensor t({n, dim});
    for (double& v : t.data()) v = uniform01(rng);
    return t;
}

// points near a 1-D line in [0,1]^dim
Tensor line_data(std::size_t n, std::size_t dim, std::uint64_t seed) {
    Rng rng(seed);
    Tensor t({n, dim});
    for (std::size_t i = 0; i < n; ++i) {
        const double s = uniform01(rng);
        for (std::size_t f = 0; f < dim; ++f) {
            const double dir = 0.2 + 0.6 * static_cast<double>(f) / static_cast<double>(dim);
            t[i * dim + f] = std::clamp(0.1 + dir * s + 0.01 * (uniform01(rng) - 0.5), 0.0, 1.0);
        }
    }
    return t;
}

Architecture small_dense(std::size_t dim = 6, std::size_t latent = 2) {
    return dense_autoencoder({dim}, {4, latent}, leaky_relu(0.1));
}

BoostConfig small_config(std::size_t M, std::uint64_t seed = 5) {
    BoostConfig c;
    c.num_encoders = M;
    c.iterations_per_stage = 50;
    c.batch_size = 16;
    c.adam.learning_rate = 1e-2;
    c.init = InitScheme::scaled;
    c.seed = seed;
    return c;
}

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

}  // namespace

TEST(SampleWeights, UniformInitialization) {
    const auto w4 = SampleWeights::uniform(4);
    for (double v : w4.values()) EXPECT_EQ(v, 0.25);
    EXPECT_EQ(SampleWeights::uniform(1).values(), std::vector<double>{1.0});
    EXPECT_NEAR(sum(SampleWeights::uniform(7).values()), 1.0, 1e-12);
    EXPECT_THROW(SampleWeights::uniform(0), std::invalid_argument);
}

TEST(SampleWeights, FromErrorsNormalizes) {
    const std::vector<double> e{1.0, 3.0};
    EXPECT_EQ(SampleWeights::from_errors(e).values(), (std::vector<double>{0.25, 0.75}));
    const std::vector<double> equal{2.0, 2.0, 2.0, 2.0};
    const auto we = SampleWeights::from_errors(equal);
    for (double v : we.values()) EXPECT_EQ(v, 0.25);
    const std::vector<double> zero{0.0, 0.0, 0.0};
    const auto wz = SampleWeights::from_errors(zero);
    for (double v : wz.values()) EXPECT_DOUBLE_EQ(v, 1.0 / 3.0);
    EXPECT_THROW(SampleWeights::from_values(zero), std::invalid_argument);
    const std::vector<double> neg{1.0, -1.0};
    EXPECT_THROW(SampleWeights::from_errors(neg), std::invalid_argument);
}

TEST(SampleBatch, DegenerateDistribution) {
    const std::vector<double> v{1.0, 0.0, 0.0};
    Rng rng(1);
    for (auto i : sample_batch(SampleWeights::from_values(v), 1000, rng)) EXPECT_EQ(i, 0u);
    const std::vector<double> tail{0.0, 0.0, 1.0};
    for (auto i : sample_batch(SampleWeights::from_values(tail), 1000, rng)) EXPECT_EQ(i, 2u);
}

TEST(SampleBatch, UniformFrequenciesWithinThreeSigma) {
    Rng rng(11);
    const std::size_t Q = 100000;
    std::vector<std::size_t> counts(4);
    for (auto i : sample_batch(SampleWeights::uniform(4), Q, rng)) ++counts.at(i);
    const double sd = std::sqrt(Q * 0.25 * 0.75);
    for (auto c : counts) EXPECT_LE(std::abs(static_cast<double>(c) - Q / 4.0), 3 * sd);
}

TEST(SampleBatch, SkewedFrequenciesWithinThreeSigma) {
    const std::vector<double> v{0.7, 0.3};
    Rng rng(12);
    const std::size_t Q = 100000;
    const auto idx = sample_batch(SampleWeights::from_values(v), Q, rng);
    const double zeros = static_cast<double>(std::count(idx.begin(), idx.end(), 0u));
    EXPECT_LE(std::abs(zeros - 0.7 * Q), 3 * std::sqrt(Q * 0.7 * 0.3));
}

TEST(SampleBatch, DeterministicGivenRngState) {
    const auto w = SampleWeights::uniform(10);
    Rng a(3), b(3);
    EXPECT_EQ(sample_batch(w, 100, a), sample_batch(w, 100, b));
}

TEST(AverageEncoding, SingleTermIsFirstEncoder) {
    const auto arch = small_dense();
    const auto model = make_ensemble(arch.encoder, arch.decoder, 3, InitScheme::scaled, 1);
    const Tensor x = uniform_data(5, 6, 2);
    EXPECT_EQ(average_encoding(model, 1, x), model.encoders[0].forward(x));
    EXPECT_THROW(average_encoding(model, 0, x), std::out_of_range);
    EXPECT_THROW(average_encoding(model, 4, x), std::out_of_range);
}

TEST(AverageEncoding, IdenticalEncodersGiveSingleOutput) {
    const auto arch = small_dense();
    auto model = make_ensemble(arch.encoder, arch.decoder, 3, InitScheme::scaled, 1);
    model.encoders[1] = model.encoders[0];
    model.encoders[2] = model.encoders[0];
    const Tensor x = uniform_data(5, 6, 2);
    const Tensor single = model.encoders[0].forward(x);
    const Tensor avg = average_encoding(model, 3, x);
    for (std::size_t i = 0; i < avg.size(); ++i) EXPECT_NEAR(avg[i], single[i], 1e-15);
}

TEST(AverageEncoding, HandBuiltMeanOfTwoAndFour) {
    const NetworkSpec enc{{1}, {Dense{1, 1}}};
    const NetworkSpec dec{{1}, {Dense{1, 1}}};
    auto model = make_ensemble(enc, dec, 2, InitScheme::scaled, 0);
    for (auto* e : {&model.encoders[0], &model.encoders[1]}) e->params()[0].fill(0.0);
    model.encoders[0].params()[1][0] = 2.0;
    model.encoders[1].params()[1][0] = 4.0;
    model.trained_stages = 2;
    const Tensor x({1, 1}, 0.5);
    EXPECT_EQ(average_encoding(model, 2, x)[0], 3.0);
    EXPECT_EQ(encode(model, x)[0], 3.0);
}

TEST(StageGradients, EncoderGradientMatchesFiniteDifferences) {
    // the 1/m factor through the mean must show up in encoder m's gradient
    const auto arch = dense_autoencoder({4}, {3}, sigmoid());
    auto model = make_ensemble(arch.encoder, arch.decoder, 3, InitScheme::scaled, 21);
    const Tensor x = uniform_data(5, 4, 22);
    for (std::size_t m = 1; m <= 3; ++m) {
        const StageGradients g = stage_gradients(model, m, x);
        Network& enc = model.encoders[m - 1];
        double worst = 0.0;
        for (std::size_t p = 0; p < enc.params().size(); ++p) {
            for (std::size_t i = 0; i < enc.params()[p].size(); ++i) {
                const double orig = enc.params()[p][i];
                const double h = 1e-5;
                enc.params()[p][i] = orig + h;
                enc.touch();
                const double up = stage_gradients(model, m, x).loss;
                enc.params()[p][i] = orig - h;
                enc.touch();
                const double down = stage_gradients(model, m, x).loss;
                enc.params()[p][i] = orig;
                enc.touch();
                const double num = (up - down) / (2 * h);
                const double ana = g.encoder.params[p][i];
                worst = std::max(worst, std::abs(num - ana) / std::max({std::abs(num), std::abs(ana), 1e-6}));
            }
        }
        EXPECT_LT(worst, 1e-5) << "m=" << m;
    }
}

TEST(StageGradients, EncoderGradientIsScaledDecoderInputGradient) {
    const auto arch = dense_autoencoder({4}, {3}, relu());
    const auto model = make_ensemble(arch.encoder, arch.decoder, 2, InitScheme::scaled, 4);
    const Tensor x = uniform_data(6, 4, 5);
    const StageGradients g = stage_gradients(model, 2, x);
    Tensor scaled = g.decoder.input;
    for (double& v : scaled.data()) v *= 0.5;
    const auto cache = model.encoders[1].forward_train(x);
    const Gradients direct = model.encoders[1].backward(cache, scaled, false);
    ASSERT_EQ(direct.params.size(), g.encoder.params.size());
    for (std::size_t p = 0; p < direct.params.size(); ++p) EXPECT_EQ(direct.params[p], g.encoder.params[p]);
}

TEST(TrainStage, FreezesEarlierEncodersAndKeepsDecoderCounting) {
    const auto arch = small_dense();
    const Tensor data = line_data(500, 6, 1);
    const auto cfg = small_config(3);
    auto model = make_ensemble(arch.encoder, arch.decoder, 3, cfg.init, cfg.seed);
    Rng rng(9);
    auto w = SampleWeights::uniform(data.dim(0));
    std::uint64_t last_steps = model.decoder.adam_steps();
    for (std::size_t m = 1; m <= 3; ++m) {
        const std::vector<Network> before(model.encoders.begin(), model.encoders.end());
        const auto trace = train_stage(model, m, data, w, cfg, rng);
        EXPECT_EQ(trace.rows.size(), cfg.iterations_per_stage);
        for (std::size_t j = 0; j + 1 < m; ++j) EXPECT_TRUE(same_parameters(model.encoders[j], before[j])) << j;
        EXPECT_FALSE(same_parameters(model.encoders[m - 1], before[m - 1]));
        for (std::size_t j = m; j < 3; ++j) EXPECT_TRUE(same_parameters(model.encoders[j], before[j]));
        EXPECT_EQ(model.decoder.adam_steps(), last_steps + cfg.iterations_per_stage);
        last_steps = model.decoder.adam_steps();
        w = update_sample_weights(model, m, data);
    }
    EXPECT_EQ(model.trained_stages, 3u);
}

TEST(TrainStage, StagesMustRunInOrder) {
    const auto arch = small_dense();
    const Tensor data = line_data(50, 6, 1);
    auto model = make_ensemble(arch.encoder, arch.decoder, 3, InitScheme::scaled, 1);
    Rng rng(1);
    const auto w = SampleWeights::uniform(50);
    EXPECT_THROW(train_stage(model, 2, data, w, small_config(3), rng), std::logic_error);
    train_stage(model, 1, data, w, small_config(3), rng);
    EXPECT_THROW(train_stage(model, 1, data, w, small_config(3), rng), std::logic_error);
    EXPECT_THROW(train_stage(model, 2, data, SampleWeights::uniform(49), small_config(3), rng), std::invalid_argument);
    EXPECT_THROW(update_sample_weights(model, 2, data), std::logic_error);
}

TEST(UpdateWeights, OrderingMatchesBruteForceErrors) {
    const auto arch = small_dense();
    const Tensor data = uniform_data(40, 6, 8);
    auto model = make_ensemble(arch.encoder, arch.decoder, 2, InitScheme::scaled, 3);
    model.trained_stages = 2;
    const auto w = update_sample_weights(model, 2, data);
    EXPECT_NEAR(sum(w.values()), 1.0, 1e-12);
    std::vector<double> oracle(40);
    for (std::size_t i = 0; i < 40; ++i) {
        const Tensor x = data.slice_rows(i, i + 1);
        const Tensor h0 = model.encoders[0].forward(x), h1 = model.encoders[1].forward(x);
        Tensor avg(h0.shape());
        for (std::size_t k = 0; k < avg.size(); ++k) avg[k] = (h0[k] + h1[k]) / 2.0;
        const Tensor y = model.decoder.forward(avg);
        for (std::size_t k = 0; k < y.size(); ++k) oracle[i] += (x[k] - y[k]) * (x[k] - y[k]);
    }
    const auto errors = reconstruction_errors(model, 2, data);
    for (std::size_t i = 0; i < 40; ++i) {
        EXPECT_NEAR(errors[i], oracle[i], 1e-12);
        EXPECT_GE(w[i], 0.0);
        for (std::size_t j = 0; j < 40; ++j)
            if (oracle[i] > oracle[j] + 1e-9) EXPECT_GT(w[i], w[j]);
    }
}

TEST(TrainBoosted, RunsAllStagesDeterministically) {
    const auto arch = small_dense();
    const Tensor data = line_data(500, 6, 2), val = line_data(100, 6, 3);
    std::vector<std::size_t> seen;
    const auto observer = [&](std::size_t m, const EnsembleModel&, const SampleWeights& w) {
        seen.push_back(m);
        EXPECT_NEAR(sum(w.values()), 1.0, 1e-12);
    };
    const auto a = train_boosted(arch.encoder, arch.decoder, data, &val, small_config(3), observer);
    const auto b = train_boosted(arch.encoder, arch.decoder, data, &val, small_config(3));
    EXPECT_EQ(seen, (std::vector<std::size_t>{1, 2, 3}));
    EXPECT_EQ(a.model.trained_stages, 3u);
    EXPECT_EQ(a.trace, b.trace);
    for (std::size_t j = 0; j < 3; ++j) EXPECT_TRUE(same_parameters(a.model.encoders[j], b.model.encoders[j]));
    EXPECT_TRUE(same_parameters(a.model.decoder, b.model.decoder));
    // validation recorded at each stage end
    std::size_t with_val = 0;
    for (const auto& r : a.trace.rows) with_val += r.val_mse.has_value();
    EXPECT_EQ(with_val, 3u);
    EXPECT_TRUE(a.trace.rows.back().val_mse.has_value());
}

TEST(TrainBoosted, PeriodicValidation) {
    const auto arch = small_dense();
    const Tensor data = line_data(100, 6, 2), val = line_data(20, 6, 3);
    auto cfg = small_config(2);
    cfg.val_every = 10;
    const auto r = train_boosted(arch.encoder, arch.decoder, data, &val, cfg);
    std::size_t with_val = 0;
    for (const auto& row : r.trace.rows) with_val += row.val_mse.has_value();
    EXPECT_EQ(with_val, 10u);
}

TEST(TrainBoosted, SingleEncoderEqualsOneUniformStage) {
    const auto arch = small_dense();
    const Tensor data = line_data(200, 6, 2);
    const auto cfg = small_config(1, 77);
    const auto boosted = train_boosted(arch.encoder, arch.decoder, data, nullptr, cfg);
    // manual reproduction: same init, same training stream
    auto model = make_ensemble(arch.encoder, arch.decoder, 1, cfg.init, cfg.seed);
    Rng rng(derive_seed(cfg.seed, 0xB0057ED0ULL));
    const auto trace = train_stage(model, 1, data, SampleWeights::uniform(200), cfg, rng);
    EXPECT_EQ(trace, boosted.trace);
    EXPECT_TRUE(same_parameters(model.encoders[0], boosted.model.encoders[0]));
}

TEST(TrainBoosted, LatentDimensionIndependentOfM) {
    const auto arch = small_dense(6, 3);
    const Tensor data = line_data(60, 6, 4);
    for (std::size_t M : {1u, 3u, 5u}) {
        auto cfg = small_config(M);
        cfg.iterations_per_stage = 2;
        const auto r = train_boosted(arch.encoder, arch.decoder, data, nullptr, cfg);
        EXPECT_EQ(encode(r.model, data).shape(), (Shape{60, 3})) << "M=" << M;
        EXPECT_EQ(reconstruct(r.model, data).shape(), data.shape());
    }
}

TEST(TrainBoosted, ImprovesOverUntrainedAndLaterStagesDoNoWorse) {
    const auto arch = small_dense(6, 2);
    const Tensor data = line_data(500, 6, 5), val = line_data(200, 6, 6);
    auto cfg = small_config(3, 8);
    cfg.iterations_per_stage = 400;
    const auto untrained = make_ensemble(arch.encoder, arch.decoder, 1, cfg.init, cfg.seed);
    const double before = reconstruction_mse(untrained, 1, data);
    const auto r = train_boosted(arch.encoder, arch.decoder, data, &val, cfg);
    const double after = reconstruction_mse(r.model, 3, data);
    EXPECT_LT(after * 10.0, before);
    std::vector<double> stage_end;
    for (const auto& row : r.trace.rows)
        if (row.val_mse) stage_end.push_back(*row.val_mse);
    ASSERT_EQ(stage_end.size(), 3u);
    EXPECT_LE(stage_end.back(), stage_end.front());
}

TEST(Encode, RequiresFullyTrainedModel) {
    const auto arch = small_dense();
    auto model = make_ensemble(arch.encoder, arch.decoder, 2, InitScheme::scaled, 1);
    const Tensor x = uniform_data(3, 6, 1);
    EXPECT_THROW(encode(model, x), std::logic_error);
    model.trained_stages = 1;
    EXPECT_THROW(reconstruct(model, x), std::logic_error);
    model.trained_stages = 2;
    const Tensor y = reconstruct(model, x);
    EXPECT_EQ(y, model.decoder.forward(encode(model, x)));
    EXPECT_THROW(reconstruct(model, uniform_data(3, 5, 1)), ShapeError);
}

TEST(Encode, PresetReconstructionShapes) {
    for (const std::string name : {"cifar-conv-paper", "fmnist-conv-paper"}) {
        const auto arch = preset_architecture(name);
        auto model = make_ensemble(arch.encoder, arch.decoder, 2, InitScheme::scaled, 1);
        model.trained_stages = 2;
        Shape s{2};
        s.insert(s.end(), arch.encoder.input_shape.begin(), arch.encoder.input_shape.end());
        EXPECT_EQ(reconstruct(model, Tensor(s, 0.5)).shape(), s) << name;
    }
}

TEST(TrainTrace, KeysMustIncrease) {
    TrainTrace t;
    t.append({1, 1, 0.5, std::nullopt});
    t.append({1, 2, 0.4, 0.3});
    t.append({2, 1, 0.3, std::nullopt});
    EXPECT_THROW(t.append({2, 1, 0.3, std::nullopt}), std::logic_error);
    EXPECT_THROW(t.append({1, 9, 0.3, std::nullopt}), std::logic_error);
    EXPECT_EQ(t.final_val_mse(), 0.3);
}

TEST(BoostConfig, RejectsZeroCounts) {
    for (auto mutate : {+[](BoostConfig& c) { c.num_encoders = 0; }, +[](BoostConfig& c) { c.iterations_per_stage = 0; },
                        +[](BoostConfig& c) { c.batch_size = 0; }, +[](BoostConfig& c) { c.adam.learning_rate = -1; }}) {
        BoostConfig c;
        mutate(c);
        EXPECT_THROW(c.validate(), std::invalid_argument);
    }
}

TEST(SingleAe, ZeroEpochsLeavesInitialization) {
    const auto arch = small_dense();
    const Tensor data = line_data(50, 6, 1);
    SingleConfig cfg;
    cfg.epochs = 0;
    cfg.seed = 4;
    cfg.init = InitScheme::scaled;
    const auto r = train_single_ae(arch.encoder, arch.decoder, data, nullptr, cfg);
    const auto init = make_ensemble(arch.encoder, arch.decoder, 1, cfg.init, cfg.seed);
    EXPECT_TRUE(same_parameters(r.model.encoders[0], init.encoders[0]));
    EXPECT_TRUE(same_parameters(r.model.decoder, init.decoder));
    EXPECT_TRUE(r.trace.rows.empty());
}

TEST(SingleAe, DeterministicAndValidatesEachEpoch) {
    const auto arch = small_dense();
    const Tensor data = line_data(100, 6, 1), val = line_data(30, 6, 2);
    SingleConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 16;
    cfg.seed = 6;
    cfg.init = InitScheme::scaled;
    const auto a = train_single_ae(arch.encoder, arch.decoder, data, &val, cfg);
    const auto b = train_single_ae(arch.encoder, arch.decoder, data, &val, cfg);
    EXPECT_EQ(a.trace, b.trace);
    EXPECT_TRUE(same_parameters(a.model.decoder, b.model.decoder));
    EXPECT_EQ(a.trace.rows.size(), 3u * 7u);  // ceil(100/16) steps per epoch
    std::size_t with_val = 0;
    for (const auto& r : a.trace.rows) with_val += r.val_mse.has_value();
    EXPECT_EQ(with_val, 3u);
}

TEST(SingleAe, CloseToBoostedWithOneEncoderAtMatchedPresentations) {
    // I*Q = epochs*n: 40 epochs of 200 samples vs 800 iterations of 10
    const auto arch = small_dense(6, 2);
    const Tensor data = line_data(200, 6, 11), val = line_data(200, 6, 12);
    SingleConfig sc;
    sc.epochs = 40;
    sc.batch_size = 10;
    sc.adam.learning_rate = 1e-2;
    sc.init = InitScheme::scaled;
    sc.seed = 3;
    auto bc = small_config(1, 3);
    bc.iterations_per_stage = 800;
    bc.batch_size = 10;
    const auto single = train_single_ae(arch.encoder, arch.decoder, data, &val, sc);
    const auto boosted = train_boosted(arch.encoder, arch.decoder, data, &val, bc);
    const double s = *single.trace.final_val_mse(), b = *boosted.trace.final_val_mse();
    EXPECT_LE(std::abs(s - b), 0.2 * std::max(s, b)) << "single " << s << " boosted " << b;
}
