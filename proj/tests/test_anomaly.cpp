#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "bae/anomaly.hpp"
#include "bae/architecture.hpp"

using namespace bae;

namespace {

// O(n^2) pairwise count, ties worth one half
double pairwise_auc(const ScoredSet& s) {
    double wins = 0.0, pairs = 0.0;
    for (std::size_t i = 0; i < s.scores.size(); ++i) {
        if (s.labels[i] != 1) continue;
        for (std::size_t j = 0; j < s.scores.size(); ++j) {
            if (s.labels[j] != 0) continue;
            pairs += 1.0;
            if (s.scores[i] > s.scores[j]) wins += 1.0;
            else if (s.scores[i] == s.scores[j]) wins += 0.5;
        }
    }
    return wins / pairs;
}

ScoredSet random_set(Rng& rng, std::size_t n, std::size_t levels) {
    ScoredSet s;
    do {
        s.scores.clear();
        s.labels.clear();
        for (std::size_t i = 0; i < n; ++i) {
            // few distinct levels force ties
            s.scores.push_back(static_cast<double>(uniform_index(rng, levels)) / 3.0);
            s.labels.push_back(static_cast<int>(uniform_index(rng, 2)));
        }
    } while (std::count(s.labels.begin(), s.labels.end(), 1) == 0 || std::count(s.labels.begin(), s.labels.end(), 0) == 0);
    return s;
}

Dataset labeled_blobs(std::size_t per_class, std::size_t classes, std::uint64_t seed) {
    return synth_blobs(per_class * classes, classes, 4, 0.05, seed);
}

}  // namespace

TEST(Auc, MatchesPairwiseOracleWithTies) {
    Rng rng(31);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t n = 2 + uniform_index(rng, 199);
        const auto s = random_set(rng, n, 1 + uniform_index(rng, 30));
        EXPECT_NEAR(auc(s), pairwise_auc(s), 1e-12);
        EXPECT_NEAR(trapezoid_area(roc_curve(s)), auc(s), 1e-12);
    }
}

TEST(Auc, SimpleCases) {
    EXPECT_EQ(auc({{0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1}}), 1.0);
    EXPECT_EQ(auc({{5, 5, 5, 5, 5}, {0, 1, 0, 1, 1}}), 0.5);
    EXPECT_EQ(auc({{0.9, 0.8, 0.2, 0.1}, {0, 0, 1, 1}}), 0.0);
    EXPECT_THROW(auc({{1, 2}, {1, 1}}), std::invalid_argument);
    EXPECT_THROW(auc({{1, 2}, {0, 2}}), std::invalid_argument);
    EXPECT_THROW(auc({{1, 2, 3}, {0, 1}}), std::invalid_argument);
}

TEST(Auc, InvarianceProperties) {
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        const auto s = random_set(rng, 60, 12);
        const double a = auc(s);
        ScoredSet mono = s, swapped = s, both = s;
        for (auto& v : mono.scores) v = std::exp(3.0 * v) + 1.0;
        for (auto& l : swapped.labels) l = 1 - l;
        both.labels = swapped.labels;
        for (auto& v : both.scores) v = -v;
        EXPECT_NEAR(auc(mono), a, 1e-12);
        EXPECT_NEAR(auc(swapped), 1.0 - a, 1e-12);
        EXPECT_NEAR(auc(both), a, 1e-12);
    }
}

TEST(RocCurve, HandEnumeratedThresholds) {
    const auto c = roc_curve({{1, 2, 3, 4}, {0, 0, 1, 1}});
    const std::vector<std::pair<double, double>> want{{0, 0}, {0, 0.5}, {0, 1}, {0.5, 1}, {1, 1}};
    ASSERT_EQ(c.size(), want.size());
    for (std::size_t i = 0; i < c.size(); ++i) {
        EXPECT_EQ(c[i].fpr, want[i].first);
        EXPECT_EQ(c[i].tpr, want[i].second);
    }
    EXPECT_TRUE(std::isinf(c.front().threshold));
}

TEST(RocCurve, TiedScoresGiveDiagonalAndCurvesAreMonotone) {
    const auto tied = roc_curve({{2, 2, 2}, {0, 1, 1}});
    ASSERT_EQ(tied.size(), 2u);
    EXPECT_EQ(tied[0].fpr, 0.0);
    EXPECT_EQ(tied[0].tpr, 0.0);
    EXPECT_EQ(tied[1].fpr, 1.0);
    EXPECT_EQ(tied[1].tpr, 1.0);
    Rng rng(8);
    for (int trial = 0; trial < 50; ++trial) {
        const auto c = roc_curve(random_set(rng, 80, 20));
        EXPECT_EQ(c.front().fpr, 0.0);
        EXPECT_EQ(c.back().tpr, 1.0);
        EXPECT_EQ(c.back().fpr, 1.0);
        for (std::size_t i = 1; i < c.size(); ++i) {
            EXPECT_GE(c[i].fpr, c[i - 1].fpr);
            EXPECT_GE(c[i].tpr, c[i - 1].tpr);
        }
    }
}

TEST(OneClassSplit, TenClassTestIsBalanced) {
    const Dataset d = labeled_blobs(30, 10, 1);
    const auto s = build_one_class_split(d, 0, 0.1, 0.3, 7);
    std::map<int, std::size_t> per_class;
    for (int c : s.test_classes) ++per_class[c];
    ASSERT_EQ(per_class.size(), 10u);
    for (const auto& [c, n] : per_class) EXPECT_EQ(n, per_class.begin()->second);
    const double rate = static_cast<double>(std::count(s.test_labels.begin(), s.test_labels.end(), 1)) /
                        static_cast<double>(s.test_labels.size());
    EXPECT_DOUBLE_EQ(rate, 0.9);
}

TEST(OneClassSplit, TrainHoldsOnlyTheNormalClass) {
    Dataset pool = labeled_blobs(40, 2, 2);
    Dataset test = labeled_blobs(25, 2, 3);
    // mark samples so their origin can be traced
    for (std::size_t i = 0; i < pool.size(); ++i) pool.samples[i * 4] = static_cast<double>(pool.labels[i]) + 10.0;
    const auto s = build_one_class_split(pool, test, 1, 0.1, 4);
    EXPECT_EQ(s.val.dim(0), 4u);  // round(0.1 * 40)
    EXPECT_EQ(s.train.dim(0), 36u);
    for (std::size_t i = 0; i < s.train.dim(0); ++i) EXPECT_EQ(s.train[i * 4], 11.0);
    for (std::size_t i = 0; i < s.val.dim(0); ++i) EXPECT_EQ(s.val[i * 4], 11.0);
    EXPECT_EQ(s.test.dim(0), 50u);
    for (std::size_t i = 0; i < s.test_labels.size(); ++i) EXPECT_EQ(s.test_labels[i], s.test_classes[i] == 1 ? 0 : 1);
    const auto again = build_one_class_split(pool, test, 1, 0.1, 4);
    EXPECT_EQ(again.train, s.train);
    EXPECT_EQ(again.test_classes, s.test_classes);
}

TEST(OneClassSplit, Errors) {
    const Dataset d = labeled_blobs(20, 3, 1);
    EXPECT_THROW(build_one_class_split(d, 5, 0.1, 0.2, 1), std::invalid_argument);
    EXPECT_THROW(build_one_class_split(d, 0, 0.0, 0.2, 1), std::invalid_argument);
    EXPECT_THROW(build_one_class_split(d, 0, 1.0, 0.2, 1), std::invalid_argument);
    EXPECT_THROW(build_one_class_split(d, 0, 0.1, 1.0, 1), std::invalid_argument);
}

TEST(AnomalyScore, MatchesSummationOracleAndWeightErrors) {
    const auto arch = dense_autoencoder({5}, {3}, leaky_relu(0.1));
    auto model = make_ensemble(arch.encoder, arch.decoder, 2, InitScheme::scaled, 3);
    model.trained_stages = 2;
    Rng rng(2);
    Tensor x({7, 5});
    for (double& v : x.data()) v = uniform01(rng);
    const auto scores = anomaly_scores(model, x);
    const Tensor y = reconstruct(model, x);
    const auto errors = reconstruction_errors(model, 2, x);
    for (std::size_t i = 0; i < 7; ++i) {
        double oracle = 0.0;
        for (std::size_t f = 0; f < 5; ++f) oracle += (x[i * 5 + f] - y[i * 5 + f]) * (x[i * 5 + f] - y[i * 5 + f]);
        EXPECT_NEAR(scores[i], oracle, 1e-12);
        EXPECT_EQ(scores[i], errors[i]);
        EXPECT_EQ(anomaly_score(model, x.row(i)), scores[i]);
    }
    model.trained_stages = 1;
    EXPECT_THROW(anomaly_scores(model, x), std::logic_error);
}

TEST(AnomalyScore, PerfectReconstructionScoresZero) {
    // identity through a 1-unit dense encoder and decoder
    const NetworkSpec enc{{1}, {Dense{1, 1}}}, dec{{1}, {Dense{1, 1}}};
    auto model = make_ensemble(enc, dec, 1, InitScheme::scaled, 0);
    model.encoders[0].params()[0][0] = 1.0;
    model.decoder.params()[0][0] = 1.0;
    model.trained_stages = 1;
    EXPECT_EQ(anomaly_score(model, Tensor({1}, 0.37)), 0.0);
}

TEST(EvalAnomaly, UntrainedModelIsNearChance) {
    const auto arch = dense_autoencoder({4}, {3, 2}, leaky_relu(0.1));
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Dataset d = synth_blobs(400, 2, 4, 0.3, seed);
        // both classes drawn from one distribution
        Rng rng(seed + 100);
        for (double& v : d.samples.data()) v = uniform01(rng);
        const auto split = build_one_class_split(d, 0, 0.1, 0.5, seed);
        auto model = make_ensemble(arch.encoder, arch.decoder, 1, InitScheme::scaled, seed);
        model.trained_stages = 1;
        const auto report = eval_anomaly(model, split, "untrained");
        const double a = *report.find("auc");
        EXPECT_GE(a, 0.3) << seed;
        EXPECT_LE(a, 0.7) << seed;
        ASSERT_EQ(report.metrics.front().class_label, 0);
    }
}

TEST(EvalAnomaly, ReportRoundTripsThroughJson) {
    const Dataset d = labeled_blobs(30, 3, 4);
    const auto split = build_one_class_split(d, 2, 0.1, 0.4, 4);
    const auto arch = dense_autoencoder({4}, {2});
    auto model = make_ensemble(arch.encoder, arch.decoder, 1, InitScheme::scaled, 1);
    model.trained_stages = 1;
    const auto report = eval_anomaly(model, split, "boosted-ae");
    EXPECT_EQ(report_from_json(to_json(report)), report);
    EXPECT_TRUE(report.find("val_mse").has_value());
}
