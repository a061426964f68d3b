#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "bae/boosted.hpp"
#include "bae/data.hpp"
#include "bae/persistence.hpp"

namespace bae {

/// One-class task: train/val hold only the normal class; the test set is
/// balanced across classes and labeled 0 (normal) or 1 (anomaly).
struct OneClassSplit {
    int normal_class = 0;
    Tensor train;
    Tensor val;
    Tensor test;
    std::vector<int> test_labels;    // 0 normal, 1 anomaly
    std::vector<int> test_classes;   // original class of each test sample
};

/// Normal-class samples of `train_pool` become train and val (val is
/// round(val_fraction * count)); `test_pool` is subsampled to the smallest
/// per-class count so every class appears equally often.
OneClassSplit build_one_class_split(const Dataset& train_pool, const Dataset& test_pool, int normal_class,
                                    double val_fraction, std::uint64_t seed);

/// Single labeled dataset: a stratified `test_fraction` of every class is
/// held out as the test pool, the rest is the train pool.
OneClassSplit build_one_class_split(const Dataset& dataset, int normal_class, double val_fraction,
                                    double test_fraction, std::uint64_t seed);

/// Sum of squared reconstruction errors of each sample, through every encoder.
std::vector<double> anomaly_scores(const EnsembleModel& model, const Tensor& batch);
/// Score of a single unbatched sample.
double anomaly_score(const EnsembleModel& model, const Tensor& sample);

struct ScoredSet {
    std::vector<double> scores;  // higher means more anomalous
    std::vector<int> labels;     // 0 or 1

    /// Throws std::invalid_argument unless lengths match, labels are 0/1, and both occur.
    void validate() const;
};

struct RocPoint {
    double threshold;  // predict anomaly when score >= threshold
    double fpr;
    double tpr;
};

/// Sweep from +inf (nothing flagged, (0,0)) down through every distinct score;
/// the lowest score flags everything, which is the -inf point (1,1).
std::vector<RocPoint> roc_curve(const ScoredSet& set);
/// Trapezoidal area under a curve from roc_curve.
double trapezoid_area(const std::vector<RocPoint>& curve);
/// Mann-Whitney estimate P(anomaly score > normal score) + P(tie) / 2, via tied ranks.
double auc(const ScoredSet& set);

/// Scores the test set and returns a report with the AUC for the normal class
/// and the validation reconstruction MSE.
EvalReport eval_anomaly(const EnsembleModel& model, const OneClassSplit& split, const std::string& method);

}  // namespace bae
