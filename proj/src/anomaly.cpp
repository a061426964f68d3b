#include "bae/anomaly.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

namespace bae {
namespace {

void check_fraction(double f, const char* what) {
    if (!(f > 0.0 && f < 1.0)) throw std::invalid_argument(std::string(what) + " must lie in (0,1)");
}

}  // namespace

OneClassSplit build_one_class_split(const Dataset& train_pool, const Dataset& test_pool, int normal_class,
                                    double val_fraction, std::uint64_t seed) {
    check_fraction(val_fraction, "val_fraction");
    if (!train_pool.has_labels() || !test_pool.has_labels()) throw std::invalid_argument("one-class split needs labels");
    auto normals = train_pool.indices_of(normal_class);
    if (normals.empty()) {
        throw std::invalid_argument("normal class " + std::to_string(normal_class) + " is absent from the training data");
    }
    Rng rng(seed);
    shuffle(normals.begin(), normals.end(), rng);
    const auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(normals.size())));
    if (n_val >= normals.size()) throw std::invalid_argument("validation holdout leaves no normal training samples");
    std::vector<std::size_t> val(normals.begin(), normals.begin() + static_cast<std::ptrdiff_t>(n_val));
    std::vector<std::size_t> train(normals.begin() + static_cast<std::ptrdiff_t>(n_val), normals.end());
    std::sort(val.begin(), val.end());
    std::sort(train.begin(), train.end());

    const std::set<int> classes(test_pool.labels.begin(), test_pool.labels.end());
    if (!classes.count(normal_class)) {
        throw std::invalid_argument("normal class " + std::to_string(normal_class) + " is absent from the test data");
    }
    if (classes.size() < 2) throw std::invalid_argument("test data needs at least one anomaly class");
    std::size_t per_class = test_pool.size();
    for (int c : classes) per_class = std::min(per_class, test_pool.indices_of(c).size());
    std::vector<std::size_t> test;
    for (int c : classes) {
        auto idx = test_pool.indices_of(c);
        shuffle(idx.begin(), idx.end(), rng);
        test.insert(test.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(per_class));
    }
    std::sort(test.begin(), test.end());

    OneClassSplit split;
    split.normal_class = normal_class;
    split.train = train_pool.samples.gather_rows(train);
    split.val = train_pool.samples.gather_rows(val);
    split.test = test_pool.samples.gather_rows(test);
    for (auto i : test) {
        split.test_classes.push_back(test_pool.labels[i]);
        split.test_labels.push_back(test_pool.labels[i] == normal_class ? 0 : 1);
    }
    return split;
}

OneClassSplit build_one_class_split(const Dataset& dataset, int normal_class, double val_fraction,
                                    double test_fraction, std::uint64_t seed) {
    check_fraction(test_fraction, "test_fraction");
    const SplitResult parts = split(dataset, {1.0 - test_fraction, 0.0, test_fraction}, derive_seed(seed, 1));
    return build_one_class_split(parts.train, parts.test, normal_class, val_fraction, seed);
}

std::vector<double> anomaly_scores(const EnsembleModel& model, const Tensor& batch) {
    if (model.trained_stages != model.num_encoders()) {
        throw std::logic_error("anomaly scoring needs a fully trained model");
    }
    return reconstruction_errors(model, model.num_encoders(), batch);
}

double anomaly_score(const EnsembleModel& model, const Tensor& sample) {
    return anomaly_scores(model, as_batch(sample)).front();
}

void ScoredSet::validate() const {
    if (scores.size() != labels.size()) throw std::invalid_argument("scores and labels differ in length");
    bool pos = false, neg = false;
    for (int l : labels) {
        if (l != 0 && l != 1) throw std::invalid_argument("labels must be 0 or 1");
        (l ? pos : neg) = true;
    }
    if (!pos || !neg) throw std::invalid_argument("AUC needs both normal and anomaly labels");
    for (double s : scores)
        if (std::isnan(s)) throw std::invalid_argument("scores contain NaN");
}

std::vector<RocPoint> roc_curve(const ScoredSet& set) {
    set.validate();
    std::vector<std::size_t> order(set.scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return set.scores[a] > set.scores[b]; });
    const double n_pos = static_cast<double>(std::count(set.labels.begin(), set.labels.end(), 1));
    const double n_neg = static_cast<double>(set.labels.size()) - n_pos;
    std::vector<RocPoint> curve{{std::numeric_limits<double>::infinity(), 0.0, 0.0}};
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < order.size();) {
        const double t = set.scores[order[i]];
        for (; i < order.size() && set.scores[order[i]] == t; ++i) (set.labels[order[i]] ? tp : fp) += 1;
        curve.push_back({t, static_cast<double>(fp) / n_neg, static_cast<double>(tp) / n_pos});
    }
    return curve;
}

double trapezoid_area(const std::vector<RocPoint>& curve) {
    double area = 0.0;
    for (std::size_t i = 1; i < curve.size(); ++i)
        area += (curve[i].fpr - curve[i - 1].fpr) * (curve[i].tpr + curve[i - 1].tpr) / 2.0;
    return area;
}

double auc(const ScoredSet& set) {
    set.validate();
    const std::size_t n = set.scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return set.scores[a] < set.scores[b]; });
    // tied scores share the mean of their 1-based ranks
    double rank_sum = 0.0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && set.scores[order[j]] == set.scores[order[i]]) ++j;
        const double mean_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t k = i; k < j; ++k)
            if (set.labels[order[k]]) rank_sum += mean_rank;
        i = j;
    }
    const double n_pos = static_cast<double>(std::count(set.labels.begin(), set.labels.end(), 1));
    const double n_neg = static_cast<double>(n) - n_pos;
    return (rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

EvalReport eval_anomaly(const EnsembleModel& model, const OneClassSplit& split, const std::string& method) {
    const ScoredSet scored{anomaly_scores(model, split.test), split.test_labels};
    EvalReport report;
    report.add({"auc", auc(scored), method, std::nullopt, split.normal_class});
    if (split.val.rank() > 0 && split.val.dim(0) > 0) {
        report.add({"val_mse", reconstruction_mse(model, model.num_encoders(), split.val), method, std::nullopt,
                    split.normal_class});
    }
    return report;
}

}  // namespace bae
