#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bae/boosted.hpp"
#include "bae/persistence.hpp"
#include "bae/tensor.hpp"

namespace bae {

enum class KMeansInit { kmeanspp, random };

std::string to_string(KMeansInit init);
KMeansInit parse_kmeans_init(const std::string& name);

struct KMeansConfig {
    std::size_t k = 2;
    KMeansInit init = KMeansInit::kmeanspp;
    std::size_t restarts = 10;
    std::size_t max_iter = 300;
    double tol = 1e-8;  // stop once no centroid moves farther than this
    std::uint64_t seed = 0;

    void validate() const;
};

struct KMeansResult {
    Tensor centroids;                    // [k, dim]
    std::vector<int> assignments;        // nearest centroid of each point
    double inertia = 0.0;                // sum of squared distances to the assigned centroid
    std::size_t iterations = 0;          // assignment steps taken
    std::vector<double> inertia_history; // inertia after each assignment step
    std::size_t restart = 0;             // which restart produced this result
};

/// One Lloyd run from one initialization; `points` is [n, dim].
KMeansResult kmeans_once(const Tensor& points, std::size_t k, KMeansInit init, std::uint64_t seed,
                         std::size_t max_iter, double tol);
/// Best-inertia run over config.restarts independent seeds; ties keep the earliest restart.
KMeansResult kmeans(const Tensor& points, const KMeansConfig& config);

/// 2 I(Y;C) / (H(Y) + H(C)) with natural logs. When either entropy is zero the
/// result is 1 if both labelings are a single cluster and 0 otherwise.
double nmi(std::span<const int> y, std::span<const int> c);

/// Either a component count or a minimum explained-variance fraction.
struct PcaTarget {
    std::optional<std::size_t> dimensions;
    std::optional<double> variance;

    static PcaTarget dims(std::size_t d) { return {d, std::nullopt}; }
    static PcaTarget variance_fraction(double v) { return {std::nullopt, v}; }
};

struct PcaResult {
    std::vector<double> mean;             // per-feature mean
    Tensor basis;                         // [dim, components], orthonormal columns
    std::vector<double> explained_ratio;  // every component, nonincreasing, sums to 1
    Tensor projected;                     // [n, components]

    std::size_t components() const { return basis.rank() == 2 ? basis.dim(1) : 0; }
    /// Projects new rows with the fitted mean and basis.
    Tensor transform(const Tensor& points) const;
};

/// Eigendecomposition of the sample covariance; `points` is [n, dim]. Each
/// component's sign is fixed so its largest-magnitude entry is positive.
PcaResult pca_reduce(const Tensor& points, const PcaTarget& target);

/// [n, ...] -> [n, prod(...)].
Tensor flatten_rows(const Tensor& batch);

/// Named feature map applied before K-means.
struct Reducer {
    std::string name;
    std::function<Tensor(const Tensor&)> transform;
};

Reducer identity_reducer(std::string name = "raw");
Reducer pca_reducer(const PcaTarget& target, std::string name = "pca");
/// Mean latent of a fully trained ensemble; the model is shared, not copied.
Reducer ensemble_reducer(std::shared_ptr<const EnsembleModel> model, std::string name);

/// For every reducer: embed `data`, run kmeans once per seed, and record
/// nmi_best (the lowest-inertia run), nmi_mean and nmi_std (sample std).
/// The K-means protocol is written into report.config["clustering"].
EvalReport eval_clustering(const std::vector<Reducer>& reducers, const Tensor& data, std::span<const int> labels,
                           const KMeansConfig& base, std::span<const std::uint64_t> seeds);

}  // namespace bae
