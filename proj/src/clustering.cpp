#include "bae/clustering.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

#include "bae/kernels.hpp"
#include "bae/rng.hpp"

namespace bae {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void check_points(const Tensor& points) {
    if (points.rank() != 2 || points.dim(0) == 0 || points.dim(1) == 0) {
        throw std::invalid_argument("expected a nonempty [n, dim] matrix, got " + to_string(points.shape()));
    }
}

std::size_t count_distinct_rows(const Tensor& points) {
    const std::size_t n = points.dim(0), d = points.dim(1);
    std::vector<std::vector<double>> rows(n);
    for (std::size_t i = 0; i < n; ++i) rows[i].assign(points.data().begin() + i * d, points.data().begin() + (i + 1) * d);
    std::sort(rows.begin(), rows.end());
    return static_cast<std::size_t>(std::unique(rows.begin(), rows.end()) - rows.begin());
}

double sq_dist(const double* a, const double* b, std::size_t d) {
    double s = 0.0;
    for (std::size_t f = 0; f < d; ++f) s += (a[f] - b[f]) * (a[f] - b[f]);
    return s;
}

Tensor init_centroids(const Tensor& points, std::size_t k, KMeansInit init, Rng& rng) {
    const std::size_t n = points.dim(0), d = points.dim(1);
    const double* p = points.data().data();
    Tensor c({k, d});
    double* cd = c.data().data();
    if (init == KMeansInit::random) {
        // first k pairwise-distinct points of a random permutation
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        shuffle(order.begin(), order.end(), rng);
        std::size_t chosen = 0;
        for (std::size_t i = 0; i < n && chosen < k; ++i) {
            const double* row = p + order[i] * d;
            bool dup = false;
            for (std::size_t j = 0; j < chosen && !dup; ++j) dup = sq_dist(row, cd + j * d, d) == 0.0;
            if (!dup) std::copy(row, row + d, cd + chosen++ * d);
        }
        return c;
    }
    std::vector<double> best(n, std::numeric_limits<double>::infinity());
    std::size_t pick = uniform_index(rng, n);
    for (std::size_t j = 0; j < k; ++j) {
        std::copy(p + pick * d, p + (pick + 1) * d, cd + j * d);
        if (j + 1 == k) break;
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            best[i] = std::min(best[i], sq_dist(p + i * d, cd + j * d, d));
            total += best[i];
        }
        // D^2 sampling; total > 0 while fewer than the distinct-point count are chosen
        const double u = uniform01(rng) * total;
        double acc = 0.0;
        pick = n;
        for (std::size_t i = 0; i < n; ++i) {
            acc += best[i];
            if (best[i] > 0.0 && u < acc) {
                pick = i;
                break;
            }
        }
        if (pick == n)
            for (std::size_t i = n; i-- > 0;)
                if (best[i] > 0.0) {
                    pick = i;
                    break;
                }
    }
    return c;
}

// Means of the assigned points; an empty cluster takes the point of the
// largest cluster that lies farthest from its centroid.
Tensor update_centroids(const Tensor& points, std::vector<int>& assign, const std::vector<double>& dist, std::size_t k) {
    const std::size_t n = points.dim(0), d = points.dim(1);
    const double* p = points.data().data();
    std::vector<double> moved(dist);
    for (;;) {
        std::vector<std::size_t> counts(k);
        for (int a : assign) ++counts[static_cast<std::size_t>(a)];
        const auto empty = std::find(counts.begin(), counts.end(), std::size_t{0});
        if (empty == counts.end()) break;
        const int largest = static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
        std::size_t far = n;
        for (std::size_t i = 0; i < n; ++i)
            if (assign[i] == largest && (far == n || moved[i] > moved[far])) far = i;
        assign[far] = static_cast<int>(empty - counts.begin());
        moved[far] = 0.0;
    }
    Tensor c({k, d});
    std::vector<std::size_t> counts(k);
    for (std::size_t i = 0; i < n; ++i) {
        const auto a = static_cast<std::size_t>(assign[i]);
        ++counts[a];
        for (std::size_t f = 0; f < d; ++f) c[a * d + f] += p[i * d + f];
    }
    for (std::size_t j = 0; j < k; ++j)
        for (std::size_t f = 0; f < d; ++f) c[j * d + f] /= static_cast<double>(counts[j]);
    return c;
}

double entropy(const std::map<int, std::size_t>& counts, double n) {
    double h = 0.0;
    for (const auto& [label, c] : counts) {
        const double p = static_cast<double>(c) / n;
        h -= p * std::log(p);
    }
    return h;
}

}  // namespace

std::string to_string(KMeansInit init) { return init == KMeansInit::kmeanspp ? "kmeans++" : "random"; }

KMeansInit parse_kmeans_init(const std::string& name) {
    if (name == "kmeans++" || name == "kmeanspp") return KMeansInit::kmeanspp;
    if (name == "random") return KMeansInit::random;
    throw std::invalid_argument("unknown k-means init '" + name + "' (expected kmeans++ or random)");
}

void KMeansConfig::validate() const {
    if (k < 1) throw std::invalid_argument("kmeans: k must be >= 1");
    if (restarts < 1) throw std::invalid_argument("kmeans: restarts must be >= 1");
    if (max_iter < 1) throw std::invalid_argument("kmeans: max_iter must be >= 1");
    if (!(tol >= 0.0)) throw std::invalid_argument("kmeans: tol must be >= 0");
}

KMeansResult kmeans_once(const Tensor& points, std::size_t k, KMeansInit init, std::uint64_t seed, std::size_t max_iter,
                         double tol) {
    check_points(points);
    if (k < 1) throw std::invalid_argument("kmeans: k must be >= 1");
    const std::size_t distinct = count_distinct_rows(points);
    if (k > distinct) {
        throw std::invalid_argument("kmeans: k=" + std::to_string(k) + " exceeds the " + std::to_string(distinct) +
                                    " distinct points");
    }
    const std::size_t n = points.dim(0), d = points.dim(1);
    Rng rng(seed);
    KMeansResult r;
    r.centroids = init_centroids(points, k, init, rng);
    r.assignments.assign(n, -1);
    std::vector<int> assign(n);
    std::vector<double> dist(n);
    auto assign_step = [&] {
        kernels::parallel::nearest_centroid(n, k, d, points.data(), r.centroids.data(), assign, dist);
        r.inertia = std::accumulate(dist.begin(), dist.end(), 0.0);
        r.inertia_history.push_back(r.inertia);
        ++r.iterations;
    };
    for (std::size_t it = 0; it < max_iter; ++it) {
        assign_step();
        if (assign == r.assignments) break;
        r.assignments = assign;
        Tensor next = update_centroids(points, assign, dist, k);
        double shift = 0.0;
        for (std::size_t j = 0; j < k; ++j)
            shift = std::max(shift, sq_dist(next.data().data() + j * d, r.centroids.data().data() + j * d, d));
        r.centroids = std::move(next);
        if (std::sqrt(shift) <= tol || it + 1 == max_iter) {
            assign_step();
            break;
        }
    }
    r.assignments = assign;
    return r;
}

KMeansResult kmeans(const Tensor& points, const KMeansConfig& config) {
    config.validate();
    KMeansResult best;
    for (std::size_t r = 0; r < config.restarts; ++r) {
        KMeansResult run =
            kmeans_once(points, config.k, config.init, derive_seed(config.seed, r), config.max_iter, config.tol);
        run.restart = r;
        if (r == 0 || run.inertia < best.inertia) best = std::move(run);
    }
    return best;
}

double nmi(std::span<const int> y, std::span<const int> c) {
    if (y.size() != c.size()) throw std::invalid_argument("nmi: labelings differ in length");
    if (y.empty()) throw std::invalid_argument("nmi: empty labelings");
    std::map<int, std::size_t> cy, cc;
    std::map<std::pair<int, int>, std::size_t> joint;
    for (std::size_t i = 0; i < y.size(); ++i) {
        ++cy[y[i]];
        ++cc[c[i]];
        ++joint[{y[i], c[i]}];
    }
    const double n = static_cast<double>(y.size());
    const double hy = entropy(cy, n), hc = entropy(cc, n);
    if (cy.size() == 1 || cc.size() == 1) return cy.size() == 1 && cc.size() == 1 ? 1.0 : 0.0;
    double mi = 0.0;
    for (const auto& [key, nij] : joint) {
        const double pij = static_cast<double>(nij) / n;
        mi += pij * std::log(n * static_cast<double>(nij) /
                             (static_cast<double>(cy[key.first]) * static_cast<double>(cc[key.second])));
    }
    return std::clamp(2.0 * mi / (hy + hc), 0.0, 1.0);
}

Tensor PcaResult::transform(const Tensor& points) const {
    check_points(points);
    const std::size_t n = points.dim(0), d = points.dim(1), m = components();
    if (d != mean.size()) throw ShapeError("pca: fitted on " + std::to_string(mean.size()) + " features, got " + std::to_string(d));
    Eigen::Map<const RowMatrix> x(points.data().data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    Eigen::Map<const RowMatrix> b(basis.data().data(), static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(m));
    Eigen::Map<const Eigen::RowVectorXd> mu(mean.data(), static_cast<Eigen::Index>(d));
    Tensor out({n, m});
    Eigen::Map<RowMatrix> y(out.data().data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
    y.noalias() = (x.rowwise() - mu) * b;
    return out;
}

PcaResult pca_reduce(const Tensor& points, const PcaTarget& target) {
    check_points(points);
    const std::size_t n = points.dim(0), d = points.dim(1);
    if (target.dimensions.has_value() == target.variance.has_value()) {
        throw std::invalid_argument("pca: give exactly one of a dimension count or a variance fraction");
    }
    if (target.dimensions && (*target.dimensions < 1 || *target.dimensions > d)) {
        throw std::invalid_argument("pca: " + std::to_string(*target.dimensions) + " components requested for " +
                                    std::to_string(d) + " features");
    }
    if (target.variance && !(*target.variance > 0.0 && *target.variance <= 1.0)) {
        throw std::invalid_argument("pca: variance fraction must lie in (0,1]");
    }
    Eigen::Map<const RowMatrix> x(points.data().data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    const Eigen::RowVectorXd mu = x.colwise().mean();
    const Eigen::MatrixXd centered = x.rowwise() - mu;
    const double denom = n > 1 ? static_cast<double>(n - 1) : 1.0;
    const Eigen::MatrixXd cov = (centered.transpose() * centered) / denom;
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    if (eig.info() != Eigen::Success) throw std::runtime_error("pca: eigendecomposition failed");

    // eigenvalues ascend; flip to descending
    std::vector<double> values(d);
    Eigen::MatrixXd vectors(d, d);
    for (std::size_t j = 0; j < d; ++j) {
        const auto src = static_cast<Eigen::Index>(d - 1 - j);
        values[j] = std::max(0.0, eig.eigenvalues()(src));
        Eigen::VectorXd v = eig.eigenvectors().col(src);
        Eigen::Index arg;
        v.cwiseAbs().maxCoeff(&arg);
        if (v(arg) < 0) v = -v;
        vectors.col(static_cast<Eigen::Index>(j)) = v;
    }
    PcaResult r;
    const double total = std::accumulate(values.begin(), values.end(), 0.0);
    r.explained_ratio.assign(d, 0.0);
    if (total > 0.0) {
        for (std::size_t j = 0; j < d; ++j) r.explained_ratio[j] = values[j] / total;
    } else {
        r.explained_ratio[0] = 1.0;
    }
    std::size_t m = target.dimensions.value_or(d);
    if (target.variance) {
        double cum = 0.0;
        for (m = 0; m < d;) {
            cum += r.explained_ratio[m++];
            if (cum >= *target.variance - 1e-12) break;
        }
    }
    r.mean.assign(mu.data(), mu.data() + d);
    r.basis = Tensor({d, m});
    Eigen::Map<RowMatrix>(r.basis.data().data(), static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(m)) =
        vectors.leftCols(static_cast<Eigen::Index>(m));
    r.projected = r.transform(points);
    return r;
}

Tensor flatten_rows(const Tensor& batch) {
    if (batch.rank() == 0) throw ShapeError("cannot flatten a scalar tensor");
    return batch.reshaped({batch.dim(0), batch.row_size()});
}

Reducer identity_reducer(std::string name) {
    return {std::move(name), [](const Tensor& x) { return flatten_rows(x); }};
}

Reducer pca_reducer(const PcaTarget& target, std::string name) {
    return {std::move(name), [target](const Tensor& x) { return pca_reduce(flatten_rows(x), target).projected; }};
}

Reducer ensemble_reducer(std::shared_ptr<const EnsembleModel> model, std::string name) {
    if (!model) throw std::invalid_argument("ensemble_reducer: null model");
    return {std::move(name), [model](const Tensor& x) { return flatten_rows(encode(*model, x)); }};
}

EvalReport eval_clustering(const std::vector<Reducer>& reducers, const Tensor& data, std::span<const int> labels,
                           const KMeansConfig& base, std::span<const std::uint64_t> seeds) {
    base.validate();
    if (seeds.empty()) throw std::invalid_argument("eval_clustering: need at least one seed");
    if (data.rank() == 0 || data.dim(0) != labels.size()) {
        throw std::invalid_argument("eval_clustering: one label per sample required");
    }
    EvalReport report;
    report.config["clustering"] = {{"k", base.k},
                                   {"init", to_string(base.init)},
                                   {"restarts_per_seed", base.restarts},
                                   {"max_iter", base.max_iter},
                                   {"tol", base.tol},
                                   {"seeds", std::vector<std::uint64_t>(seeds.begin(), seeds.end())},
                                   {"nmi_best", "nmi of the lowest-inertia run across seeds"}};
    for (const auto& reducer : reducers) {
        const Tensor embedded = reducer.transform(data);
        std::vector<double> scores;
        double best_inertia = 0.0, best_nmi = 0.0;
        for (std::size_t s = 0; s < seeds.size(); ++s) {
            KMeansConfig cfg = base;
            cfg.seed = seeds[s];
            const KMeansResult km = kmeans(embedded, cfg);
            scores.push_back(nmi(labels, km.assignments));
            if (s == 0 || km.inertia < best_inertia) {
                best_inertia = km.inertia;
                best_nmi = scores.back();
            }
        }
        const double mean = std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(scores.size());
        double var = 0.0;
        for (double v : scores) var += (v - mean) * (v - mean);
        const double sd = scores.size() > 1 ? std::sqrt(var / static_cast<double>(scores.size() - 1)) : 0.0;
        report.add({"nmi_best", best_nmi, reducer.name, std::nullopt, std::nullopt});
        report.add({"nmi_mean", mean, reducer.name, std::nullopt, std::nullopt});
        report.add({"nmi_std", sd, reducer.name, std::nullopt, std::nullopt});
    }
    return report;
}

}  // namespace bae
