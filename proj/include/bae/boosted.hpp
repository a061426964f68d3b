#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "bae/network.hpp"
#include "bae/rng.hpp"

namespace bae {

struct BoostConfig {
    std::size_t num_encoders = 20;          // M
    std::size_t iterations_per_stage = 2000;  // I
    std::size_t batch_size = 50;            // Q
    AdamConfig adam{};
    std::uint64_t seed = 0;
    InitScheme init = InitScheme::paper_normal;
    /// Validation MSE is recorded every `val_every` iterations and at each
    /// stage end; 0 records it at stage ends only.
    std::size_t val_every = 0;

    void validate() const;
};

/// Probability vector over training samples.
class SampleWeights {
public:
    static SampleWeights uniform(std::size_t n);
    /// Normalizes nonnegative `errors`; an all-zero vector gives uniform weights.
    static SampleWeights from_errors(std::span<const double> errors);
    /// Normalizes nonnegative `values`; throws when they are all zero.
    static SampleWeights from_values(std::span<const double> values);

    std::size_t size() const noexcept { return w_.size(); }
    double operator[](std::size_t i) const { return w_[i]; }
    const std::vector<double>& values() const noexcept { return w_; }

private:
    explicit SampleWeights(std::vector<double> w) : w_(std::move(w)) {}
    std::vector<double> w_;
};

struct TraceRow {
    std::size_t stage = 0;      // 1-based
    std::size_t iteration = 0;  // 1-based within the stage (global step for single-AE runs)
    double train_mse = 0.0;
    std::optional<double> val_mse;

    friend bool operator==(const TraceRow&, const TraceRow&) = default;
};

struct TrainTrace {
    std::vector<TraceRow> rows;

    /// Throws std::logic_error unless (stage, iteration) strictly increases.
    void append(const TraceRow& row);
    void append(const TrainTrace& other);
    /// Last recorded validation MSE, if any.
    std::optional<double> final_val_mse() const;

    friend bool operator==(const TrainTrace&, const TrainTrace&) = default;
};

/// M encoders sharing one spec plus one decoder consuming their mean latent.
struct EnsembleModel {
    std::vector<Network> encoders;
    Network decoder;
    std::size_t trained_stages = 0;

    std::size_t num_encoders() const noexcept { return encoders.size(); }
    /// Throws ShapeError unless encoders share one spec whose output feeds the decoder.
    void validate() const;
};

EnsembleModel make_ensemble(const NetworkSpec& encoder, const NetworkSpec& decoder, std::size_t num_encoders,
                            InitScheme init, std::uint64_t seed);

/// i.i.d. draws with replacement from `weights` by inverse CDF.
std::vector<std::size_t> sample_batch(const SampleWeights& weights, std::size_t count, Rng& rng);

/// Mean of encoders 1..m on a batch; m is 1-based, 1 <= m <= M.
Tensor average_encoding(const EnsembleModel& model, std::size_t m, const Tensor& batch);

/// Per-sample sum of squared reconstruction errors through encoders 1..m.
std::vector<double> reconstruction_errors(const EnsembleModel& model, std::size_t m, const Tensor& data,
                                          std::size_t chunk = 256);

/// Mean squared reconstruction error over all samples and features through encoders 1..m.
double reconstruction_mse(const EnsembleModel& model, std::size_t m, const Tensor& data, std::size_t chunk = 256);

struct StageGradients {
    double loss = 0.0;
    Gradients decoder;  // includes d loss / d mean latent
    Gradients encoder;  // encoder m only
};

/// Batch MSE through encoders 1..m and its gradients for the decoder and encoder m.
StageGradients stage_gradients(const EnsembleModel& model, std::size_t m, const Tensor& x);

/// Stage m (1-based): I iterations of sample Q -> encode with 1..m -> average ->
/// decode -> MSE -> Adam on encoder m and the decoder only. Requires
/// m == trained_stages + 1. Encoders 1..m-1 are left bitwise unchanged.
TrainTrace train_stage(EnsembleModel& model, std::size_t m, const Tensor& data, const SampleWeights& weights,
                       const BoostConfig& config, Rng& rng, const Tensor* val_data = nullptr);

/// Weights proportional to per-sample error over the whole training set after stage m.
SampleWeights update_sample_weights(const EnsembleModel& model, std::size_t m, const Tensor& data);

struct BoostResult {
    EnsembleModel model;
    TrainTrace trace;
};

/// Called after each stage with the stage index, the model, and the weights
/// that will drive the next stage.
using StageObserver = std::function<void(std::size_t stage, const EnsembleModel&, const SampleWeights&)>;

/// The full boosting loop: stages 1..M with weight redistribution after each.
BoostResult train_boosted(const NetworkSpec& encoder, const NetworkSpec& decoder, const Tensor& data,
                          const Tensor* val_data, const BoostConfig& config, const StageObserver& observer = {});

/// Mean latent of every trained encoder; requires a fully trained model.
Tensor encode(const EnsembleModel& model, const Tensor& batch);
/// decoder(encode(x)).
Tensor reconstruct(const EnsembleModel& model, const Tensor& batch);

struct SingleConfig {
    std::size_t epochs = 50;
    std::size_t batch_size = 50;
    AdamConfig adam{};
    std::uint64_t seed = 0;
    InitScheme init = InitScheme::paper_normal;
    /// Extra validation points every `val_every` steps besides each epoch end; 0 disables.
    std::size_t val_every = 0;

    void validate() const;
};

/// Conventional epoch/minibatch autoencoder training with per-epoch
/// reshuffling. The result is a one-encoder ensemble initialized exactly like
/// train_boosted's encoder 1 and decoder for the same seed.
BoostResult train_single_ae(const NetworkSpec& encoder, const NetworkSpec& decoder, const Tensor& data,
                            const Tensor* val_data, const SingleConfig& config);

}  // namespace bae
