#include "bae/boosted.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "bae/kernels.hpp"

namespace bae {
namespace {

// Seed streams: decoder 0, encoder j -> j + 1, training RNG below.
constexpr std::uint64_t kTrainStream = 0xB005'7ED0ULL;

void check_data(const Network& encoder, const Tensor& data, const char* what) {
    const Shape& want = encoder.input_shape();
    const Shape& got = data.shape();
    if (got.size() != want.size() + 1 || !std::equal(want.begin(), want.end(), got.begin() + 1) || got[0] == 0) {
        throw ShapeError(std::string(what) + " must be a nonempty batch of " + to_string(want) + " samples, got " +
                         to_string(got));
    }
}

// Sums encoders in index order then scales; train_step relies on the same order.
Tensor mean_of(const EnsembleModel& model, std::size_t m, const Tensor& batch, const Tensor* last_output) {
    Tensor acc = m == 1 && last_output ? *last_output : model.encoders[0].forward(batch);
    for (std::size_t j = 1; j < m; ++j) {
        const Tensor h = (j + 1 == m && last_output) ? *last_output : model.encoders[j].forward(batch);
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += h[i];
    }
    const double inv = 1.0 / static_cast<double>(m);
    if (m > 1)
        for (double& v : acc.data()) v *= inv;
    return acc;
}

// One Adam step on encoder m (1-based) and the decoder; returns the batch MSE.
double train_step(EnsembleModel& model, std::size_t m, const Tensor& x, const AdamConfig& adam) {
    const StageGradients g = stage_gradients(model, m, x);
    if (!std::isfinite(g.loss)) {
        throw std::runtime_error("training diverged: non-finite loss at encoder " + std::to_string(m));
    }
    model.decoder.adam_step(g.decoder, adam);
    model.encoders[m - 1].adam_step(g.encoder, adam);
    return g.loss;
}

}  // namespace

void BoostConfig::validate() const {
    if (num_encoders < 1) throw std::invalid_argument("boost: M (num_encoders) must be >= 1");
    if (iterations_per_stage < 1) throw std::invalid_argument("boost: I (iterations_per_stage) must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("boost: Q (batch_size) must be >= 1");
    adam.validate();
}

void SingleConfig::validate() const {
    if (batch_size < 1) throw std::invalid_argument("single: batch_size must be >= 1");
    adam.validate();
}

SampleWeights SampleWeights::uniform(std::size_t n) {
    if (n == 0) throw std::invalid_argument("sample weights need at least one sample");
    return SampleWeights(std::vector<double>(n, 1.0 / static_cast<double>(n)));
}

SampleWeights SampleWeights::from_errors(std::span<const double> errors) {
    if (errors.empty()) throw std::invalid_argument("sample weights need at least one sample");
    double total = 0.0;
    for (double e : errors) {
        if (!(e >= 0.0) || !std::isfinite(e)) throw std::invalid_argument("sample errors must be finite and >= 0");
        total += e;
    }
    if (total == 0.0) return uniform(errors.size());
    std::vector<double> w(errors.begin(), errors.end());
    for (double& v : w) v /= total;
    return SampleWeights(std::move(w));
}

SampleWeights SampleWeights::from_values(std::span<const double> values) {
    double total = 0.0;
    for (double v : values) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("sample weights must be finite and >= 0");
        total += v;
    }
    if (!(total > 0.0)) throw std::invalid_argument("sample weights are all zero; cannot normalize");
    std::vector<double> w(values.begin(), values.end());
    for (double& v : w) v /= total;
    return SampleWeights(std::move(w));
}

void TrainTrace::append(const TraceRow& row) {
    if (!rows.empty()) {
        const TraceRow& last = rows.back();
        if (row.stage < last.stage || (row.stage == last.stage && row.iteration <= last.iteration)) {
            throw std::logic_error("trace rows must have strictly increasing (stage, iteration)");
        }
    }
    rows.push_back(row);
}

void TrainTrace::append(const TrainTrace& other) {
    for (const auto& r : other.rows) append(r);
}

std::optional<double> TrainTrace::final_val_mse() const {
    for (auto it = rows.rbegin(); it != rows.rend(); ++it)
        if (it->val_mse) return it->val_mse;
    return std::nullopt;
}

void EnsembleModel::validate() const {
    if (encoders.empty()) throw ShapeError("ensemble has no encoders");
    for (const auto& e : encoders) {
        if (!(e.spec() == encoders.front().spec())) throw ShapeError("ensemble encoders must share one spec");
    }
    if (encoders.front().output_shape() != decoder.input_shape()) {
        throw ShapeError("encoder output " + to_string(encoders.front().output_shape()) + " does not feed decoder input " +
                         to_string(decoder.input_shape()));
    }
    if (decoder.output_shape() != encoders.front().input_shape()) {
        throw ShapeError("decoder output " + to_string(decoder.output_shape()) + " differs from encoder input " +
                         to_string(encoders.front().input_shape()));
    }
    if (trained_stages > encoders.size()) throw ShapeError("trained_stages exceeds encoder count");
}

EnsembleModel make_ensemble(const NetworkSpec& encoder, const NetworkSpec& decoder, std::size_t num_encoders,
                            InitScheme init, std::uint64_t seed) {
    if (num_encoders < 1) throw std::invalid_argument("ensemble needs at least one encoder");
    EnsembleModel model;
    model.decoder = init_network(decoder, init, derive_seed(seed, 0));
    for (std::size_t j = 0; j < num_encoders; ++j) model.encoders.push_back(init_network(encoder, init, derive_seed(seed, j + 1)));
    model.validate();
    return model;
}

std::vector<std::size_t> sample_batch(const SampleWeights& weights, std::size_t count, Rng& rng) {
    const auto& w = weights.values();
    std::vector<double> cdf(w.size());
    std::partial_sum(w.begin(), w.end(), cdf.begin());
    const double total = cdf.empty() ? 0.0 : cdf.back();
    if (!(total > 0.0)) throw std::invalid_argument("sample_batch: weights are all zero");
    std::size_t last_positive = w.size() - 1;
    while (w[last_positive] == 0.0) --last_positive;
    std::vector<std::size_t> out(count);
    for (auto& idx : out) {
        const double u = uniform01(rng) * total;
        const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
        idx = std::min(static_cast<std::size_t>(it - cdf.begin()), last_positive);
    }
    return out;
}

StageGradients stage_gradients(const EnsembleModel& model, std::size_t m, const Tensor& x) {
    if (m < 1 || m > model.encoders.size()) throw std::out_of_range("stage_gradients: m out of range");
    const Network& enc = model.encoders[m - 1];
    const ForwardCache enc_cache = enc.forward_train(x);
    const Tensor avg = mean_of(model, m, x, &enc_cache.output());
    const ForwardCache dec_cache = model.decoder.forward_train(avg);
    StageGradients g;
    g.loss = mse_loss(dec_cache.output(), x);
    g.decoder = model.decoder.backward(dec_cache, mse_loss_grad(dec_cache.output(), x), true);
    // d avg / d h_m = 1/m
    Tensor enc_out_grad = g.decoder.input;
    const double inv = 1.0 / static_cast<double>(m);
    if (m > 1)
        for (double& v : enc_out_grad.data()) v *= inv;
    g.encoder = enc.backward(enc_cache, enc_out_grad, false);
    return g;
}

Tensor average_encoding(const EnsembleModel& model, std::size_t m, const Tensor& batch) {
    if (m < 1 || m > model.encoders.size()) {
        throw std::out_of_range("average_encoding: m=" + std::to_string(m) + " outside [1," +
                                std::to_string(model.encoders.size()) + "]");
    }
    return mean_of(model, m, batch, nullptr);
}

std::vector<double> reconstruction_errors(const EnsembleModel& model, std::size_t m, const Tensor& data,
                                          std::size_t chunk) {
    check_data(model.encoders.at(0), data, "reconstruction data");
    const std::size_t n = data.dim(0);
    const std::size_t features = data.row_size();
    std::vector<double> errors(n);
    for (std::size_t begin = 0; begin < n; begin += chunk) {
        const std::size_t end = std::min(n, begin + chunk);
        const Tensor x = data.slice_rows(begin, end);
        const Tensor y = model.decoder.forward(average_encoding(model, m, x));
        kernels::parallel::row_squared_error(end - begin, features, x.data(), y.data(),
                                             std::span<double>(errors).subspan(begin, end - begin));
    }
    return errors;
}

double reconstruction_mse(const EnsembleModel& model, std::size_t m, const Tensor& data, std::size_t chunk) {
    const auto errors = reconstruction_errors(model, m, data, chunk);
    const double total = std::accumulate(errors.begin(), errors.end(), 0.0);
    return total / static_cast<double>(data.size());
}

TrainTrace train_stage(EnsembleModel& model, std::size_t m, const Tensor& data, const SampleWeights& weights,
                       const BoostConfig& config, Rng& rng, const Tensor* val_data) {
    config.validate();
    if (m != model.trained_stages + 1 || m > model.encoders.size()) {
        throw std::logic_error("train_stage: stage " + std::to_string(m) + " requested but " +
                               std::to_string(model.trained_stages) + " of " + std::to_string(model.encoders.size()) +
                               " stages are trained; stages run in order");
    }
    check_data(model.encoders[0], data, "training data");
    if (val_data) check_data(model.encoders[0], *val_data, "validation data");
    if (weights.size() != data.dim(0)) {
        throw std::invalid_argument("train_stage: " + std::to_string(weights.size()) + " weights for " +
                                    std::to_string(data.dim(0)) + " samples");
    }
    TrainTrace trace;
    for (std::size_t it = 1; it <= config.iterations_per_stage; ++it) {
        const auto idx = sample_batch(weights, config.batch_size, rng);
        const double loss = train_step(model, m, data.gather_rows(idx), config.adam);
        TraceRow row{m, it, loss, std::nullopt};
        const bool periodic = config.val_every > 0 && it % config.val_every == 0;
        if (val_data && (periodic || it == config.iterations_per_stage)) row.val_mse = reconstruction_mse(model, m, *val_data);
        trace.append(row);
    }
    model.trained_stages = m;
    return trace;
}

SampleWeights update_sample_weights(const EnsembleModel& model, std::size_t m, const Tensor& data) {
    if (m < 1 || m > model.trained_stages) {
        throw std::logic_error("update_sample_weights: stage " + std::to_string(m) + " has not been trained");
    }
    const auto errors = reconstruction_errors(model, m, data);
    return SampleWeights::from_errors(errors);
}

BoostResult train_boosted(const NetworkSpec& encoder, const NetworkSpec& decoder, const Tensor& data,
                          const Tensor* val_data, const BoostConfig& config, const StageObserver& observer) {
    config.validate();
    BoostResult result{make_ensemble(encoder, decoder, config.num_encoders, config.init, config.seed), {}};
    check_data(result.model.encoders[0], data, "training data");
    Rng rng(derive_seed(config.seed, kTrainStream));
    SampleWeights weights = SampleWeights::uniform(data.dim(0));
    for (std::size_t m = 1; m <= config.num_encoders; ++m) {
        result.trace.append(train_stage(result.model, m, data, weights, config, rng, val_data));
        weights = update_sample_weights(result.model, m, data);
        if (observer) observer(m, result.model, weights);
    }
    return result;
}

Tensor encode(const EnsembleModel& model, const Tensor& batch) {
    if (model.encoders.empty() || model.trained_stages != model.encoders.size()) {
        throw std::logic_error("encode: model has " + std::to_string(model.trained_stages) + " of " +
                               std::to_string(model.encoders.size()) + " stages trained");
    }
    return average_encoding(model, model.encoders.size(), batch);
}

Tensor reconstruct(const EnsembleModel& model, const Tensor& batch) { return model.decoder.forward(encode(model, batch)); }

BoostResult train_single_ae(const NetworkSpec& encoder, const NetworkSpec& decoder, const Tensor& data,
                            const Tensor* val_data, const SingleConfig& config) {
    config.validate();
    BoostResult result{make_ensemble(encoder, decoder, 1, config.init, config.seed), {}};
    check_data(result.model.encoders[0], data, "training data");
    if (val_data) check_data(result.model.encoders[0], *val_data, "validation data");
    Rng rng(derive_seed(config.seed, kTrainStream));
    const std::size_t n = data.dim(0);
    std::vector<std::size_t> order(n);
    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        shuffle(order.begin(), order.end(), rng);
        for (std::size_t begin = 0; begin < n; begin += config.batch_size) {
            const std::size_t end = std::min(n, begin + config.batch_size);
            const std::span<const std::size_t> idx(order.data() + begin, end - begin);
            const double loss = train_step(result.model, 1, data.gather_rows(idx), config.adam);
            ++step;
            TraceRow row{1, step, loss, std::nullopt};
            const bool periodic = config.val_every > 0 && step % config.val_every == 0;
            if (val_data && (periodic || end == n)) row.val_mse = reconstruction_mse(result.model, 1, *val_data);
            result.trace.append(row);
        }
    }
    result.model.trained_stages = 1;
    return result;
}

}  // namespace bae
