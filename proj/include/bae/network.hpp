#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bae/layers.hpp"
#include "bae/tensor.hpp"

namespace bae {

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    void validate() const;
    friend bool operator==(const AdamConfig&, const AdamConfig&) = default;
};

enum class InitScheme {
    paper_normal,  // every weight ~ N(0, 1), biases 0
    scaled,        // weights ~ N(0, 2 / fan_in), biases 0
};

std::string to_string(InitScheme scheme);
InitScheme parse_init_scheme(const std::string& name);

class Network;

/// Per-layer intermediates of one batched forward pass.
struct ForwardCache {
    const Network* owner = nullptr;
    std::uint64_t version = 0;
    std::vector<Tensor> values;                      // values[i] = input of layer i; back() = output
    std::vector<std::vector<std::uint32_t>> argmax;  // max-pool layers only

    const Tensor& output() const { return values.back(); }
};

struct Gradients {
    std::vector<Tensor> params;  // same layout as Network::params()
    Tensor input;                // d loss / d network input
};

/// Instantiated network: parameters plus Adam moments.
/// Layers with parameters own two tensors, weights then bias. Dense weights
/// are [out, in]; conv weights are [out_c, in_c, k, k].
class Network {
public:
    Network() = default;
    /// Zero-initialized parameters; throws ShapeError on an inconsistent spec.
    explicit Network(NetworkSpec spec);

    const NetworkSpec& spec() const noexcept { return spec_; }
    const std::vector<Shape>& layer_shapes() const noexcept { return shapes_; }
    const Shape& input_shape() const { return shapes_.front(); }
    const Shape& output_shape() const { return shapes_.back(); }

    std::vector<Tensor>& params() noexcept { return params_; }
    const std::vector<Tensor>& params() const noexcept { return params_; }
    std::size_t parameter_count() const;

    /// Index into params() of layer i's weights, or -1 for parameter-free layers.
    int param_index(std::size_t layer) const { return param_index_.at(layer); }

    /// Batched inference; `batch` is [B, ...input_shape].
    Tensor forward(const Tensor& batch) const;
    /// Batched forward retaining what backward() needs.
    ForwardCache forward_train(const Tensor& batch) const;
    /// Gradients of the loss given d loss / d output. The cache must come
    /// from forward_train on this network with unchanged parameters.
    Gradients backward(const ForwardCache& cache, const Tensor& output_grad, bool need_input_grad = true) const;

    /// Bias-corrected Adam update of every parameter.
    void adam_step(const Gradients& grads, const AdamConfig& config);
    std::uint64_t adam_steps() const noexcept { return adam_step_; }
    void reset_optimizer();

    /// Bumped on any parameter change made through this class; caches from
    /// older versions are rejected. Direct writes through params() should call touch().
    std::uint64_t version() const noexcept { return version_; }
    void touch() noexcept { ++version_; }

    friend bool same_parameters(const Network& a, const Network& b);

private:
    void check_batch(const Tensor& batch) const;

    NetworkSpec spec_;
    std::vector<Shape> shapes_;
    std::vector<Tensor> params_;
    std::vector<int> param_index_;
    std::vector<Tensor> adam_m_;
    std::vector<Tensor> adam_v_;
    std::uint64_t adam_step_ = 0;
    std::uint64_t version_ = 0;
};

/// Bitwise parameter equality (specs must match too).
bool same_parameters(const Network& a, const Network& b);

Network init_network(const NetworkSpec& spec, InitScheme scheme, std::uint64_t seed);

/// Mean over every element of (x - y)^2.
double mse_loss(const Tensor& x, const Tensor& y);
/// d mse_loss(prediction, target) / d prediction.
Tensor mse_loss_grad(const Tensor& prediction, const Tensor& target);

}  // namespace bae
