#include "bae/network.hpp"

#include <cmath>
#include <cstring>
#include <random>
#include <stdexcept>

#include "bae/kernels.hpp"
#include "bae/rng.hpp"

namespace bae {
namespace k = kernels::parallel;

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};

kernels::ConvDims conv_dims(const Conv2d& c, std::size_t batch, const Shape& in, const Shape& out) {
    return {batch, in[0], in[1], in[2], out[0], out[1], out[2], c.kernel, c.stride, c.padding};
}

kernels::PoolDims pool_dims(std::size_t batch, const Shape& in) { return {batch, in[0], in[1], in[2]}; }

Shape batched(std::size_t batch, const Shape& sample) {
    Shape s{batch};
    s.insert(s.end(), sample.begin(), sample.end());
    return s;
}

void debug_check_finite(const Tensor& t, const char* what, std::size_t layer) {
#ifndef NDEBUG
    if (!t.all_finite()) {
        throw std::runtime_error(std::string("non-finite value in ") + what + " of layer " + std::to_string(layer));
    }
#else
    (void)t, (void)what, (void)layer;
#endif
}

}  // namespace

void AdamConfig::validate() const {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("adam learning_rate must be positive");
    if (!(beta1 > 0.0 && beta1 < 1.0)) throw std::invalid_argument("adam beta1 must lie in (0,1)");
    if (!(beta2 > 0.0 && beta2 < 1.0)) throw std::invalid_argument("adam beta2 must lie in (0,1)");
    if (!(epsilon > 0.0)) throw std::invalid_argument("adam epsilon must be positive");
}

std::string to_string(InitScheme scheme) { return scheme == InitScheme::paper_normal ? "paper_normal" : "scaled"; }

InitScheme parse_init_scheme(const std::string& name) {
    if (name == "paper_normal") return InitScheme::paper_normal;
    if (name == "scaled") return InitScheme::scaled;
    throw std::invalid_argument("unknown init scheme '" + name + "' (expected paper_normal or scaled)");
}

Network::Network(NetworkSpec spec) : spec_(std::move(spec)), shapes_(spec_.infer_shapes()) {
    param_index_.assign(spec_.layers.size(), -1);
    for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
        std::visit(overloaded{
                       [&](const Dense& d) {
                           param_index_[i] = static_cast<int>(params_.size());
                           params_.emplace_back(Shape{d.out_units, d.in_units});
                           params_.emplace_back(Shape{d.out_units});
                       },
                       [&](const Conv2d& c) {
                           param_index_[i] = static_cast<int>(params_.size());
                           params_.emplace_back(Shape{c.out_channels, c.in_channels, c.kernel, c.kernel});
                           params_.emplace_back(Shape{c.out_channels});
                       },
                       [](const auto&) {},
                   },
                   spec_.layers[i]);
    }
    reset_optimizer();
}

std::size_t Network::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.size();
    return n;
}

void Network::reset_optimizer() {
    adam_m_.clear();
    adam_v_.clear();
    for (const auto& p : params_) {
        adam_m_.emplace_back(p.shape());
        adam_v_.emplace_back(p.shape());
    }
    adam_step_ = 0;
}

void Network::check_batch(const Tensor& batch) const {
    const Shape& want = shapes_.front();
    const Shape& got = batch.shape();
    const bool ok = got.size() == want.size() + 1 && std::equal(want.begin(), want.end(), got.begin() + 1);
    if (!ok || got[0] == 0) {
        throw ShapeError("network expects a batch of " + to_string(want) + " samples, got tensor " + to_string(got));
    }
}

Tensor Network::forward(const Tensor& batch) const { return forward_train(batch).values.back(); }

ForwardCache Network::forward_train(const Tensor& batch) const {
    check_batch(batch);
    const std::size_t n = batch.dim(0);
    ForwardCache cache;
    cache.owner = this;
    cache.version = version_;
    cache.values.reserve(spec_.layers.size() + 1);
    cache.values.push_back(batch);
    cache.argmax.resize(spec_.layers.size());
    for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
        const Shape& in = shapes_[i];
        const Shape& out = shapes_[i + 1];
        Tensor y(batched(n, out));
        const Tensor& x = cache.values.back();
        std::visit(overloaded{
                       [&](const Dense& d) {
                           const auto& w = params_[static_cast<std::size_t>(param_index_[i])];
                           const auto& b = params_[static_cast<std::size_t>(param_index_[i]) + 1];
                           k::dense_forward({n, d.in_units, d.out_units}, x.data(), w.data(), b.data(), y.data());
                       },
                       [&](const Conv2d& c) {
                           const auto& w = params_[static_cast<std::size_t>(param_index_[i])];
                           const auto& b = params_[static_cast<std::size_t>(param_index_[i]) + 1];
                           k::conv2d_forward(conv_dims(c, n, in, out), x.data(), w.data(), b.data(), y.data());
                       },
                       [&](const MaxPool2x2&) {
                           cache.argmax[i].resize(y.size());
                           k::maxpool2x2_forward(pool_dims(n, in), x.data(), y.data(), cache.argmax[i]);
                       },
                       [&](const Upsample2x2&) { k::upsample2x2_forward(pool_dims(n, in), x.data(), y.data()); },
                       [&](const Activation& a) { k::activation_forward(a, x.data(), y.data()); },
                       [&](const Reshape&) { std::memcpy(y.data().data(), x.data().data(), x.size() * sizeof(double)); },
                   },
                   spec_.layers[i]);
        debug_check_finite(y, "forward output", i);
        cache.values.push_back(std::move(y));
    }
    return cache;
}

Gradients Network::backward(const ForwardCache& cache, const Tensor& output_grad, bool need_input_grad) const {
    if (cache.owner != this || cache.version != version_ || cache.values.size() != spec_.layers.size() + 1) {
        throw std::logic_error("backward called with a cache from a different or since-modified network");
    }
    if (output_grad.shape() != cache.values.back().shape()) {
        throw ShapeError("output gradient " + to_string(output_grad.shape()) + " does not match network output " +
                         to_string(cache.values.back().shape()));
    }
    const std::size_t n = output_grad.dim(0);
    Gradients g;
    g.params.reserve(params_.size());
    for (const auto& p : params_) g.params.emplace_back(p.shape());

    Tensor gy = output_grad;
    for (std::size_t li = spec_.layers.size(); li-- > 0;) {
        const Shape& in = shapes_[li];
        const Shape& out = shapes_[li + 1];
        const Tensor& x = cache.values[li];
        const bool want_gx = li > 0 || need_input_grad;
        Tensor gx = want_gx ? Tensor(batched(n, in)) : Tensor();
        std::visit(overloaded{
                       [&](const Dense& d) {
                           const auto pi = static_cast<std::size_t>(param_index_[li]);
                           k::dense_backward({n, d.in_units, d.out_units}, x.data(), params_[pi].data(), gy.data(),
                                             gx.data(), g.params[pi].data(), g.params[pi + 1].data());
                       },
                       [&](const Conv2d& c) {
                           const auto pi = static_cast<std::size_t>(param_index_[li]);
                           k::conv2d_backward(conv_dims(c, n, in, out), x.data(), params_[pi].data(), gy.data(),
                                              gx.data(), g.params[pi].data(), g.params[pi + 1].data());
                       },
                       [&](const MaxPool2x2&) {
                           if (want_gx) k::maxpool2x2_backward(pool_dims(n, in), cache.argmax[li], gy.data(), gx.data());
                       },
                       [&](const Upsample2x2&) {
                           if (want_gx) k::upsample2x2_backward(pool_dims(n, in), gy.data(), gx.data());
                       },
                       [&](const Activation& a) {
                           if (want_gx) k::activation_backward(a, x.data(), cache.values[li + 1].data(), gy.data(), gx.data());
                       },
                       [&](const Reshape&) {
                           if (want_gx) std::memcpy(gx.data().data(), gy.data().data(), gy.size() * sizeof(double));
                       },
                   },
                   spec_.layers[li]);
        if (want_gx) debug_check_finite(gx, "input gradient", li);
        gy = std::move(gx);
    }
    g.input = std::move(gy);
    return g;
}

void Network::adam_step(const Gradients& grads, const AdamConfig& config) {
    if (grads.params.size() != params_.size()) {
        throw ShapeError("gradient list has " + std::to_string(grads.params.size()) + " tensors, network has " +
                         std::to_string(params_.size()));
    }
    for (std::size_t p = 0; p < params_.size(); ++p) {
        if (grads.params[p].shape() != params_[p].shape()) {
            throw ShapeError("gradient " + std::to_string(p) + " has shape " + to_string(grads.params[p].shape()) +
                             ", parameter has " + to_string(params_[p].shape()));
        }
    }
    ++adam_step_;
    const double t = static_cast<double>(adam_step_);
    const double correction1 = 1.0 - std::pow(config.beta1, t);
    const double correction2 = 1.0 - std::pow(config.beta2, t);
    for (std::size_t p = 0; p < params_.size(); ++p) {
        auto w = params_[p].data();
        auto m = adam_m_[p].data();
        auto v = adam_v_[p].data();
        const auto gr = grads.params[p].data();
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * gr[i];
            v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * gr[i] * gr[i];
            const double m_hat = m[i] / correction1;
            const double v_hat = v[i] / correction2;
            w[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
        }
        debug_check_finite(params_[p], "parameters", p);
    }
    ++version_;
}

bool same_parameters(const Network& a, const Network& b) {
    if (!(a.spec_ == b.spec_) || a.params_.size() != b.params_.size()) return false;
    for (std::size_t p = 0; p < a.params_.size(); ++p) {
        const auto x = a.params_[p].data();
        const auto y = b.params_[p].data();
        if (x.size() != y.size() || std::memcmp(x.data(), y.data(), x.size() * sizeof(double)) != 0) return false;
    }
    return true;
}

Network init_network(const NetworkSpec& spec, InitScheme scheme, std::uint64_t seed) {
    Network net(spec);
    Rng rng(seed);
    for (std::size_t li = 0; li < spec.layers.size(); ++li) {
        const int pi = net.param_index(li);
        if (pi < 0) continue;
        Tensor& w = net.params()[static_cast<std::size_t>(pi)];
        const std::size_t fan_in = w.size() / w.dim(0);
        const double stddev = scheme == InitScheme::paper_normal ? 1.0 : std::sqrt(2.0 / static_cast<double>(fan_in));
        std::normal_distribution<double> normal(0.0, stddev);
        for (double& v : w.data()) v = normal(rng);
    }
    net.touch();
    return net;
}

double mse_loss(const Tensor& x, const Tensor& y) {
    if (x.shape() != y.shape()) {
        throw ShapeError("mse_loss operands differ: " + to_string(x.shape()) + " vs " + to_string(y.shape()));
    }
    if (x.empty()) throw ShapeError("mse_loss of empty tensors");
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - y[i];
        acc += d * d;
    }
    return acc / static_cast<double>(x.size());
}

Tensor mse_loss_grad(const Tensor& prediction, const Tensor& target) {
    if (prediction.shape() != target.shape()) {
        throw ShapeError("mse_loss operands differ: " + to_string(prediction.shape()) + " vs " +
                         to_string(target.shape()));
    }
    Tensor g(prediction.shape());
    const double scale = 2.0 / static_cast<double>(prediction.size());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = scale * (prediction[i] - target[i]);
    return g;
}

}  // namespace bae
