#include "bae/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "bae/rng.hpp"

namespace bae {
namespace {

double weighted_sum(const Tensor& y, const Tensor& r) {
    double acc = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) acc += y[i] * r[i];
    return acc;
}

double rel_error(double a, double n) { return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-6}); }

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) { return lo + uniform_index(rng, hi - lo + 1); }

Tensor random_tensor(const Shape& shape, Rng& rng, double scale) {
    Tensor t(shape);
    std::normal_distribution<double> normal(0.0, scale);
    for (double& v : t.data()) v = normal(rng);
    return t;
}

// True when some activation input or pooling window is within `margin` of a kink.
bool near_kink(const Network& net, const Tensor& x, double margin) {
    const ForwardCache cache = net.forward_train(x);
    const auto& layers = net.spec().layers;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const Tensor& in = cache.values[i];
        if (const auto* a = std::get_if<Activation>(&layers[i]); a && a->fn != ActivationFn::sigmoid) {
            for (double v : in.data())
                if (std::abs(v) < margin) return true;
        }
        if (std::holds_alternative<MaxPool2x2>(layers[i])) {
            const Shape& s = net.layer_shapes()[i];
            const std::size_t n = in.dim(0);
            for (std::size_t b = 0; b < n; ++b)
                for (std::size_t c = 0; c < s[0]; ++c)
                    for (std::size_t h = 0; h + 1 < s[1]; h += 2)
                        for (std::size_t w = 0; w + 1 < s[2]; w += 2) {
                            double vals[4];
                            for (std::size_t q = 0; q < 4; ++q)
                                vals[q] = in[((b * s[0] + c) * s[1] + h + q / 2) * s[2] + w + q % 2];
                            std::sort(vals, vals + 4);
                            if (vals[3] - vals[2] < margin) return true;
                        }
        }
    }
    return false;
}

struct Probe {
    std::string kind;
    NetworkSpec spec;
};

Probe make_probe(const std::string& kind, Rng& rng) {
    if (kind == "dense") {
        const std::size_t in = pick(rng, 1, 5), out = pick(rng, 1, 4);
        return {kind, {{in}, {Dense{in, out}}}};
    }
    if (kind == "conv2d") {
        std::size_t ic, oc, k;
        do {
            ic = pick(rng, 1, 2), oc = pick(rng, 1, 2), k = pick(rng, 1, 3);
        } while (ic * oc * k * k + oc > 32);
        const std::size_t s = pick(rng, 1, 2), p = pick(rng, 0, 1);
        const std::size_t hw = pick(rng, std::max<std::size_t>(k, 2), 5);
        return {kind, {{ic, hw, hw + pick(rng, 0, 1)}, {Conv2d{ic, oc, k, s, p}}}};
    }
    if (kind == "maxpool2x2") {
        return {kind, {{pick(rng, 1, 2), pick(rng, 2, 5), pick(rng, 2, 5)}, {MaxPool2x2{}}}};
    }
    if (kind == "upsample2x2") {
        return {kind, {{pick(rng, 1, 2), pick(rng, 1, 3), pick(rng, 1, 3)}, {Upsample2x2{}}}};
    }
    if (kind == "relu") return {kind, {{pick(rng, 1, 8)}, {relu()}}};
    if (kind == "leaky_relu") return {kind, {{pick(rng, 1, 8)}, {leaky_relu(0.1)}}};
    if (kind == "sigmoid") return {kind, {{pick(rng, 1, 8)}, {sigmoid()}}};
    if (kind == "reshape") {
        const std::size_t a = pick(rng, 1, 3), b = pick(rng, 1, 3);
        return {kind, {{a * b}, {Reshape{{a, b, 1}}}}};
    }
    // mixed stack: conv -> pool -> leaky -> reshape -> dense -> sigmoid
    return {kind,
            {{1, 5, 5},
             {Conv2d{1, 2, 2, 1, 0}, MaxPool2x2{}, leaky_relu(0.1), Reshape{{8}}, Dense{8, 1}, sigmoid()}}};
}

}  // namespace

GradcheckResult check_gradients(const Network& net, const Tensor& input, const Tensor& output_weights, double step,
                                double tolerance) {
    GradcheckResult res;
    const ForwardCache cache = net.forward_train(input);
    const Gradients g = net.backward(cache, output_weights, true);

    Network probe = net;
    auto numeric = [&](double& slot) {
        const double saved = slot;
        slot = saved + step;
        probe.touch();
        const double up = weighted_sum(probe.forward(input), output_weights);
        slot = saved - step;
        probe.touch();
        const double down = weighted_sum(probe.forward(input), output_weights);
        slot = saved;
        probe.touch();
        return (up - down) / (2.0 * step);
    };
    for (std::size_t p = 0; p < probe.params().size(); ++p) {
        auto data = probe.params()[p].data();
        for (std::size_t i = 0; i < data.size(); ++i) {
            res.max_rel_error = std::max(res.max_rel_error, rel_error(g.params[p][i], numeric(data[i])));
            ++res.checked;
        }
    }
    Tensor x = input;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double saved = x[i];
        x[i] = saved + step;
        const double up = weighted_sum(net.forward(x), output_weights);
        x[i] = saved - step;
        const double down = weighted_sum(net.forward(x), output_weights);
        x[i] = saved;
        res.max_rel_error = std::max(res.max_rel_error, rel_error(g.input[i], (up - down) / (2.0 * step)));
        ++res.checked;
    }
    res.passed = res.max_rel_error < tolerance;
    return res;
}

std::vector<GradcheckResult> run_gradcheck(std::uint64_t seed, std::size_t configs_per_kind, double step,
                                           double tolerance) {
    static const char* kinds[] = {"dense",   "conv2d",     "maxpool2x2", "upsample2x2", "relu",
                                  "leaky_relu", "sigmoid", "reshape",    "mixed"};
    std::vector<GradcheckResult> out;
    Rng rng(seed);
    for (const char* kind : kinds) {
        for (std::size_t c = 0; c < configs_per_kind; ++c) {
            const Probe probe = make_probe(kind, rng);
            const Network net = init_network(probe.spec, InitScheme::paper_normal, rng());
            const std::size_t batch = pick(rng, 1, 3);
            Shape in{batch};
            in.insert(in.end(), probe.spec.input_shape.begin(), probe.spec.input_shape.end());
            Tensor x = random_tensor(in, rng, 1.0);
            for (int attempt = 0; attempt < 100 && near_kink(net, x, 1e-3); ++attempt) x = random_tensor(in, rng, 1.0);
            Shape out_shape{batch};
            const Shape& os = net.output_shape();
            out_shape.insert(out_shape.end(), os.begin(), os.end());
            const Tensor r = random_tensor(out_shape, rng, 1.0);
            GradcheckResult res = check_gradients(net, x, r, step, tolerance);
            res.kind = kind;
            for (const auto& l : probe.spec.layers) res.network += (res.network.empty() ? "" : "-") + describe(l);
            res.network += " on " + to_string(in);
            out.push_back(std::move(res));
        }
    }
    return out;
}

}  // namespace bae
