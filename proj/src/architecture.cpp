#include "bae/architecture.hpp"

#include <cstdlib>
#include <stdexcept>

namespace bae {
namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};

// Stride-1 conv mapping spatial size `from` to `to`: to = from + 2p - k + 1.
Conv2d back_conv(std::size_t in_c, std::size_t out_c, std::size_t kernel, std::size_t from, std::size_t to) {
    const long f = static_cast<long>(from), t = static_cast<long>(to);
    for (long delta : {0L, -1L, 1L, -2L, 2L}) {
        const long k = static_cast<long>(kernel) + delta;
        if (k < 1) continue;
        const long twice_p = t - f + k - 1;
        if (twice_p >= 0 && twice_p % 2 == 0) {
            return Conv2d{in_c, out_c, static_cast<std::size_t>(k), 1, static_cast<std::size_t>(twice_p / 2)};
        }
    }
    throw ShapeError("cannot mirror a convolution from size " + std::to_string(from) + " to " + std::to_string(to));
}

}  // namespace

NetworkSpec mirror_decoder(const NetworkSpec& encoder, const LayerSpec& hidden, const LayerSpec& output) {
    const auto shapes = encoder.infer_shapes();
    NetworkSpec dec;
    dec.input_shape = shapes.back();
    std::vector<LayerSpec> trunk;
    for (std::size_t i = encoder.layers.size(); i-- > 0;) {
        const Shape& in = shapes[i];
        const Shape& out = shapes[i + 1];
        std::visit(overloaded{
                       [&](const Dense& d) {
                           trunk.emplace_back(Dense{d.out_units, d.in_units});
                           if (in.size() != 1) trunk.emplace_back(Reshape{in});
                       },
                       [&](const Conv2d& c) {
                           std::size_t from = out[1];
                           if (c.stride == 2) {
                               trunk.emplace_back(Upsample2x2{});
                               from *= 2;
                           } else if (c.stride != 1) {
                               throw ShapeError("mirror_decoder supports conv stride 1 or 2, got " + describe(c));
                           }
                           if (in[1] != in[2]) throw ShapeError("mirror_decoder needs square feature maps");
                           trunk.emplace_back(back_conv(c.out_channels, c.in_channels, c.kernel, from, in[1]));
                       },
                       [&](const MaxPool2x2&) {
                           if (in[1] % 2 || in[2] % 2) throw ShapeError("mirror_decoder needs even sizes before pooling");
                           trunk.emplace_back(Upsample2x2{});
                       },
                       [&](const Upsample2x2&) { throw ShapeError("mirror_decoder: encoder contains upsample2x2"); },
                       [](const Activation&) {},
                       [&](const Reshape&) { trunk.emplace_back(Reshape{in}); },
                   },
                   encoder.layers[i]);
    }
    std::size_t remaining = 0;
    for (const auto& l : trunk) remaining += has_parameters(l) ? 1 : 0;
    if (remaining == 0) throw ShapeError("mirror_decoder: encoder has no parameterized layers");
    for (const auto& l : trunk) {
        dec.layers.push_back(l);
        if (has_parameters(l)) dec.layers.push_back(--remaining == 0 ? output : hidden);
    }
    if (dec.output_shape() != encoder.input_shape) {
        throw ShapeError("mirrored decoder produces " + to_string(dec.output_shape()) + ", encoder input is " +
                         to_string(encoder.input_shape));
    }
    return dec;
}

Architecture dense_autoencoder(const Shape& input_shape, const std::vector<std::size_t>& widths,
                               const LayerSpec& hidden) {
    if (widths.empty()) throw ShapeError("dense_autoencoder needs at least one layer width");
    NetworkSpec enc{input_shape, {}};
    std::size_t prev = element_count(input_shape);
    for (auto w : widths) {
        enc.layers.emplace_back(Dense{prev, w});
        enc.layers.push_back(hidden);
        prev = w;
    }
    return {"dense", enc, mirror_decoder(enc, hidden, sigmoid())};
}

Architecture preset_architecture(const std::string& name) {
    if (name == "cifar-conv-paper") {
        NetworkSpec enc{{3, 32, 32},
                        {Conv2d{3, 8, 4, 2, 1}, relu(), Conv2d{8, 16, 4, 2, 1}, relu(), Conv2d{16, 16, 4, 2, 1}, relu()}};
        return {name, enc, mirror_decoder(enc, relu(), sigmoid())};
    }
    if (name == "fmnist-conv-paper") {
        NetworkSpec enc{{1, 28, 28},
                        {Conv2d{1, 2, 4, 2, 1}, relu(), Conv2d{2, 4, 4, 2, 1}, relu(), Conv2d{4, 8, 3, 2, 1}, relu(),
                         Conv2d{8, 8, 4, 2, 1}, relu()}};
        return {name, enc, mirror_decoder(enc, relu(), sigmoid())};
    }
    const LayerSpec leaky = leaky_relu(0.1);
    if (name == "cifar-lenet-anomaly") {
        NetworkSpec enc{{3, 32, 32},
                        {Conv2d{3, 32, 3, 1, 1}, MaxPool2x2{}, leaky, Conv2d{32, 64, 3, 1, 1}, MaxPool2x2{}, leaky,
                         Conv2d{64, 64, 3, 1, 1}, MaxPool2x2{}, leaky, Dense{64 * 4 * 4, 256}, leaky}};
        return {name, enc, mirror_decoder(enc, leaky, sigmoid())};
    }
    if (name == "fmnist-dense-paper") {
        auto arch = dense_autoencoder({1, 28, 28}, {512, 256, 128, 50}, leaky);
        arch.name = name;
        return arch;
    }
    if (name == "lenet-cluster") {
        NetworkSpec enc{{1, 28, 28},
                        {Conv2d{1, 8, 5, 1, 0}, MaxPool2x2{}, leaky, Conv2d{8, 4, 5, 1, 0}, MaxPool2x2{}, leaky,
                         Dense{4 * 4 * 4, 10}, leaky}};
        return {name, enc, mirror_decoder(enc, leaky, sigmoid())};
    }
    throw std::invalid_argument("unknown architecture preset '" + name + "'");
}

std::vector<std::string> preset_names() {
    return {"cifar-conv-paper", "fmnist-conv-paper", "cifar-lenet-anomaly", "fmnist-dense-paper", "lenet-cluster"};
}

}  // namespace bae
