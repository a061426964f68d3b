#include "bae/layers.hpp"

#include <sstream>

namespace bae {
namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};

const char* activation_name(ActivationFn fn) {
    switch (fn) {
        case ActivationFn::relu: return "relu";
        case ActivationFn::leaky_relu: return "leaky_relu";
        case ActivationFn::sigmoid: return "sigmoid";
    }
    return "?";
}

void require_positive(std::size_t v, const char* what, const LayerSpec& layer) {
    if (v < 1) throw ShapeError(describe(layer) + ": " + what + " must be >= 1");
}

}  // namespace

LayerKind kind_of(const LayerSpec& layer) {
    return std::visit(overloaded{
                          [](const Dense&) { return LayerKind::dense; },
                          [](const Conv2d&) { return LayerKind::conv2d; },
                          [](const MaxPool2x2&) { return LayerKind::maxpool2x2; },
                          [](const Upsample2x2&) { return LayerKind::upsample2x2; },
                          [](const Activation&) { return LayerKind::activation; },
                          [](const Reshape&) { return LayerKind::reshape; },
                      },
                      layer);
}

std::string describe(const LayerSpec& layer) {
    std::ostringstream os;
    std::visit(overloaded{
                   [&](const Dense& d) { os << "dense(" << d.in_units << "," << d.out_units << ")"; },
                   [&](const Conv2d& c) {
                       os << "conv2d(" << c.in_channels << "," << c.out_channels << "," << c.kernel
                          << "," << c.stride << "," << c.padding << ")";
                   },
                   [&](const MaxPool2x2&) { os << "maxpool2x2"; },
                   [&](const Upsample2x2&) { os << "upsample2x2"; },
                   [&](const Activation& a) {
                       os << activation_name(a.fn);
                       if (a.fn == ActivationFn::leaky_relu) os << "(" << a.alpha << ")";
                   },
                   [&](const Reshape& r) { os << "reshape" << to_string(r.target); },
               },
               layer);
    return os.str();
}

bool has_parameters(const LayerSpec& layer) {
    const LayerKind k = kind_of(layer);
    return k == LayerKind::dense || k == LayerKind::conv2d;
}

Shape output_shape(const LayerSpec& layer, const Shape& in) {
    auto fail = [&](const std::string& why) -> ShapeError {
        return ShapeError(describe(layer) + " cannot take input " + to_string(in) + ": " + why);
    };
    return std::visit(
        overloaded{
            [&](const Dense& d) -> Shape {
                require_positive(d.in_units, "in_units", layer);
                require_positive(d.out_units, "out_units", layer);
                if (element_count(in) != d.in_units) throw fail("feature count mismatch");
                return {d.out_units};
            },
            [&](const Conv2d& c) -> Shape {
                require_positive(c.in_channels, "in_channels", layer);
                require_positive(c.out_channels, "out_channels", layer);
                require_positive(c.kernel, "kernel", layer);
                require_positive(c.stride, "stride", layer);
                if (in.size() != 3) throw fail("expected CxHxW");
                if (in[0] != c.in_channels) throw fail("channel mismatch");
                const std::size_t ph = in[1] + 2 * c.padding;
                const std::size_t pw = in[2] + 2 * c.padding;
                if (ph < c.kernel || pw < c.kernel) throw fail("kernel larger than padded input");
                return {c.out_channels, (ph - c.kernel) / c.stride + 1, (pw - c.kernel) / c.stride + 1};
            },
            [&](const MaxPool2x2&) -> Shape {
                if (in.size() != 3) throw fail("expected CxHxW");
                if (in[1] < 2 || in[2] < 2) throw fail("spatial size below 2");
                return {in[0], in[1] / 2, in[2] / 2};
            },
            [&](const Upsample2x2&) -> Shape {
                if (in.size() != 3) throw fail("expected CxHxW");
                return {in[0], in[1] * 2, in[2] * 2};
            },
            [&](const Activation& a) -> Shape {
                if (a.fn == ActivationFn::leaky_relu && !(a.alpha > 0.0 && a.alpha < 1.0)) {
                    throw fail("leaky_relu alpha must lie in (0,1)");
                }
                return in;
            },
            [&](const Reshape& r) -> Shape {
                for (auto d : r.target) require_positive(d, "reshape dim", layer);
                if (element_count(r.target) != element_count(in)) throw fail("element count changes");
                return r.target;
            },
        },
        layer);
}

std::vector<Shape> NetworkSpec::infer_shapes() const {
    if (input_shape.empty()) throw ShapeError("network input shape is empty");
    for (auto d : input_shape) {
        if (d == 0) throw ShapeError("network input shape " + to_string(input_shape) + " has a zero dim");
    }
    std::vector<Shape> shapes{input_shape};
    shapes.reserve(layers.size() + 1);
    for (std::size_t i = 0; i < layers.size(); ++i) {
        try {
            shapes.push_back(bae::output_shape(layers[i], shapes.back()));
        } catch (const ShapeError& e) {
            const std::string prev = i == 0 ? std::string("network input") : "layer " + std::to_string(i - 1) +
                                                                                   " " + describe(layers[i - 1]);
            throw ShapeError("layer " + std::to_string(i) + " " + describe(layers[i]) + " after " + prev +
                             ": " + e.what());
        }
    }
    return shapes;
}

}  // namespace bae
