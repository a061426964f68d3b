#pragma once

#include <cstddef>
#include <string>
#include <variant>
#include <vector>

#include "bae/tensor.hpp"

namespace bae {

enum class LayerKind : unsigned char {
    dense = 0,
    conv2d = 1,
    maxpool2x2 = 2,
    upsample2x2 = 3,
    activation = 4,
    reshape = 5,
};

enum class ActivationFn : unsigned char { relu = 0, leaky_relu = 1, sigmoid = 2 };

struct Dense {
    std::size_t in_units = 0;
    std::size_t out_units = 0;
    friend bool operator==(const Dense&, const Dense&) = default;
};

/// Cross-correlation over a CxHxW input; square kernel, symmetric zero padding.
struct Conv2d {
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t kernel = 0;
    std::size_t stride = 1;
    std::size_t padding = 0;
    friend bool operator==(const Conv2d&, const Conv2d&) = default;
};

/// 2x2 window, stride 2; odd trailing rows/columns are dropped.
struct MaxPool2x2 {
    friend bool operator==(const MaxPool2x2&, const MaxPool2x2&) = default;
};

/// Nearest-neighbour 2x spatial upsampling.
struct Upsample2x2 {
    friend bool operator==(const Upsample2x2&, const Upsample2x2&) = default;
};

struct Activation {
    ActivationFn fn = ActivationFn::relu;
    double alpha = 0.0;  // leaky_relu slope for x <= 0
    friend bool operator==(const Activation&, const Activation&) = default;
};

/// Reinterprets the per-sample shape; element count is preserved.
struct Reshape {
    Shape target;
    friend bool operator==(const Reshape&, const Reshape&) = default;
};

using LayerSpec = std::variant<Dense, Conv2d, MaxPool2x2, Upsample2x2, Activation, Reshape>;

LayerKind kind_of(const LayerSpec& layer);
std::string describe(const LayerSpec& layer);
bool has_parameters(const LayerSpec& layer);

inline LayerSpec relu() { return Activation{ActivationFn::relu, 0.0}; }
inline LayerSpec leaky_relu(double alpha) { return Activation{ActivationFn::leaky_relu, alpha}; }
inline LayerSpec sigmoid() { return Activation{ActivationFn::sigmoid, 0.0}; }

/// Per-sample output shape of `layer` applied to `in`; throws ShapeError.
Shape output_shape(const LayerSpec& layer, const Shape& in);

struct NetworkSpec {
    Shape input_shape;
    std::vector<LayerSpec> layers;

    /// shapes[0] is the input, shapes[i + 1] the output of layer i.
    /// Throws ShapeError naming the offending layer pair.
    std::vector<Shape> infer_shapes() const;
    Shape output_shape() const { return infer_shapes().back(); }
    void validate() const { (void)infer_shapes(); }

    friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

}  // namespace bae
