#pragma once

// Batched compute kernels. `serial` is the plain-loop reference kept for
// testing; `parallel` is the OpenMP version the engine dispatches to.
//
// Every output element of a parallel kernel is produced by exactly one thread
// with the same accumulation order as the serial kernel, so results do not
// depend on the thread count.

#include <cstddef>
#include <cstdint>
#include <span>

#include "bae/layers.hpp"

namespace bae::kernels {

struct DenseDims {
    std::size_t batch;
    std::size_t in;
    std::size_t out;
};

struct ConvDims {
    std::size_t batch;
    std::size_t in_c, in_h, in_w;
    std::size_t out_c, out_h, out_w;
    std::size_t kernel, stride, padding;
};

struct PoolDims {
    std::size_t batch, channels, in_h, in_w;  // output is in_h/2 x in_w/2
};

using In = std::span<const double>;
using Out = std::span<double>;

#define BAE_KERNEL_DECLS                                                                          \
    /* y[b,o] = b[o] + sum_i w[o,i] x[b,i] */                                                     \
    void dense_forward(const DenseDims& d, In x, In w, In bias, Out y);                            \
    /* gw, gb overwritten; gx overwritten when non-empty */                                       \
    void dense_backward(const DenseDims& d, In x, In w, In gy, Out gx, Out gw, Out gb);            \
    void conv2d_forward(const ConvDims& d, In x, In w, In bias, Out y);                            \
    void conv2d_backward(const ConvDims& d, In x, In w, In gy, Out gx, Out gw, Out gb);            \
    /* argmax holds the flat input offset (within the sample) of each pooled maximum */            \
    void maxpool2x2_forward(const PoolDims& d, In x, Out y, std::span<std::uint32_t> argmax);      \
    void maxpool2x2_backward(const PoolDims& d, std::span<const std::uint32_t> argmax, In gy,      \
                             Out gx);                                                             \
    /* dims describe the input; output is 2h x 2w */                                              \
    void upsample2x2_forward(const PoolDims& d, In x, Out y);                                      \
    void upsample2x2_backward(const PoolDims& d, In gy, Out gx);                                   \
    void activation_forward(const Activation& a, In x, Out y);                                     \
    /* y is the forward output for x */                                                           \
    void activation_backward(const Activation& a, In x, In y, In gy, Out gx);                      \
    /* out[r] = sum_c (a[r,c] - b[r,c])^2 */                                                      \
    void row_squared_error(std::size_t rows, std::size_t cols, In a, In b, Out out);               \
    /* nearest centroid per point; ties go to the lowest index */                                 \
    void nearest_centroid(std::size_t n, std::size_t k, std::size_t dim, In points, In centroids,  \
                          std::span<int> assign, Out sq_dist);

namespace serial {
BAE_KERNEL_DECLS
}  // namespace serial

namespace parallel {
BAE_KERNEL_DECLS
/// Threads OpenMP will use for parallel kernels (1 when built without OpenMP).
int max_threads();
}  // namespace parallel

#undef BAE_KERNEL_DECLS

}  // namespace bae::kernels
