#include <algorithm>
#include <cmath>
#include <limits>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "bae/kernels.hpp"

// Loops below mirror the serial kernels' accumulation order; only the
// outermost independent dimension is split across threads.

namespace bae::kernels::parallel {
namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kMinParallelWork = 1u << 14;

inline bool worth_it(std::size_t work) { return work >= kMinParallelWork; }

inline std::ptrdiff_t sidx(std::size_t v) { return static_cast<std::ptrdiff_t>(v); }

}  // namespace

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

void dense_forward(const DenseDims& d, In x, In w, In bias, Out y) {
    const std::ptrdiff_t batch = sidx(d.batch);
#pragma omp parallel for schedule(static) if (worth_it(d.batch * d.in * d.out))
    for (std::ptrdiff_t bi = 0; bi < batch; ++bi) {
        const auto b = static_cast<std::size_t>(bi);
        const double* xr = x.data() + b * d.in;
        for (std::size_t o = 0; o < d.out; ++o) {
            const double* wr = w.data() + o * d.in;
            double acc = bias[o];
            for (std::size_t i = 0; i < d.in; ++i) acc += wr[i] * xr[i];
            y[b * d.out + o] = acc;
        }
    }
}

void dense_backward(const DenseDims& d, In x, In w, In gy, Out gx, Out gw, Out gb) {
    const bool par = worth_it(d.batch * d.in * d.out);
    const std::ptrdiff_t outs = sidx(d.out);
#pragma omp parallel for schedule(static) if (par)
    for (std::ptrdiff_t oi = 0; oi < outs; ++oi) {
        const auto o = static_cast<std::size_t>(oi);
        double acc_b = 0.0;
        for (std::size_t b = 0; b < d.batch; ++b) acc_b += gy[b * d.out + o];
        gb[o] = acc_b;
        double* gwr = gw.data() + o * d.in;
        for (std::size_t i = 0; i < d.in; ++i) {
            double acc = 0.0;
            for (std::size_t b = 0; b < d.batch; ++b) acc += gy[b * d.out + o] * x[b * d.in + i];
            gwr[i] = acc;
        }
    }
    if (gx.empty()) return;
    const std::ptrdiff_t batch = sidx(d.batch);
#pragma omp parallel for schedule(static) if (par)
    for (std::ptrdiff_t bi = 0; bi < batch; ++bi) {
        const auto b = static_cast<std::size_t>(bi);
        for (std::size_t i = 0; i < d.in; ++i) {
            double acc = 0.0;
            for (std::size_t o = 0; o < d.out; ++o) acc += gy[b * d.out + o] * w[o * d.in + i];
            gx[b * d.in + i] = acc;
        }
    }
}

namespace {

// Valid kernel-offset range [lo, hi) for output position `out_pos` along one axis.
struct Window {
    std::size_t lo, hi, base;  // input index = base + k - padding for k in [lo, hi)
};

inline Window window(std::size_t out_pos, std::size_t stride, std::size_t padding, std::size_t kernel,
                     std::size_t in_size) {
    const std::size_t start = out_pos * stride;  // input index + padding of k = 0
    const std::size_t lo = start < padding ? padding - start : 0;
    const std::size_t end_unclamped = in_size + padding;  // first invalid (input index + padding)
    const std::size_t hi = start + kernel <= end_unclamped ? kernel : (end_unclamped > start ? end_unclamped - start : 0);
    return {lo, std::max(lo, hi), start};
}

}  // namespace

void conv2d_forward(const ConvDims& d, In x, In w, In bias, Out y) {
    const std::ptrdiff_t batch = sidx(d.batch), outc = sidx(d.out_c);
    const std::size_t kk = d.kernel * d.kernel;
#pragma omp parallel for collapse(2) schedule(static) \
    if (worth_it(d.batch * d.out_c * d.out_h * d.out_w * d.in_c * kk))
    for (std::ptrdiff_t bi = 0; bi < batch; ++bi) {
        for (std::ptrdiff_t oi = 0; oi < outc; ++oi) {
            const auto b = static_cast<std::size_t>(bi);
            const auto o = static_cast<std::size_t>(oi);
            const double* xb = x.data() + b * d.in_c * d.in_h * d.in_w;
            const double* wo = w.data() + o * d.in_c * kk;
            double* yo = y.data() + (b * d.out_c + o) * d.out_h * d.out_w;
            for (std::size_t oh = 0; oh < d.out_h; ++oh) {
                const Window wh = window(oh, d.stride, d.padding, d.kernel, d.in_h);
                for (std::size_t ow = 0; ow < d.out_w; ++ow) {
                    const Window ww = window(ow, d.stride, d.padding, d.kernel, d.in_w);
                    double acc = bias[o];
                    for (std::size_t c = 0; c < d.in_c; ++c) {
                        const double* xc = xb + c * d.in_h * d.in_w;
                        const double* wc = wo + c * kk;
                        for (std::size_t kh = wh.lo; kh < wh.hi; ++kh) {
                            const double* xrow = xc + (wh.base + kh - d.padding) * d.in_w;
                            const double* wrow = wc + kh * d.kernel;
                            for (std::size_t kw = ww.lo; kw < ww.hi; ++kw) acc += wrow[kw] * xrow[ww.base + kw - d.padding];
                        }
                    }
                    yo[oh * d.out_w + ow] = acc;
                }
            }
        }
    }
}

void conv2d_backward(const ConvDims& d, In x, In w, In gy, Out gx, Out gw, Out gb) {
    const std::size_t kk = d.kernel * d.kernel;
    const std::size_t in_plane = d.in_h * d.in_w, out_plane = d.out_h * d.out_w;
    const bool par = worth_it(d.batch * d.out_c * out_plane * d.in_c * kk);
    const std::ptrdiff_t outc = sidx(d.out_c);
#pragma omp parallel for schedule(static) if (par)
    for (std::ptrdiff_t oi = 0; oi < outc; ++oi) {
        const auto o = static_cast<std::size_t>(oi);
        double* gwo = gw.data() + o * d.in_c * kk;
        std::fill(gwo, gwo + d.in_c * kk, 0.0);
        double acc_b = 0.0;
        for (std::size_t b = 0; b < d.batch; ++b) {
            const double* xb = x.data() + b * d.in_c * in_plane;
            const double* gyo = gy.data() + (b * d.out_c + o) * out_plane;
            for (std::size_t oh = 0; oh < d.out_h; ++oh) {
                const Window wh = window(oh, d.stride, d.padding, d.kernel, d.in_h);
                for (std::size_t ow = 0; ow < d.out_w; ++ow) {
                    const Window ww = window(ow, d.stride, d.padding, d.kernel, d.in_w);
                    const double g = gyo[oh * d.out_w + ow];
                    acc_b += g;
                    for (std::size_t c = 0; c < d.in_c; ++c) {
                        const double* xc = xb + c * in_plane;
                        double* gwc = gwo + c * kk;
                        for (std::size_t kh = wh.lo; kh < wh.hi; ++kh) {
                            const double* xrow = xc + (wh.base + kh - d.padding) * d.in_w;
                            double* gwrow = gwc + kh * d.kernel;
                            for (std::size_t kw = ww.lo; kw < ww.hi; ++kw) gwrow[kw] += g * xrow[ww.base + kw - d.padding];
                        }
                    }
                }
            }
        }
        gb[o] = acc_b;
    }
    if (gx.empty()) return;
    const std::ptrdiff_t batch = sidx(d.batch);
#pragma omp parallel for schedule(static) if (par)
    for (std::ptrdiff_t bi = 0; bi < batch; ++bi) {
        const auto b = static_cast<std::size_t>(bi);
        double* gxb = gx.data() + b * d.in_c * in_plane;
        std::fill(gxb, gxb + d.in_c * in_plane, 0.0);
        for (std::size_t o = 0; o < d.out_c; ++o) {
            const double* gyo = gy.data() + (b * d.out_c + o) * out_plane;
            const double* wo = w.data() + o * d.in_c * kk;
            for (std::size_t oh = 0; oh < d.out_h; ++oh) {
                const Window wh = window(oh, d.stride, d.padding, d.kernel, d.in_h);
                for (std::size_t ow = 0; ow < d.out_w; ++ow) {
                    const Window ww = window(ow, d.stride, d.padding, d.kernel, d.in_w);
                    const double g = gyo[oh * d.out_w + ow];
                    for (std::size_t c = 0; c < d.in_c; ++c) {
                        double* gxc = gxb + c * in_plane;
                        const double* wc = wo + c * kk;
                        for (std::size_t kh = wh.lo; kh < wh.hi; ++kh) {
                            double* gxrow = gxc + (wh.base + kh - d.padding) * d.in_w;
                            const double* wrow = wc + kh * d.kernel;
                            for (std::size_t kw = ww.lo; kw < ww.hi; ++kw) gxrow[ww.base + kw - d.padding] += g * wrow[kw];
                        }
                    }
                }
            }
        }
    }
}

void maxpool2x2_forward(const PoolDims& d, In x, Out y, std::span<std::uint32_t> argmax) {
    const std::size_t oh_n = d.in_h / 2, ow_n = d.in_w / 2;
    const std::size_t in_sample = d.channels * d.in_h * d.in_w;
    const std::ptrdiff_t batch = sidx(d.batch);
#pragma omp parallel for schedule(static) if (worth_it(d.batch * in_sample))
    for (std::ptrdiff_t bi = 0; bi < batch; ++bi) {
        const auto b = static_cast<std::size_t>(bi);
        const double* xb = x.data() + b * in_sample;
        for (std::size_t c = 0; c < d.channels; ++c) {
            for (std::size_t oh = 0; oh < oh_n; ++oh) {
                for (std::size_t ow = 0; ow < ow_n; ++ow) {
                    std::size_t best = (c * d.in_h + 2 * oh) * d.in_w + 2 * ow;
                    double best_v = xb[best];
                    for (std::size_t dh = 0; dh < 2; ++dh) {
                        for (std::size_t dw = 0; dw < 2; ++dw) {
                            const std::size_t off = (c * d.in_h + 2 * oh + dh) * d.in_w + 2 * ow + dw;
                            if (xb[off] > best_v) {
                                best_v = xb[off];
                                best = off;
                            }
                        }
                    }
                    const std::size_t yi = ((b * d.channels + c) * oh_n + oh) * ow_n + ow;
                    y[yi] = best_v;
                    argmax[yi] = static_cast<std::uint32_t>(best);
                }
            }
        }
    }
}

void maxpool2x2_backward(const PoolDims& d, std::span<const std::uint32_t> argmax, In gy, Out gx) {
    const std::size_t per_out = d.channels * (d.in_h / 2) * (d.in_w / 2);
    const std::size_t per_in = d.channels * d.in_h * d.in_w;
    const std::ptrdiff_t batch = sidx(d.batch);
#pragma omp parallel for schedule(static) if (worth_it(d.batch * per_in))
    for (std::ptrdiff_t bi = 0; bi < batch; ++bi) {
        const auto b = static_cast<std::size_t>(bi);
        double* gxb = gx.data() + b * per_in;
        std::fill(gxb, gxb + per_in, 0.0);
        for (std::size_t j = 0; j < per_out; ++j) gxb[argmax[b * per_out + j]] += gy[b * per_out + j];
    }
}

void upsample2x2_forward(const PoolDims& d, In x, Out y) {
    const std::size_t oh_n = d.in_h * 2, ow_n = d.in_w * 2;
    const std::ptrdiff_t planes = sidx(d.batch * d.channels);
#pragma omp parallel for schedule(static) if (worth_it(d.batch * d.channels * oh_n * ow_n))
    for (std::ptrdiff_t pi = 0; pi < planes; ++pi) {
        const auto p = static_cast<std::size_t>(pi);
        const double* xp = x.data() + p * d.in_h * d.in_w;
        double* yp = y.data() + p * oh_n * ow_n;
        for (std::size_t oh = 0; oh < oh_n; ++oh)
            for (std::size_t ow = 0; ow < ow_n; ++ow) yp[oh * ow_n + ow] = xp[(oh / 2) * d.in_w + ow / 2];
    }
}

void upsample2x2_backward(const PoolDims& d, In gy, Out gx) {
    const std::size_t ow_n = d.in_w * 2, oh_n = d.in_h * 2;
    const std::ptrdiff_t planes = sidx(d.batch * d.channels);
#pragma omp parallel for schedule(static) if (worth_it(d.batch * d.channels * oh_n * ow_n))
    for (std::ptrdiff_t pi = 0; pi < planes; ++pi) {
        const auto p = static_cast<std::size_t>(pi);
        const double* gyp = gy.data() + p * oh_n * ow_n;
        double* gxp = gx.data() + p * d.in_h * d.in_w;
        for (std::size_t h = 0; h < d.in_h; ++h)
            for (std::size_t w = 0; w < d.in_w; ++w) {
                const std::size_t base = 2 * h * ow_n + 2 * w;
                gxp[h * d.in_w + w] = gyp[base] + gyp[base + 1] + gyp[base + ow_n] + gyp[base + ow_n + 1];
            }
    }
}

void activation_forward(const Activation& a, In x, Out y) {
    const std::ptrdiff_t n = sidx(x.size());
    switch (a.fn) {
        case ActivationFn::relu:
#pragma omp parallel for schedule(static) if (worth_it(x.size()))
            for (std::ptrdiff_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
            break;
        case ActivationFn::leaky_relu:
#pragma omp parallel for schedule(static) if (worth_it(x.size()))
            for (std::ptrdiff_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : a.alpha * x[i];
            break;
        case ActivationFn::sigmoid:
#pragma omp parallel for schedule(static) if (worth_it(x.size()))
            for (std::ptrdiff_t i = 0; i < n; ++i) y[i] = 1.0 / (1.0 + std::exp(-x[i]));
            break;
    }
}

void activation_backward(const Activation& a, In x, In y, In gy, Out gx) {
    const std::ptrdiff_t n = sidx(x.size());
    switch (a.fn) {
        case ActivationFn::relu:
#pragma omp parallel for schedule(static) if (worth_it(x.size()))
            for (std::ptrdiff_t i = 0; i < n; ++i) gx[i] = x[i] > 0.0 ? gy[i] : 0.0;
            break;
        case ActivationFn::leaky_relu:
#pragma omp parallel for schedule(static) if (worth_it(x.size()))
            for (std::ptrdiff_t i = 0; i < n; ++i) gx[i] = x[i] > 0.0 ? gy[i] : a.alpha * gy[i];
            break;
        case ActivationFn::sigmoid:
#pragma omp parallel for schedule(static) if (worth_it(x.size()))
            for (std::ptrdiff_t i = 0; i < n; ++i) gx[i] = gy[i] * y[i] * (1.0 - y[i]);
            break;
    }
}

void row_squared_error(std::size_t rows, std::size_t cols, In a, In b, Out out) {
    const std::ptrdiff_t n = sidx(rows);
#pragma omp parallel for schedule(static) if (worth_it(rows * cols))
    for (std::ptrdiff_t ri = 0; ri < n; ++ri) {
        const auto r = static_cast<std::size_t>(ri);
        double acc = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            const double diff = a[r * cols + c] - b[r * cols + c];
            acc += diff * diff;
        }
        out[r] = acc;
    }
}

void nearest_centroid(std::size_t n, std::size_t k, std::size_t dim, In points, In centroids,
                      std::span<int> assign, Out sq_dist) {
    const std::ptrdiff_t np = sidx(n);
#pragma omp parallel for schedule(static) if (worth_it(n * k * dim))
    for (std::ptrdiff_t ii = 0; ii < np; ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        const double* p = points.data() + i * dim;
        double best = std::numeric_limits<double>::infinity();
        int best_j = 0;
        for (std::size_t j = 0; j < k; ++j) {
            const double* cj = centroids.data() + j * dim;
            double acc = 0.0;
            for (std::size_t f = 0; f < dim; ++f) {
                const double diff = p[f] - cj[f];
                acc += diff * diff;
            }
            if (acc < best) {
                best = acc;
                best_j = static_cast<int>(j);
            }
        }
        assign[i] = best_j;
        sq_dist[i] = best;
    }
}

}  // namespace bae::kernels::parallel
