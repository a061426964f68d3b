#include <algorithm>
#include <cmath>
#include <limits>

#include "bae/kernels.hpp"

namespace bae::kernels::serial {

void dense_forward(const DenseDims& d, In x, In w, In bias, Out y) {
    for (std::size_t b = 0; b < d.batch; ++b) {
        for (std::size_t o = 0; o < d.out; ++o) {
            double acc = bias[o];
            for (std::size_t i = 0; i < d.in; ++i) acc += w[o * d.in + i] * x[b * d.in + i];
            y[b * d.out + o] = acc;
        }
    }
}

void dense_backward(const DenseDims& d, In x, In w, In gy, Out gx, Out gw, Out gb) {
    for (std::size_t o = 0; o < d.out; ++o) {
        double acc_b = 0.0;
        for (std::size_t b = 0; b < d.batch; ++b) acc_b += gy[b * d.out + o];
        gb[o] = acc_b;
        for (std::size_t i = 0; i < d.in; ++i) {
            double acc = 0.0;
            for (std::size_t b = 0; b < d.batch; ++b) acc += gy[b * d.out + o] * x[b * d.in + i];
            gw[o * d.in + i] = acc;
        }
    }
    if (gx.empty()) return;
    for (std::size_t b = 0; b < d.batch; ++b) {
        for (std::size_t i = 0; i < d.in; ++i) {
            double acc = 0.0;
            for (std::size_t o = 0; o < d.out; ++o) acc += gy[b * d.out + o] * w[o * d.in + i];
            gx[b * d.in + i] = acc;
        }
    }
}

void conv2d_forward(const ConvDims& d, In x, In w, In bias, Out y) {
    const auto pad = static_cast<long>(d.padding);
    for (std::size_t b = 0; b < d.batch; ++b) {
        for (std::size_t o = 0; o < d.out_c; ++o) {
            for (std::size_t oh = 0; oh < d.out_h; ++oh) {
                for (std::size_t ow = 0; ow < d.out_w; ++ow) {
                    double acc = bias[o];
                    for (std::size_t c = 0; c < d.in_c; ++c) {
                        for (std::size_t kh = 0; kh < d.kernel; ++kh) {
                            const long ih = static_cast<long>(oh * d.stride + kh) - pad;
                            if (ih < 0 || ih >= static_cast<long>(d.in_h)) continue;
                            for (std::size_t kw = 0; kw < d.kernel; ++kw) {
                                const long iw = static_cast<long>(ow * d.stride + kw) - pad;
                                if (iw < 0 || iw >= static_cast<long>(d.in_w)) continue;
                                acc += w[((o * d.in_c + c) * d.kernel + kh) * d.kernel + kw] *
                                       x[((b * d.in_c + c) * d.in_h + static_cast<std::size_t>(ih)) * d.in_w +
                                         static_cast<std::size_t>(iw)];
                            }
                        }
                    }
                    y[((b * d.out_c + o) * d.out_h + oh) * d.out_w + ow] = acc;
                }
            }
        }
    }
}

void conv2d_backward(const ConvDims& d, In x, In w, In gy, Out gx, Out gw, Out gb) {
    const auto pad = static_cast<long>(d.padding);
    std::fill(gw.begin(), gw.end(), 0.0);
    std::fill(gb.begin(), gb.end(), 0.0);
    if (!gx.empty()) std::fill(gx.begin(), gx.end(), 0.0);
    for (std::size_t o = 0; o < d.out_c; ++o) {
        for (std::size_t b = 0; b < d.batch; ++b) {
            for (std::size_t oh = 0; oh < d.out_h; ++oh) {
                for (std::size_t ow = 0; ow < d.out_w; ++ow) {
                    const double g = gy[((b * d.out_c + o) * d.out_h + oh) * d.out_w + ow];
                    gb[o] += g;
                    for (std::size_t c = 0; c < d.in_c; ++c) {
                        for (std::size_t kh = 0; kh < d.kernel; ++kh) {
                            const long ih = static_cast<long>(oh * d.stride + kh) - pad;
                            if (ih < 0 || ih >= static_cast<long>(d.in_h)) continue;
                            for (std::size_t kw = 0; kw < d.kernel; ++kw) {
                                const long iw = static_cast<long>(ow * d.stride + kw) - pad;
                                if (iw < 0 || iw >= static_cast<long>(d.in_w)) continue;
                                const std::size_t xi = ((b * d.in_c + c) * d.in_h + static_cast<std::size_t>(ih)) *
                                                           d.in_w +
                                                       static_cast<std::size_t>(iw);
                                const std::size_t wi = ((o * d.in_c + c) * d.kernel + kh) * d.kernel + kw;
                                gw[wi] += g * x[xi];
                            }
                        }
                    }
                }
            }
        }
    }
    if (gx.empty()) return;
    for (std::size_t b = 0; b < d.batch; ++b) {
        for (std::size_t o = 0; o < d.out_c; ++o) {
            for (std::size_t oh = 0; oh < d.out_h; ++oh) {
                for (std::size_t ow = 0; ow < d.out_w; ++ow) {
                    const double g = gy[((b * d.out_c + o) * d.out_h + oh) * d.out_w + ow];
                    for (std::size_t c = 0; c < d.in_c; ++c) {
                        for (std::size_t kh = 0; kh < d.kernel; ++kh) {
                            const long ih = static_cast<long>(oh * d.stride + kh) - pad;
                            if (ih < 0 || ih >= static_cast<long>(d.in_h)) continue;
                            for (std::size_t kw = 0; kw < d.kernel; ++kw) {
                                const long iw = static_cast<long>(ow * d.stride + kw) - pad;
                                if (iw < 0 || iw >= static_cast<long>(d.in_w)) continue;
                                gx[((b * d.in_c + c) * d.in_h + static_cast<std::size_t>(ih)) * d.in_w +
                                   static_cast<std::size_t>(iw)] +=
                                    g * w[((o * d.in_c + c) * d.kernel + kh) * d.kernel + kw];
                            }
                        }
                    }
                }
            }
        }
    }
}

void maxpool2x2_forward(const PoolDims& d, In x, Out y, std::span<std::uint32_t> argmax) {
    const std::size_t oh_n = d.in_h / 2, ow_n = d.in_w / 2;
    for (std::size_t b = 0; b < d.batch; ++b) {
        for (std::size_t c = 0; c < d.channels; ++c) {
            for (std::size_t oh = 0; oh < oh_n; ++oh) {
                for (std::size_t ow = 0; ow < ow_n; ++ow) {
                    std::size_t best = (c * d.in_h + 2 * oh) * d.in_w + 2 * ow;
                    double best_v = x[b * d.channels * d.in_h * d.in_w + best];
                    for (std::size_t dh = 0; dh < 2; ++dh) {
                        for (std::size_t dw = 0; dw < 2; ++dw) {
                            const std::size_t off = (c * d.in_h + 2 * oh + dh) * d.in_w + 2 * ow + dw;
                            const double v = x[b * d.channels * d.in_h * d.in_w + off];
                            if (v > best_v) {
                                best_v = v;
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
    std::fill(gx.begin(), gx.end(), 0.0);
    const std::size_t per_out = d.channels * (d.in_h / 2) * (d.in_w / 2);
    const std::size_t per_in = d.channels * d.in_h * d.in_w;
    for (std::size_t b = 0; b < d.batch; ++b) {
        for (std::size_t j = 0; j < per_out; ++j) gx[b * per_in + argmax[b * per_out + j]] += gy[b * per_out + j];
    }
}

void upsample2x2_forward(const PoolDims& d, In x, Out y) {
    const std::size_t oh_n = d.in_h * 2, ow_n = d.in_w * 2;
    for (std::size_t b = 0; b < d.batch; ++b)
        for (std::size_t c = 0; c < d.channels; ++c)
            for (std::size_t oh = 0; oh < oh_n; ++oh)
                for (std::size_t ow = 0; ow < ow_n; ++ow)
                    y[((b * d.channels + c) * oh_n + oh) * ow_n + ow] =
                        x[((b * d.channels + c) * d.in_h + oh / 2) * d.in_w + ow / 2];
}

void upsample2x2_backward(const PoolDims& d, In gy, Out gx) {
    const std::size_t ow_n = d.in_w * 2, oh_n = d.in_h * 2;
    for (std::size_t b = 0; b < d.batch; ++b)
        for (std::size_t c = 0; c < d.channels; ++c)
            for (std::size_t h = 0; h < d.in_h; ++h)
                for (std::size_t w = 0; w < d.in_w; ++w) {
                    const std::size_t base = ((b * d.channels + c) * oh_n + 2 * h) * ow_n + 2 * w;
                    gx[((b * d.channels + c) * d.in_h + h) * d.in_w + w] =
                        gy[base] + gy[base + 1] + gy[base + ow_n] + gy[base + ow_n + 1];
                }
}

void activation_forward(const Activation& a, In x, Out y) {
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double v = x[i];
        switch (a.fn) {
            case ActivationFn::relu: y[i] = v > 0.0 ? v : 0.0; break;
            case ActivationFn::leaky_relu: y[i] = v > 0.0 ? v : a.alpha * v; break;
            case ActivationFn::sigmoid: y[i] = 1.0 / (1.0 + std::exp(-v)); break;
        }
    }
}

void activation_backward(const Activation& a, In x, In y, In gy, Out gx) {
    for (std::size_t i = 0; i < x.size(); ++i) {
        switch (a.fn) {
            case ActivationFn::relu: gx[i] = x[i] > 0.0 ? gy[i] : 0.0; break;
            case ActivationFn::leaky_relu: gx[i] = x[i] > 0.0 ? gy[i] : a.alpha * gy[i]; break;
            case ActivationFn::sigmoid: gx[i] = gy[i] * y[i] * (1.0 - y[i]); break;
        }
    }
}

void row_squared_error(std::size_t rows, std::size_t cols, In a, In b, Out out) {
    for (std::size_t r = 0; r < rows; ++r) {
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
    for (std::size_t i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        int best_j = 0;
        for (std::size_t j = 0; j < k; ++j) {
            double acc = 0.0;
            for (std::size_t f = 0; f < dim; ++f) {
                const double diff = points[i * dim + f] - centroids[j * dim + f];
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

}  // namespace bae::kernels::serial
