// The OpenMP kernels must reproduce the serial reference bit for bit.

#include <gtest/gtest.h>

#include <cstring>
#include <vector>

#include "bae/kernels.hpp"
#include "bae/rng.hpp"

using namespace bae;
namespace ks = bae::kernels::serial;
namespace kp = bae::kernels::parallel;

namespace {

std::vector<double> rand_vec(std::size_t n, Rng& rng) {
    std::vector<double> v(n);
    for (double& x : v) x = 2.0 * uniform01(rng) - 1.0;
    return v;
}

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) { return lo + uniform_index(rng, hi - lo + 1); }

}  // namespace

TEST(Kernels, DenseMatchesSerial) {
    Rng rng(1);
    for (int trial = 0; trial < 20; ++trial) {
        // large enough trials cross the parallel threshold
        const kernels::DenseDims d{pick(rng, 1, 64), pick(rng, 1, 64), pick(rng, 1, 64)};
        auto x = rand_vec(d.batch * d.in, rng), w = rand_vec(d.out * d.in, rng), b = rand_vec(d.out, rng);
        auto gy = rand_vec(d.batch * d.out, rng);
        std::vector<double> y1(d.batch * d.out), y2(y1.size());
        ks::dense_forward(d, x, w, b, y1);
        kp::dense_forward(d, x, w, b, y2);
        EXPECT_TRUE(bitwise_equal(y1, y2));
        std::vector<double> gx1(x.size()), gx2(x.size()), gw1(w.size()), gw2(w.size()), gb1(b.size()), gb2(b.size());
        ks::dense_backward(d, x, w, gy, gx1, gw1, gb1);
        kp::dense_backward(d, x, w, gy, gx2, gw2, gb2);
        EXPECT_TRUE(bitwise_equal(gx1, gx2));
        EXPECT_TRUE(bitwise_equal(gw1, gw2));
        EXPECT_TRUE(bitwise_equal(gb1, gb2));
    }
}

TEST(Kernels, Conv2dMatchesSerial) {
    Rng rng(2);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t k = pick(rng, 1, 5), s = pick(rng, 1, 3), p = pick(rng, 0, 4);
        const std::size_t h = pick(rng, k > 2 * p ? k - 2 * p : 1, 20), w = pick(rng, k > 2 * p ? k - 2 * p : 1, 20);
        kernels::ConvDims d{pick(rng, 1, 6), pick(rng, 1, 4), h, w, pick(rng, 1, 6), 0, 0, k, s, p};
        d.out_h = (h + 2 * p - k) / s + 1;
        d.out_w = (w + 2 * p - k) / s + 1;
        auto x = rand_vec(d.batch * d.in_c * h * w, rng);
        auto wt = rand_vec(d.out_c * d.in_c * k * k, rng);
        auto b = rand_vec(d.out_c, rng);
        auto gy = rand_vec(d.batch * d.out_c * d.out_h * d.out_w, rng);
        std::vector<double> y1(gy.size()), y2(gy.size());
        ks::conv2d_forward(d, x, wt, b, y1);
        kp::conv2d_forward(d, x, wt, b, y2);
        EXPECT_TRUE(bitwise_equal(y1, y2)) << "trial " << trial;
        std::vector<double> gx1(x.size()), gx2(x.size()), gw1(wt.size()), gw2(wt.size()), gb1(b.size()), gb2(b.size());
        ks::conv2d_backward(d, x, wt, gy, gx1, gw1, gb1);
        kp::conv2d_backward(d, x, wt, gy, gx2, gw2, gb2);
        EXPECT_TRUE(bitwise_equal(gx1, gx2)) << "trial " << trial;
        EXPECT_TRUE(bitwise_equal(gw1, gw2)) << "trial " << trial;
        EXPECT_TRUE(bitwise_equal(gb1, gb2)) << "trial " << trial;
    }
}

TEST(Kernels, PoolingAndUpsampleMatchSerial) {
    Rng rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        const kernels::PoolDims d{pick(rng, 1, 40), pick(rng, 1, 8), pick(rng, 2, 17), pick(rng, 2, 17)};
        auto x = rand_vec(d.batch * d.channels * d.in_h * d.in_w, rng);
        const std::size_t pooled = d.batch * d.channels * (d.in_h / 2) * (d.in_w / 2);
        std::vector<double> y1(pooled), y2(pooled);
        std::vector<std::uint32_t> a1(pooled), a2(pooled);
        ks::maxpool2x2_forward(d, x, y1, a1);
        kp::maxpool2x2_forward(d, x, y2, a2);
        EXPECT_TRUE(bitwise_equal(y1, y2));
        EXPECT_EQ(a1, a2);
        auto gy = rand_vec(pooled, rng);
        std::vector<double> g1(x.size()), g2(x.size());
        ks::maxpool2x2_backward(d, a1, gy, g1);
        kp::maxpool2x2_backward(d, a2, gy, g2);
        EXPECT_TRUE(bitwise_equal(g1, g2));

        std::vector<double> u1(x.size() * 4), u2(x.size() * 4);
        ks::upsample2x2_forward(d, x, u1);
        kp::upsample2x2_forward(d, x, u2);
        EXPECT_TRUE(bitwise_equal(u1, u2));
        auto gu = rand_vec(u1.size(), rng);
        std::vector<double> h1(x.size()), h2(x.size());
        ks::upsample2x2_backward(d, gu, h1);
        kp::upsample2x2_backward(d, gu, h2);
        EXPECT_TRUE(bitwise_equal(h1, h2));
    }
}

TEST(Kernels, ActivationsRowErrorsAndAssignmentMatchSerial) {
    Rng rng(4);
    const std::size_t n = 50000;
    auto x = rand_vec(n, rng), gy = rand_vec(n, rng);
    for (const Activation a : {Activation{ActivationFn::relu, 0.0}, Activation{ActivationFn::leaky_relu, 0.1},
                               Activation{ActivationFn::sigmoid, 0.0}}) {
        std::vector<double> y1(n), y2(n), g1(n), g2(n);
        ks::activation_forward(a, x, y1);
        kp::activation_forward(a, x, y2);
        EXPECT_TRUE(bitwise_equal(y1, y2));
        ks::activation_backward(a, x, y1, gy, g1);
        kp::activation_backward(a, x, y1, gy, g2);
        EXPECT_TRUE(bitwise_equal(g1, g2));
    }
    std::vector<double> e1(500), e2(500);
    ks::row_squared_error(500, 100, x, gy, e1);
    kp::row_squared_error(500, 100, x, gy, e2);
    EXPECT_TRUE(bitwise_equal(e1, e2));

    auto cents = rand_vec(7 * 10, rng);
    std::vector<int> as1(5000), as2(5000);
    std::vector<double> d1(5000), d2(5000);
    ks::nearest_centroid(5000, 7, 10, x, cents, as1, d1);
    kp::nearest_centroid(5000, 7, 10, x, cents, as2, d2);
    EXPECT_EQ(as1, as2);
    EXPECT_TRUE(bitwise_equal(d1, d2));
}
