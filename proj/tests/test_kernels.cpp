#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>

#include "f3kit/kernels.hpp"
#include "f3kit/rng.hpp"
#include "oracles.hpp"

using namespace f3kit;
using kernels::ConvDims;

// The vector variants must reproduce the scalar reference bit-for-bit; these
// tests fail on any single-ulp divergence.

namespace {

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() &&
           std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

std::vector<double> randvec(size_t n, Rng& rng, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(lo, hi);
    return v;
}

}  // namespace

TEST_CASE("avx2 conv kernels match the scalar reference bitwise") {
    const kernels::Table* avx2 = kernels::avx2_table();
    if (!avx2) return;  // nothing to compare on this machine
    const kernels::Table& ref = kernels::scalar_table();

    Rng rng(101);
    struct Cfg {
        int n, ci, hi, wi, co, k, stride, pad;
    };
    for (const Cfg& c :
         {Cfg{2, 3, 9, 9, 4, 3, 1, 1}, Cfg{1, 4, 12, 17, 3, 3, 2, 1}, Cfg{2, 2, 7, 5, 2, 1, 1, 0},
          Cfg{1, 1, 3, 3, 1, 3, 1, 1}, Cfg{2, 5, 10, 24, 6, 3, 1, 0},
          Cfg{1, 3, 16, 16, 2, 1, 2, 0}}) {
        int ho = (c.hi + 2 * c.pad - c.k) / c.stride + 1;
        int wo = (c.wi + 2 * c.pad - c.k) / c.stride + 1;
        ConvDims d{c.n, c.ci, c.hi, c.wi, c.co, ho, wo, c.k, c.stride, c.pad};

        auto x = randvec(static_cast<size_t>(c.n) * c.ci * c.hi * c.wi, rng);
        auto w = randvec(static_cast<size_t>(c.co) * c.ci * c.k * c.k, rng);
        auto b = randvec(c.co, rng);
        auto dy = randvec(static_cast<size_t>(c.n) * c.co * ho * wo, rng);

        std::vector<double> y0(dy.size()), y1(dy.size());
        ref.conv2d_fwd(d, x.data(), w.data(), b.data(), y0.data());
        avx2->conv2d_fwd(d, x.data(), w.data(), b.data(), y1.data());
        CHECK(bitwise_equal(y0, y1));

        std::vector<double> dx0(x.size(), 0.0), dx1(x.size(), 0.0);
        ref.conv2d_dx(d, dy.data(), w.data(), dx0.data());
        avx2->conv2d_dx(d, dy.data(), w.data(), dx1.data());
        CHECK(bitwise_equal(dx0, dx1));

        std::vector<double> dw0(w.size(), 0.0), dw1(w.size(), 0.0);
        std::vector<double> db0(c.co, 0.0), db1(c.co, 0.0);
        ref.conv2d_dw(d, dy.data(), x.data(), dw0.data(), db0.data());
        avx2->conv2d_dw(d, dy.data(), x.data(), dw1.data(), db1.data());
        CHECK(bitwise_equal(dw0, dw1));
        CHECK(bitwise_equal(db0, db1));
    }
}

TEST_CASE("avx2 elementwise kernels match the scalar reference bitwise") {
    const kernels::Table* avx2 = kernels::avx2_table();
    if (!avx2) return;
    const kernels::Table& ref = kernels::scalar_table();

    Rng rng(103);
    for (int64_t n : {1, 3, 4, 17, 256, 1001}) {
        auto a = randvec(n, rng);
        auto b = randvec(n, rng);
        a[0] = -0.0;  // sign-of-zero edge
        std::vector<double> y0(n), y1(n);

        ref.add(a.data(), b.data(), y0.data(), n);
        avx2->add(a.data(), b.data(), y1.data(), n);
        CHECK(bitwise_equal(y0, y1));

        ref.mul(a.data(), b.data(), y0.data(), n);
        avx2->mul(a.data(), b.data(), y1.data(), n);
        CHECK(bitwise_equal(y0, y1));

        ref.relu(a.data(), y0.data(), n);
        avx2->relu(a.data(), y1.data(), n);
        CHECK(bitwise_equal(y0, y1));

        auto acc0 = randvec(n, rng);
        auto acc1 = acc0;
        ref.relu_dx(a.data(), b.data(), acc0.data(), n);
        avx2->relu_dx(a.data(), b.data(), acc1.data(), n);
        CHECK(bitwise_equal(acc0, acc1));

        ref.mul_acc(a.data(), b.data(), acc0.data(), n);
        avx2->mul_acc(a.data(), b.data(), acc1.data(), n);
        CHECK(bitwise_equal(acc0, acc1));

        ref.axpy(0.37, a.data(), acc0.data(), n);
        avx2->axpy(0.37, a.data(), acc1.data(), n);
        CHECK(bitwise_equal(acc0, acc1));
    }
}

TEST_CASE("scalar conv gradients are consistent with the forward pass") {
    // dw and dx against a tiny hand-checkable case: 1x1 kernel, identity-ish
    const kernels::Table& ref = kernels::scalar_table();
    ConvDims d{1, 1, 2, 2, 1, 2, 2, 1, 1, 0};
    double x[4] = {1, 2, 3, 4};
    double w[1] = {2.0};
    double b[1] = {0.5};
    double y[4];
    ref.conv2d_fwd(d, x, w, b, y);
    CHECK(y[0] == 2.5);
    CHECK(y[3] == 8.5);

    double dy[4] = {1, 1, 1, 1};
    double dx[4] = {0, 0, 0, 0};
    ref.conv2d_dx(d, dy, w, dx);
    for (double v : dx) CHECK(v == 2.0);

    double dw[1] = {0};
    double db[1] = {0};
    ref.conv2d_dw(d, dy, x, dw, db);
    CHECK(dw[0] == 10.0);
    CHECK(db[0] == 4.0);
}
