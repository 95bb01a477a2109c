#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "f3kit/error.hpp"
#include "f3kit/tensor.hpp"
#include "oracles.hpp"

using namespace f3kit;

TEST_CASE("conv2d 1x1 identity kernel") {
    Rng rng(7);
    Tensor x = oracle::random_tensor({1, 1, 4, 5}, rng);
    Tensor w = Tensor::from_vector({1, 1, 1, 1}, {1.0});
    Tensor b = Tensor::zeros({1, 1, 1, 1});
    Tensor y = conv2d(x, w, b, 1, 0);
    REQUIRE(y.shape() == x.shape());
    for (int64_t i = 0; i < x.numel(); ++i) CHECK(y.data()[i] == x.data()[i]);
}

TEST_CASE("conv2d all-ones 3x3 on constant 2.0 gives 18 in the interior") {
    Tensor x = Tensor::full({1, 1, 5, 5}, 2.0);
    Tensor w = Tensor::full({1, 1, 3, 3}, 1.0);
    Tensor b = Tensor::zeros({1, 1, 1, 1});
    Tensor y = conv2d(x, w, b, 1, 0);
    REQUIRE(y.shape() == Shape{1, 1, 3, 3});
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) CHECK(y.at(0, 0, i, j) == doctest::Approx(18.0).epsilon(1e-15));
    }
}

TEST_CASE("conv2d matches the 6-loop oracle on random shapes") {
    Rng rng(11);
    struct Cfg {
        Shape x;
        int co, k, stride, pad;
    };
    for (const Cfg& c : {Cfg{{2, 4, 9, 9}, 3, 3, 1, 1}, Cfg{{2, 3, 8, 7}, 4, 3, 2, 1},
                         Cfg{{1, 2, 6, 9}, 2, 1, 1, 0}, Cfg{{2, 4, 9, 9}, 5, 3, 1, 0}}) {
        Tensor x = oracle::random_tensor(c.x, rng);
        Tensor w = oracle::random_tensor({c.co, c.x.c, c.k, c.k}, rng);
        Tensor b = oracle::random_tensor({1, c.co, 1, 1}, rng);
        Tensor got = conv2d(x, w, b, c.stride, c.pad);
        Tensor want = oracle::conv2d(x, w, b, c.stride, c.pad);
        REQUIRE(got.shape() == want.shape());
        for (int64_t i = 0; i < got.numel(); ++i) {
            CHECK(got.data()[i] == doctest::Approx(want.data()[i]).epsilon(1e-10));
        }
    }
}

TEST_CASE("conv2d rejects mismatched channels with both shapes named") {
    Tensor x = Tensor::zeros({1, 3, 8, 8});
    Tensor w = Tensor::zeros({4, 2, 3, 3});
    Tensor b = Tensor::zeros({1, 4, 1, 1});
    try {
        conv2d(x, w, b, 1, 1);
        FAIL("expected an error");
    } catch (const Error& e) {
        std::string msg = e.what();
        CHECK(msg.find("(1,3,8,8)") != std::string::npos);
        CHECK(msg.find("(4,2,3,3)") != std::string::npos);
    }
}

TEST_CASE("conv2d gradients match finite differences") {
    Rng rng(23);
    Tensor x = oracle::random_tensor({2, 2, 5, 5}, rng);
    Tensor w = oracle::random_tensor({3, 2, 3, 3}, rng);
    Tensor b = oracle::random_tensor({1, 3, 1, 1}, rng);
    double ex = grad_check(
        [&](const Tensor& t) { return reduce_sum(conv2d(t, w, b, 1, 1)); }, x, 1e-6);
    CHECK(ex < 1e-5);
    double ew = grad_check(
        [&](const Tensor& t) { return reduce_sum(conv2d(x, t, b, 2, 1)); }, w, 1e-6);
    CHECK(ew < 1e-5);
    double eb = grad_check(
        [&](const Tensor& t) { return reduce_sum(conv2d(x, w, t, 1, 0)); }, b, 1e-6);
    CHECK(eb < 1e-5);
}

TEST_CASE("batch_norm train mode on standardized input is the identity") {
    Rng rng(3);
    Shape s{4, 3, 6, 6};
    std::vector<double> v(s.numel());
    for (auto& x : v) x = rng.normal();
    // standardize each channel exactly
    int64_t plane = static_cast<int64_t>(s.h) * s.w;
    int64_t m = s.n * plane;
    for (int c = 0; c < s.c; ++c) {
        double mu = 0, var = 0;
        for (int n = 0; n < s.n; ++n) {
            for (int64_t i = 0; i < plane; ++i) mu += v[(n * s.c + c) * plane + i];
        }
        mu /= m;
        for (int n = 0; n < s.n; ++n) {
            for (int64_t i = 0; i < plane; ++i) {
                auto& x = v[(n * s.c + c) * plane + i];
                x -= mu;
                var += x * x;
            }
        }
        var /= m;
        for (int n = 0; n < s.n; ++n) {
            for (int64_t i = 0; i < plane; ++i) v[(n * s.c + c) * plane + i] /= std::sqrt(var);
        }
    }
    Tensor x = Tensor::from_vector(s, v);
    Tensor gamma = Tensor::full({1, 3, 1, 1}, 1.0);
    Tensor beta = Tensor::zeros({1, 3, 1, 1});
    BnStats running = BnStats::make(3);
    Tensor y = batch_norm(x, gamma, beta, BnMode::train, running, 0.1, 1e-9);
    for (int64_t i = 0; i < s.numel(); ++i) {
        CHECK(std::fabs(y.data()[i] - x.data()[i]) < 1e-6);
    }
}

TEST_CASE("batch_norm with zero gamma emits beta everywhere") {
    Rng rng(5);
    Tensor x = oracle::random_tensor({2, 2, 3, 3}, rng, -5.0, 5.0);
    Tensor gamma = Tensor::zeros({1, 2, 1, 1});
    Tensor beta = Tensor::from_vector({1, 2, 1, 1}, {0.25, -1.5});
    BnStats running = BnStats::make(2);
    Tensor y = batch_norm(x, gamma, beta, BnMode::train, running);
    for (int n = 0; n < 2; ++n) {
        for (int c = 0; c < 2; ++c) {
            for (int i = 0; i < 3; ++i) {
                for (int j = 0; j < 3; ++j) {
                    CHECK(y.at(n, c, i, j) == beta.data()[c]);
                }
            }
        }
    }
}

TEST_CASE("batch_norm rejects non-positive eps") {
    Tensor x = Tensor::zeros({1, 1, 2, 2});
    Tensor gamma = Tensor::full({1, 1, 1, 1}, 1.0);
    Tensor beta = Tensor::zeros({1, 1, 1, 1});
    BnStats running = BnStats::make(1);
    CHECK_THROWS_AS(batch_norm(x, gamma, beta, BnMode::train, running, 0.1, 0.0), Error);
}

TEST_CASE("batch_norm gradient check on (2,3,4,4)") {
    Rng rng(17);
    Tensor x = oracle::random_tensor({2, 3, 4, 4}, rng);
    Tensor gamma = oracle::random_tensor({1, 3, 1, 1}, rng, 0.5, 1.5);
    Tensor beta = oracle::random_tensor({1, 3, 1, 1}, rng);
    for (BnMode mode : {BnMode::train, BnMode::eval}) {
        auto f = [&](const Tensor& t) {
            BnStats running = BnStats::make(3);
            running.mean = {0.1, -0.2, 0.05};
            running.var = {1.1, 0.9, 1.3};
            // weight the output so the gradient is not constant
            Tensor y = batch_norm(t, gamma, beta, mode, running);
            return reduce_sum(mul(y, y));
        };
        CHECK(grad_check(f, x, 1e-6) < 1e-5);
    }
    auto fg = [&](const Tensor& t) {
        BnStats running = BnStats::make(3);
        Tensor y = batch_norm(x, t, beta, BnMode::train, running);
        return reduce_sum(mul(y, y));
    };
    CHECK(grad_check(fg, gamma, 1e-6) < 1e-5);
    auto fb = [&](const Tensor& t) {
        BnStats running = BnStats::make(3);
        Tensor y = batch_norm(x, gamma, t, BnMode::train, running);
        return reduce_sum(mul(y, y));
    };
    CHECK(grad_check(fb, beta, 1e-6) < 1e-5);
}

TEST_CASE("batch_norm running stats update by exponential moving average") {
    Tensor x = Tensor::full({1, 1, 2, 2}, 3.0);
    Tensor gamma = Tensor::full({1, 1, 1, 1}, 1.0);
    Tensor beta = Tensor::zeros({1, 1, 1, 1});
    BnStats running = BnStats::make(1);
    batch_norm(x, gamma, beta, BnMode::train, running, 0.5);
    CHECK(running.mean[0] == doctest::Approx(1.5));   // 0.5*0 + 0.5*3
    CHECK(running.var[0] == doctest::Approx(0.5));    // 0.5*1 + 0.5*0
}

TEST_CASE("elementwise basics") {
    Rng rng(9);
    Tensor x = oracle::random_tensor({1, 2, 3, 4}, rng);
    Tensor z = Tensor::zeros({1, 2, 3, 4});
    Tensor m = mul(x, z);
    for (int64_t i = 0; i < m.numel(); ++i) CHECK(m.data()[i] == 0.0);
    CHECK(sigmoid(Tensor::scalar(0.0)).item() == doctest::Approx(0.5).epsilon(1e-15));
    CHECK_THROWS_AS(add(x, Tensor::zeros({1, 2, 4, 3})), Error);

    Tensor a = oracle::random_tensor({2, 2, 3, 3}, rng);
    Tensor b = oracle::random_tensor({2, 2, 3, 3}, rng);
    CHECK(grad_check([&](const Tensor& t) { return reduce_sum(mul(add(t, b), t)); }, a, 1e-6) <
          1e-5);
    CHECK(grad_check([&](const Tensor& t) { return reduce_sum(mul(a, t)); }, b, 1e-6) < 1e-5);
    CHECK(grad_check([&](const Tensor& t) { return reduce_sum(relu(t)); }, a, 1e-6) < 1e-5);
    CHECK(grad_check([&](const Tensor& t) { return reduce_sum(sigmoid(t)); }, a, 1e-6) < 1e-6);
}

TEST_CASE("bilinear_resize of a constant image is that constant") {
    Tensor x = Tensor::full({1, 1, 3, 5}, 0.731);
    for (auto [h, w] : {std::pair{7, 7}, {1, 1}, {6, 10}, {2, 9}}) {
        Tensor y = bilinear_resize(x, h, w);
        for (int64_t i = 0; i < y.numel(); ++i) CHECK(y.data()[i] == 0.731);
    }
}

TEST_CASE("bilinear_resize identity size is bitwise identity") {
    Rng rng(13);
    Tensor x = oracle::random_tensor({2, 3, 4, 6}, rng);
    Tensor y = bilinear_resize(x, 4, 6);
    CHECK(std::memcmp(x.data(), y.data(), sizeof(double) * x.numel()) == 0);
}

TEST_CASE("bilinear_resize 2x2 -> 4x4 matches the scalar oracle") {
    Rng rng(15);
    Tensor x = oracle::random_tensor({1, 1, 2, 2}, rng);
    Tensor y = bilinear_resize(x, 4, 4);
    std::vector<double> xin(x.values().begin(), x.values().end());
    auto want = oracle::bilinear_resize(xin, 2, 2, 4, 4);
    for (int64_t i = 0; i < y.numel(); ++i) {
        CHECK(y.data()[i] == doctest::Approx(want[i]).epsilon(1e-12));
    }
}

TEST_CASE("bilinear up-then-down round trip is close on smooth images") {
    // bilinear ramp
    Shape s{1, 1, 6, 8};
    std::vector<double> v(s.numel());
    for (int i = 0; i < s.h; ++i) {
        for (int j = 0; j < s.w; ++j) v[i * s.w + j] = 0.2 + 0.05 * i + 0.03 * j;
    }
    Tensor x = Tensor::from_vector(s, v);
    Tensor y = bilinear_resize(bilinear_resize(x, 12, 16), 6, 8);
    for (int64_t i = 0; i < x.numel(); ++i) {
        CHECK(std::fabs(y.data()[i] - x.data()[i]) < 1e-6);
    }
}

TEST_CASE("bilinear_resize gradient check") {
    Rng rng(19);
    Tensor x = oracle::random_tensor({1, 2, 3, 4}, rng);
    CHECK(grad_check([](const Tensor& t) { return reduce_sum(bilinear_resize(t, 5, 7)); }, x,
                     1e-6) < 1e-5);
    CHECK(grad_check([](const Tensor& t) { return reduce_sum(bilinear_resize(t, 2, 2)); }, x,
                     1e-6) < 1e-5);
}

TEST_CASE("window_mean basics") {
    Tensor c = Tensor::full({1, 1, 5, 7}, 0.413);
    Tensor y = window_mean(c, 5);
    for (int64_t i = 0; i < y.numel(); ++i) {
        CHECK(y.data()[i] == doctest::Approx(0.413).epsilon(1e-15));
    }

    std::vector<double> v(25, 0.0);
    v[12] = 1.0;  // center of 5x5
    Tensor x = Tensor::from_vector({1, 1, 5, 5}, v);
    Tensor m = window_mean(x, 3);
    CHECK(m.at(0, 0, 2, 2) == doctest::Approx(1.0 / 9.0).epsilon(1e-15));

    Tensor ones = Tensor::full({1, 1, 6, 6}, 1.0);
    for (int k : {3, 5}) {
        Tensor o = window_mean(ones, k);
        CHECK(o.at(0, 0, 0, 0) == doctest::Approx(1.0).epsilon(1e-15));
        CHECK(o.at(0, 0, 5, 5) == doctest::Approx(1.0).epsilon(1e-15));
    }

    CHECK_THROWS_AS(window_mean(x, 4), Error);
}

TEST_CASE("window_mean matches the brute-force oracle on random data") {
    Rng rng(21);
    for (int k : {3, 5, 7}) {
        Tensor x = oracle::random_tensor({1, 1, 9, 11}, rng);
        Tensor y = window_mean(x, k);
        std::vector<double> xin(x.values().begin(), x.values().end());
        auto want = oracle::window_mean(xin, 9, 11, k);
        for (int64_t i = 0; i < y.numel(); ++i) {
            CHECK(y.data()[i] == doctest::Approx(want[i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("window_mean gradient check") {
    Rng rng(25);
    Tensor x = oracle::random_tensor({1, 1, 5, 6}, rng);
    CHECK(grad_check([](const Tensor& t) { return reduce_sum(mul(window_mean(t, 3), t)); }, x,
                     1e-6) < 1e-5);
}

TEST_CASE("reductions and backward contracts") {
    CHECK(reduce_sum(Tensor::zeros({1, 2, 3, 4})).item() == 0.0);

    Rng rng(27);
    Tensor x = oracle::random_tensor({1, 1, 3, 3}, rng, 0.0, 1.0, true);
    Tensor s = reduce_sum(x);
    GradMap g = backward(s);
    REQUIRE(g.count(x.id()) == 1);
    for (double v : g.at(x.id())) CHECK(v == 1.0);

    // additive accumulation: a second backward doubles the stored gradient
    backward(s);
    for (double v : x.grad()) CHECK(v == 2.0);
    x.zero_grad();
    backward(s);
    for (double v : x.grad()) CHECK(v == 1.0);

    // gradients accumulate across fan-out
    x.zero_grad();
    backward(reduce_sum(add(x, x)));
    for (double v : x.grad()) CHECK(v == 2.0);

    CHECK(reduce_mean(Tensor::full({1, 1, 2, 2}, 3.0)).item() == doctest::Approx(3.0));
    CHECK_THROWS_AS(backward(add(x, x)), Error);
}

TEST_CASE("composed conv->bn->relu->sum gradient matches finite differences") {
    Rng rng(29);
    Tensor x = oracle::random_tensor({2, 2, 6, 6}, rng);
    Tensor w = oracle::random_tensor({3, 2, 3, 3}, rng);
    Tensor b = oracle::random_tensor({1, 3, 1, 1}, rng);
    Tensor gamma = oracle::random_tensor({1, 3, 1, 1}, rng, 0.5, 1.5);
    Tensor beta = oracle::random_tensor({1, 3, 1, 1}, rng);
    auto f = [&](const Tensor& t) {
        BnStats running = BnStats::make(3);
        Tensor y = conv2d(t, w, b, 1, 1);
        y = batch_norm(y, gamma, beta, BnMode::train, running);
        return reduce_sum(relu(y));
    };
    CHECK(grad_check(f, x, 1e-6) < 1e-5);
}

TEST_CASE("grad_check on plain sum is exactly zero") {
    Rng rng(31);
    Tensor x = oracle::random_tensor({1, 2, 4, 4}, rng, 0.0, 1.0);
    // power-of-two eps keeps the central difference exact for a plain sum
    CHECK(grad_check([](const Tensor& t) { return reduce_sum(t); }, x, 0.125) == 0.0);
}

TEST_CASE("grad_check rejects non-scalar functions") {
    Tensor x = Tensor::zeros({1, 1, 2, 2});
    CHECK_THROWS_AS(grad_check([](const Tensor& t) { return t; }, x, 1e-6), Error);
}

TEST_CASE("forward passes are deterministic") {
    Rng rng(33);
    Tensor x = oracle::random_tensor({2, 3, 8, 8}, rng);
    Tensor w = oracle::random_tensor({4, 3, 3, 3}, rng);
    Tensor b = oracle::random_tensor({1, 4, 1, 1}, rng);
    Tensor y1 = conv2d(x, w, b, 1, 1);
    Tensor y2 = conv2d(x, w, b, 1, 1);
    CHECK(std::memcmp(y1.data(), y2.data(), sizeof(double) * y1.numel()) == 0);
}

TEST_CASE("forward outputs stay finite on finite inputs") {
    Rng rng(35);
    Tensor x = oracle::random_tensor({2, 3, 6, 6}, rng, -100.0, 100.0);
    Tensor w = oracle::random_tensor({3, 3, 3, 3}, rng, -10.0, 10.0);
    Tensor b = oracle::random_tensor({1, 3, 1, 1}, rng);
    BnStats running = BnStats::make(3);
    Tensor y = conv2d(x, w, b, 1, 1);
    CHECK(all_finite(y));
    CHECK(all_finite(sigmoid(y)));
    CHECK(all_finite(window_mean(y, 3)));
    CHECK(all_finite(batch_norm(y, Tensor::full({1, 3, 1, 1}, 1.0), Tensor::zeros({1, 3, 1, 1}),
                                BnMode::train, running)));
}
