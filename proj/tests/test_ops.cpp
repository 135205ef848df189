#include <random>

#include "doctest.h"
#include "ron/gradcheck.hpp"
#include "ron/ops.hpp"

using namespace ron;

namespace {

Tensor<double> randn(int n, int c, int h, int w, std::mt19937_64& rng, bool rg = false) {
    Tensor<double> t(n, c, h, w, rg);
    std::normal_distribution<double> d(0.0, 1.0);
    for (double& v : *t.data) v = d(rng);
    return t;
}

}  // namespace

TEST_SUITE_BEGIN("ops");

TEST_CASE("conv2d identity kernel") {
    Tensor<double> x(1, 1, 1, 1), w(1, 1, 1, 1), b(1, 1, 1, 1);
    x.at(0, 0, 0, 0) = 5;
    w.at(0, 0, 0, 0) = 1;
    Tensor<double> y = conv2d<double>(nullptr, x, w, b, 1, 0);
    CHECK(y.at(0, 0, 0, 0) == doctest::Approx(5.0));
}

TEST_CASE("conv2d all-ones 3x3 sums to 9") {
    Tensor<double> x(1, 1, 3, 3), w(1, 1, 3, 3), b(1, 1, 1, 1);
    for (double& v : *x.data) v = 1;
    for (double& v : *w.data) v = 1;
    Tensor<double> y = conv2d<double>(nullptr, x, w, b, 1, 0);
    REQUIRE(y.shape == std::array<int, 4>{1, 1, 1, 1});
    CHECK(y.at(0, 0, 0, 0) == doctest::Approx(9.0));
}

TEST_CASE("conv2d matches naive six-loop oracle") {
    std::mt19937_64 rng(11);
    Tensor<double> x = randn(2, 3, 8, 8, rng);
    Tensor<double> w = randn(4, 3, 3, 3, rng);
    Tensor<double> b = randn(1, 4, 1, 1, rng);
    Tensor<double> y = conv2d<double>(nullptr, x, w, b, 1, 1);
    REQUIRE(y.shape == std::array<int, 4>{2, 4, 8, 8});
    for (int n = 0; n < 2; ++n)
        for (int co = 0; co < 4; ++co)
            for (int oy = 0; oy < 8; ++oy)
                for (int ox = 0; ox < 8; ++ox) {
                    double acc = b.at(0, co, 0, 0);
                    for (int ci = 0; ci < 3; ++ci)
                        for (int ky = 0; ky < 3; ++ky)
                            for (int kx = 0; kx < 3; ++kx) {
                                const int iy = oy + ky - 1, ix = ox + kx - 1;
                                if (iy < 0 || iy >= 8 || ix < 0 || ix >= 8) continue;
                                acc += x.at(n, ci, iy, ix) * w.at(co, ci, ky, kx);
                            }
                    CHECK(std::abs(y.at(n, co, oy, ox) - acc) < 1e-5);
                }
}

TEST_CASE("conv2d rejects channel mismatch") {
    Tensor<double> x(1, 2, 4, 4), w(1, 3, 3, 3), b(1, 1, 1, 1);
    CHECK_THROWS_AS(conv2d<double>(nullptr, x, w, b, 1, 1), DimensionError);
}

TEST_CASE("deconv2d doubles spatial extents") {
    std::mt19937_64 rng(2);
    Tensor<double> x = randn(1, 3, 4, 4, rng);
    Tensor<double> w = randn(3, 5, 2, 2, rng);
    Tensor<double> y = deconv2d<double>(nullptr, x, w, 2);
    CHECK(y.shape == std::array<int, 4>{1, 5, 8, 8});
}

TEST_CASE("deconv2d unit impulse spreads into a 2x2 block") {
    Tensor<double> x(1, 1, 3, 3), w(1, 1, 2, 2);
    x.at(0, 0, 0, 0) = 1;
    for (double& v : *w.data) v = 1;
    Tensor<double> y = deconv2d<double>(nullptr, x, w, 2);
    for (int oy = 0; oy < 6; ++oy)
        for (int ox = 0; ox < 6; ++ox)
            CHECK(y.at(0, 0, oy, ox) == doctest::Approx(oy < 2 && ox < 2 ? 1.0 : 0.0));
}

TEST_CASE("deconv2d rejects unsupported geometry") {
    Tensor<double> x(1, 1, 4, 4), w(1, 1, 3, 3);
    CHECK_THROWS_AS(deconv2d<double>(nullptr, x, w, 2), ConfigError);
}

TEST_CASE("deconv2d equals the stride-2 conv input gradient (scatter oracle)") {
    std::mt19937_64 rng(3);
    const int Ci = 3, Co = 4, H = 5, W = 5;
    Tensor<double> x = randn(2, Ci, H, W, rng);
    Tensor<double> w = randn(Ci, Co, 2, 2, rng);
    Tensor<double> y = deconv2d<double>(nullptr, x, w, 2);
    // input gradient of a stride-2 k=2 conv scatters each input value through
    // the kernel taps; compute it directly
    Tensor<double> ref(2, Co, 2 * H, 2 * W);
    for (int n = 0; n < 2; ++n)
        for (int ci = 0; ci < Ci; ++ci)
            for (int iy = 0; iy < H; ++iy)
                for (int ix = 0; ix < W; ++ix)
                    for (int co = 0; co < Co; ++co)
                        for (int ky = 0; ky < 2; ++ky)
                            for (int kx = 0; kx < 2; ++kx)
                                ref.at(n, co, 2 * iy + ky, 2 * ix + kx) +=
                                    x.at(n, ci, iy, ix) * w.at(ci, co, ky, kx);
    for (size_t i = 0; i < y.size(); ++i)
        CHECK(std::abs((*y.data)[i] - (*ref.data)[i]) < 1e-5);
}

TEST_CASE("conv2d/deconv2d adjointness inner product") {
    // <conv(z, w), x> == <z, deconv(x, w)>: the deconv weight [Ci,Co,2,2]
    // read as a conv weight maps the Co-channel map back to Ci channels
    std::mt19937_64 rng(4);
    const int Ci = 2, Co = 3, H = 4, W = 4;
    Tensor<double> x = randn(1, Ci, H, W, rng);
    Tensor<double> z = randn(1, Co, 2 * H, 2 * W, rng);
    Tensor<double> w = randn(Ci, Co, 2, 2, rng);
    Tensor<double> b0(1, Ci, 1, 1);
    Tensor<double> cz = conv2d<double>(nullptr, z, w, b0, 2, 0);
    Tensor<double> dx = deconv2d<double>(nullptr, x, w, 2);
    double lhs = 0, rhs = 0;
    for (size_t i = 0; i < cz.size(); ++i) lhs += (*cz.data)[i] * (*x.data)[i];
    for (size_t i = 0; i < dx.size(); ++i) rhs += (*dx.data)[i] * (*z.data)[i];
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-6));
}

TEST_CASE("maxpool2 basics") {
    Tensor<double> x(1, 1, 2, 2);
    x.at(0, 0, 0, 0) = 1;
    x.at(0, 0, 0, 1) = 2;
    x.at(0, 0, 1, 0) = 3;
    x.at(0, 0, 1, 1) = 4;
    Tensor<double> y = maxpool2<double>(nullptr, x);
    CHECK(y.at(0, 0, 0, 0) == doctest::Approx(4.0));

    Tensor<double> c(1, 2, 4, 4);
    for (double& v : *c.data) v = 7.5;
    Tensor<double> yc = maxpool2<double>(nullptr, c);
    for (double v : *yc.data) CHECK(v == doctest::Approx(7.5));

    Tensor<double> odd(1, 1, 3, 3);
    CHECK_THROWS_AS(maxpool2<double>(nullptr, odd), DimensionError);
}

TEST_CASE("maxpool2 matches windowed-max oracle") {
    std::mt19937_64 rng(5);
    Tensor<double> x = randn(1, 2, 6, 6, rng);
    Tensor<double> y = maxpool2<double>(nullptr, x);
    for (int c = 0; c < 2; ++c)
        for (int oy = 0; oy < 3; ++oy)
            for (int ox = 0; ox < 3; ++ox) {
                double m = -1e300;
                for (int dy = 0; dy < 2; ++dy)
                    for (int dx = 0; dx < 2; ++dx)
                        m = std::max(m, x.at(0, c, 2 * oy + dy, 2 * ox + dx));
                CHECK(y.at(0, c, oy, ox) == doctest::Approx(m));
            }
}

TEST_CASE("relu and add basics") {
    Tensor<double> x(1, 1, 1, 2);
    x.at(0, 0, 0, 0) = -3;
    x.at(0, 0, 0, 1) = 3;
    Tensor<double> y = relu<double>(nullptr, x);
    CHECK(y.at(0, 0, 0, 0) == doctest::Approx(0.0));
    CHECK(y.at(0, 0, 0, 1) == doctest::Approx(3.0));

    Tensor<double> z(1, 1, 1, 2);
    Tensor<double> s = add<double>(nullptr, x, z);
    CHECK(s.at(0, 0, 0, 0) == doctest::Approx(-3.0));
    CHECK(s.at(0, 0, 0, 1) == doctest::Approx(3.0));

    Tensor<double> bad(1, 1, 2, 1);
    CHECK_THROWS_AS(add<double>(nullptr, x, bad), DimensionError);
}

TEST_CASE("softmax_groups basics and stability") {
    Tensor<double> x(1, 2, 1, 1);
    Tensor<double> y = softmax_groups<double>(nullptr, x, 2);
    CHECK(y.at(0, 0, 0, 0) == doctest::Approx(0.5));
    CHECK(y.at(0, 1, 0, 0) == doctest::Approx(0.5));

    x.at(0, 0, 0, 0) = 100;
    y = softmax_groups<double>(nullptr, x, 2);
    CHECK(y.at(0, 0, 0, 0) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(y.at(0, 1, 0, 0) == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(all_finite(y));

    Tensor<double> odd(1, 3, 1, 1);
    CHECK_THROWS_AS(softmax_groups<double>(nullptr, odd, 2), DimensionError);
}

TEST_CASE("softmax_groups groups sum to one") {
    std::mt19937_64 rng(6);
    Tensor<double> x = randn(2, 8, 3, 3, rng);
    Tensor<double> y = softmax_groups<double>(nullptr, x, 4);
    for (int n = 0; n < 2; ++n)
        for (int g = 0; g < 2; ++g)
            for (int h = 0; h < 3; ++h)
                for (int w = 0; w < 3; ++w) {
                    double s = 0;
                    for (int c = 0; c < 4; ++c) {
                        const double v = y.at(n, 4 * g + c, h, w);
                        CHECK(v > 0.0);
                        CHECK(v < 1.0);
                        s += v;
                    }
                    CHECK(std::abs(s - 1.0) < 1e-6);
                }
}

TEST_CASE("cross_entropy of a uniform pair is ln 2") {
    Tensor<double> p(1, 2, 1, 1);
    p.at(0, 0, 0, 0) = 0.5;
    p.at(0, 1, 0, 0) = 0.5;
    Tensor<double> l = cross_entropy_sum<double>(nullptr, p, {{0, 0, 0, 0}});
    CHECK(l.scalar() == doctest::Approx(std::log(2.0)));
}

TEST_CASE("smooth_l1 piecewise values") {
    CHECK(smooth_l1_scalar(0.0) == doctest::Approx(0.0));
    CHECK(smooth_l1_scalar(0.5) == doctest::Approx(0.125));
    CHECK(smooth_l1_scalar(2.0) == doctest::Approx(1.5));
    CHECK(smooth_l1_scalar(-2.0) == doctest::Approx(1.5));

    Tensor<double> preds(1, 4, 1, 1);
    std::vector<LocTarget> items{{0, 0, 0, 0, {0, 0, 0, 0}}};
    Tensor<double> l = smooth_l1_sum<double>(nullptr, preds, items);
    CHECK(l.scalar() == doctest::Approx(0.0));
}

TEST_CASE("sgd_update analytic step") {
    Tensor<float> p(1, 1, 1, 1, true);
    p.at(0, 0, 0, 0) = 1.0f;
    (*p.grad)[0] = 1.0f;
    std::vector<Tensor<float>*> params{&p};
    std::vector<std::vector<float>> vel(1);
    sgd_update<float>(params, vel, 0.1f, 0.9f, 0.0f);
    CHECK(vel[0][0] == doctest::Approx(1.0f));
    CHECK(p.at(0, 0, 0, 0) == doctest::Approx(0.9f));

    // zero grad, zero velocity, no decay: unchanged
    Tensor<float> q(1, 1, 1, 1, true);
    q.at(0, 0, 0, 0) = 2.5f;
    std::vector<Tensor<float>*> params2{&q};
    std::vector<std::vector<float>> vel2(1);
    sgd_update<float>(params2, vel2, 0.1f, 0.9f, 0.0f);
    CHECK(q.at(0, 0, 0, 0) == doctest::Approx(2.5f));
}

TEST_CASE("sgd_update weight decay shrinks magnitudes with zero grad") {
    Tensor<float> p(1, 1, 1, 2, true);
    p.at(0, 0, 0, 0) = 3.0f;
    p.at(0, 0, 0, 1) = -2.0f;
    std::vector<Tensor<float>*> params{&p};
    std::vector<std::vector<float>> vel(1);
    sgd_update<float>(params, vel, 0.1f, 0.9f, 5e-4f);
    CHECK(std::abs(p.at(0, 0, 0, 0)) < 3.0f);
    CHECK(std::abs(p.at(0, 0, 0, 1)) < 2.0f);
    CHECK(p.at(0, 0, 0, 0) > 0.0f);
    CHECK(p.at(0, 0, 0, 1) < 0.0f);
}

TEST_CASE("sgd_update rejects NaN gradients") {
    Tensor<float> p(1, 1, 1, 1, true);
    (*p.grad)[0] = std::numeric_limits<float>::quiet_NaN();
    std::vector<Tensor<float>*> params{&p};
    std::vector<std::vector<float>> vel(1);
    CHECK_THROWS_AS(sgd_update<float>(params, vel, 0.1f, 0.9f, 0.0f), NumericError);
}

TEST_CASE("backward is linear in the loss") {
    std::mt19937_64 rng(7);
    auto run = [&](bool first, bool second, const Tensor<double>& base) {
        Tensor<double> x(1, 4, 1, 1, true);
        *x.data = *base.data;
        Graph<double> g;
        std::vector<LocTarget> i1{{0, 0, 0, 0, {0.2, -0.1, 0.3, 0.9}}};
        std::vector<LocTarget> i2{{0, 0, 0, 0, {-1.5, 0.4, 2.0, 0.1}}};
        std::vector<std::pair<double, Tensor<double>>> terms;
        if (first) terms.emplace_back(1.0, smooth_l1_sum(&g, x, i1));
        if (second) terms.emplace_back(1.0, smooth_l1_sum(&g, x, i2));
        Tensor<double> total = weighted_sum(&g, terms);
        g.backward(total);
        return *x.grad;
    };
    Tensor<double> base = randn(1, 4, 1, 1, rng);
    auto g1 = run(true, false, base);
    auto g2 = run(false, true, base);
    auto g12 = run(true, true, base);
    for (size_t i = 0; i < g12.size(); ++i) CHECK(std::abs(g12[i] - g1[i] - g2[i]) < 1e-10);
}

TEST_CASE("finite-difference gradient suite passes for every op") {
    auto reports = run_gradcheck(99);
    CHECK(reports.size() >= 10);
    for (const auto& r : reports) {
        INFO(r.op);
        CHECK(r.coords_checked >= 100);
        CHECK(r.max_rel_err < kGradCheckTol);
        CHECK(r.passed);
    }
}

TEST_SUITE_END();
