#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "stein/conv.hpp"
#include "stein/tensor.hpp"
#include "test_utils.hpp"

using namespace stein;
using testutil::check_gradients;
using testutil::max_abs_diff;
using testutil::rand_tensor;

namespace {

// Direct six-nested-loop convolution, the reference for conv2d.
std::vector<double> conv_oracle(const std::vector<double>& x, int n, int cin, int h, int w,
                                const std::vector<double>& wt, int cout, int kh, int kw,
                                int stride, int pad, int groups,
                                const std::vector<double>* bias) {
    const int oh = (h + 2 * pad - kh) / stride + 1;
    const int ow = (w + 2 * pad - kw) / stride + 1;
    const int cin_g = cin / groups, cout_g = cout / groups;
    std::vector<double> out(static_cast<size_t>(n) * cout * oh * ow, 0.0);
    for (int b = 0; b < n; ++b)
        for (int oc = 0; oc < cout; ++oc)
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) {
                    const int g = oc / cout_g;
                    double acc = bias ? (*bias)[oc] : 0.0;
                    for (int ic = 0; ic < cin_g; ++ic)
                        for (int ky = 0; ky < kh; ++ky)
                            for (int kx = 0; kx < kw; ++kx) {
                                const int iy = oy * stride - pad + ky;
                                const int ix = ox * stride - pad + kx;
                                if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                                const double xv =
                                    x[((static_cast<size_t>(b) * cin + g * cin_g + ic) * h + iy) *
                                          w +
                                      ix];
                                const double wv =
                                    wt[((static_cast<size_t>(oc) * cin_g + ic) * kh + ky) * kw +
                                       kx];
                                acc += xv * wv;
                            }
                    out[((static_cast<size_t>(b) * cout + oc) * oh + oy) * ow + ox] = acc;
                }
    return out;
}

}  // namespace

TEST_CASE("elementwise identities") {
    Rng rng(1);
    Tensor x = rand_tensor({2, 3, 4}, rng);
    Tensor zero = sub(x, x);
    for (double v : zero.data()) CHECK(v == 0.0);

    Tensor z = Tensor::zeros({5});
    Tensor s = sigmoid(z);
    for (double v : s.data()) CHECK(v == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("elementwise add matches a scalar-loop oracle") {
    Rng rng(2);
    Tensor a = rand_tensor({2, 3, 4}, rng);
    Tensor b = rand_tensor({2, 3, 4}, rng);
    Tensor c = add(a, b);
    for (int64_t i = 0; i < 2; ++i)
        for (int64_t j = 0; j < 3; ++j)
            for (int64_t k = 0; k < 4; ++k) {
                const int64_t idx = (i * 3 + j) * 4 + k;
                CHECK(std::fabs(c.data()[idx] - (a.data()[idx] + b.data()[idx])) < 1e-12);
            }
}

TEST_CASE("binary ops reject shape mismatches naming both shapes") {
    Tensor a = Tensor::zeros({2, 3});
    Tensor b = Tensor::zeros({3, 2});
    CHECK_THROWS_WITH_AS(add(a, b), doctest::Contains("[2, 3]"), ShapeError);
    CHECK_THROWS_WITH_AS(mul(a, b), doctest::Contains("[3, 2]"), ShapeError);
}

TEST_CASE("ops are deterministic") {
    Rng rng(3);
    Tensor a = rand_tensor({3, 5}, rng);
    Tensor b = rand_tensor({3, 5}, rng);
    Tensor c1 = mul(sigmoid(a), gelu(b));
    Tensor c2 = mul(sigmoid(a), gelu(b));
    CHECK(c1.data() == c2.data());
}

TEST_CASE("conv2d: 1x1 identity kernel reproduces the input") {
    Rng rng(4);
    Tensor x = rand_tensor({1, 3, 5, 5}, rng);
    std::vector<double> w(9, 0.0);
    w[0] = 1.0;  // out0 <- in0
    w[4] = 1.0;  // out1 <- in1
    w[8] = 1.0;  // out2 <- in2
    Tensor weight = Tensor::from_data({3, 3, 1, 1}, w);
    ConvSpec spec;
    spec.has_bias = false;
    Tensor y = conv2d(x, weight, Tensor(), spec);
    CHECK(y.data() == x.data());
}

TEST_CASE("conv2d: all-ones 3x3 kernel sums the neighborhood") {
    const double c = 0.7;
    Tensor x = Tensor::full({1, 1, 6, 6}, c);
    Tensor weight = Tensor::full({1, 1, 3, 3}, 1.0);
    ConvSpec spec;
    spec.kernel_h = spec.kernel_w = 3;
    spec.padding = 1;
    spec.has_bias = false;
    Tensor y = conv2d(x, weight, Tensor(), spec);
    // interior pixels see nine equal values
    for (int iy = 1; iy < 5; ++iy)
        for (int ix = 1; ix < 5; ++ix)
            CHECK(y.data()[iy * 6 + ix] == doctest::Approx(9.0 * c).epsilon(1e-14));
}

TEST_CASE("conv2d matches the six-nested-loop oracle") {
    Rng rng(5);
    Tensor x = rand_tensor({2, 2, 8, 8}, rng);
    Tensor w = rand_tensor({3, 2, 3, 3}, rng);
    Tensor b = rand_tensor({3}, rng);
    ConvSpec spec;
    spec.kernel_h = spec.kernel_w = 3;
    spec.stride = 2;
    spec.padding = 1;
    Tensor y = conv2d(x, w, b, spec);
    auto ref = conv_oracle(x.data(), 2, 2, 8, 8, w.data(), 3, 3, 3, 2, 1, 1, &b.data());
    CHECK(max_abs_diff(y.data(), ref) < 1e-10);
}

TEST_CASE("depthwise conv equals per-channel independent convolution") {
    Rng rng(6);
    const int c = 4;
    Tensor x = rand_tensor({1, c, 7, 7}, rng);
    Tensor w = rand_tensor({c, 1, 3, 3}, rng);
    ConvSpec spec;
    spec.kernel_h = spec.kernel_w = 3;
    spec.padding = 1;
    spec.groups = c;
    spec.has_bias = false;
    Tensor y = conv2d(x, w, Tensor(), spec);

    // oracle: each channel convolved on its own
    for (int ch = 0; ch < c; ++ch) {
        std::vector<double> plane(49), kern(9);
        for (int i = 0; i < 49; ++i) plane[i] = x.data()[ch * 49 + i];
        for (int i = 0; i < 9; ++i) kern[i] = w.data()[ch * 9 + i];
        auto ref = conv_oracle(plane, 1, 1, 7, 7, kern, 1, 3, 3, 1, 1, 1, nullptr);
        for (int i = 0; i < 49; ++i)
            CHECK(std::fabs(y.data()[ch * 49 + i] - ref[i]) < 1e-10);
    }
}

TEST_CASE("conv2d rejects inconsistent group arithmetic") {
    Tensor x = Tensor::zeros({1, 4, 4, 4});
    Tensor w = Tensor::zeros({4, 2, 1, 1});
    ConvSpec spec;
    spec.groups = 3;
    spec.has_bias = false;
    CHECK_THROWS_AS(conv2d(x, w, Tensor(), spec), ConfigError);
}

TEST_CASE("bilinear resize: identity and constant cases") {
    Rng rng(7);
    Tensor x = rand_tensor({1, 2, 5, 5}, rng);
    Tensor same = bilinear_resize(x, 5, 5);
    CHECK(max_abs_diff(same.data(), x.data()) < 1e-12);

    Tensor c = Tensor::full({1, 1, 3, 3}, 0.42);
    Tensor up = bilinear_resize(c, 6, 6);
    for (double v : up.data()) CHECK(v == doctest::Approx(0.42).epsilon(1e-14));
}

TEST_CASE("bilinear resize 2x2 -> 4x4 matches the coordinate formula") {
    Tensor x = Tensor::from_data({1, 1, 2, 2}, {0.0, 1.0, 2.0, 3.0});
    Tensor y = bilinear_resize(x, 4, 4);
    // per-axis source positions 0, 0.25, 0.75, 1 after clamping
    const double col[4] = {0.0, 0.25, 0.75, 1.0};
    for (int iy = 0; iy < 4; ++iy)
        for (int ix = 0; ix < 4; ++ix)
            CHECK(y.data()[iy * 4 + ix] ==
                  doctest::Approx(2.0 * col[iy] + col[ix]).epsilon(1e-14));
}

TEST_CASE("backward: analytic derivatives of simple graphs") {
    Rng rng(8);
    Tensor x = rand_tensor({3, 4}, rng, -2.0, 2.0, true);

    Tensor loss = sum(mul(x, x));
    backward(loss);
    for (int64_t i = 0; i < x.numel(); ++i)
        CHECK(x.grad()[i] == doctest::Approx(2.0 * x.data()[i]).epsilon(1e-15));

    x.zero_grad();
    Tensor loss2 = sum(sigmoid(x));
    backward(loss2);
    for (int64_t i = 0; i < x.numel(); ++i) {
        const double s = 1.0 / (1.0 + std::exp(-x.data()[i]));
        CHECK(std::fabs(x.grad()[i] - s * (1.0 - s)) < 1e-12);
    }
}

TEST_CASE("backward requires a scalar and accumulates across calls") {
    Tensor x = Tensor::from_data({2}, {1.0, 2.0}, true);
    CHECK_THROWS_AS(backward(mul(x, x)), UsageError);

    Tensor loss = sum(mul(x, x));
    backward(loss);
    const std::vector<double> once = x.grad();
    backward(loss);
    for (int64_t i = 0; i < x.numel(); ++i)
        CHECK(x.grad()[i] == doctest::Approx(2.0 * once[i]).epsilon(1e-15));

    x.zero_grad();
    CHECK(!x.has_grad());
}

TEST_CASE("gradient checks: every differentiable op on random small inputs") {
    Rng rng(9);
    const int trials = 20;
    for (int t = 0; t < trials; ++t) {
        // offsets keep relu/abs kinks and clamp edges away from the samples
        Tensor a = rand_tensor({2, 3, 3}, rng, 0.2, 1.5, true);
        Tensor b = rand_tensor({2, 3, 3}, rng, 0.2, 1.5, true);

        auto check = [&](const std::function<Tensor()>& fn, const std::vector<Tensor>& leaves) {
            auto rep = check_gradients(fn, leaves);
            CHECK_MESSAGE(rep.ok, rep.worst);
        };
        check([&] { return sum(add(a, b)); }, {a, b});
        check([&] { return sum(mul(sub(a, b), a)); }, {a, b});
        check([&] { return sum(divide(a, b)); }, {a, b});
        check([&] { return sum(sigmoid(scale(a, 1.7))); }, {a});
        check([&] { return sum(gelu(sub(a, b))); }, {a, b});
        check([&] { return sum(relu(add_scalar(a, 0.1))); }, {a});
        check([&] { return sum(stein::abs(sub(a, b))); }, {a, b});
        check([&] { return sum(stein::log(a)); }, {a});
        check([&] { return sum(pow_const(a, 2.5)); }, {a});
        check([&] { return sum(clamp(a, -10.0, 10.0)); }, {a});
        check([&] { return mean(mul(a, b)); }, {a, b});
    }
}

TEST_CASE("gradient checks: conv2d, resize, norm, softmax, concat/split") {
    Rng rng(10);
    for (int t = 0; t < 4; ++t) {
        Tensor x = rand_tensor({2, 4, 6, 6}, rng, -1.0, 1.0, true);
        Tensor w = rand_tensor({6, 2, 3, 3}, rng, -0.5, 0.5, true);
        Tensor b = rand_tensor({6}, rng, -0.5, 0.5, true);
        ConvSpec spec;
        spec.kernel_h = spec.kernel_w = 3;
        spec.padding = 1;
        spec.groups = 2;
        auto rep = check_gradients([&] { return sum(conv2d(x, w, b, spec)); }, {x, w, b});
        CHECK_MESSAGE(rep.ok, rep.worst);

        Tensor xu = rand_tensor({1, 2, 4, 4}, rng, -1.0, 1.0, true);
        rep = check_gradients(
            [&] { return sum(mul(bilinear_resize(xu, 7, 5), bilinear_resize(xu, 7, 5))); }, {xu});
        CHECK_MESSAGE(rep.ok, rep.worst);

        Tensor xn = rand_tensor({2, 3, 4, 4}, rng, -1.0, 1.0, true);
        Tensor gm = rand_tensor({3}, rng, 0.5, 1.5, true);
        Tensor bt = rand_tensor({3}, rng, -0.5, 0.5, true);
        Tensor wn = rand_tensor({2, 3, 4, 4}, rng);  // fixed weighting
        std::vector<double> rm(3, 0.0), rv(3, 1.0);
        rep = check_gradients(
            [&] { return sum(mul(batch_norm(xn, gm, bt, rm, rv, true, false), wn)); },
            {xn, gm, bt});
        CHECK_MESSAGE(rep.ok, rep.worst);

        Tensor xs = rand_tensor({1, 3, 3, 3}, rng, -2.0, 2.0, true);
        Tensor ws = rand_tensor({1, 3, 3, 3}, rng);
        rep = check_gradients([&] { return sum(mul(softmax_channels(xs), ws)); }, {xs});
        CHECK_MESSAGE(rep.ok, rep.worst);

        Tensor c1 = rand_tensor({1, 2, 3, 3}, rng, -1.0, 1.0, true);
        Tensor c2 = rand_tensor({1, 3, 3, 3}, rng, -1.0, 1.0, true);
        rep = check_gradients(
            [&] {
                Tensor cat = concat({c1, c2}, 1);
                auto parts = split(cat, 1, {4, 1});
                return add(sum(mul(parts[0], parts[0])), sum(parts[1]));
            },
            {c1, c2});
        CHECK_MESSAGE(rep.ok, rep.worst);
    }
}

TEST_CASE("eval-mode batch norm uses running statistics") {
    Tensor x = Tensor::from_data({1, 1, 2, 2}, {1.0, 2.0, 3.0, 4.0});
    Tensor gm = Tensor::full({1}, 1.0);
    Tensor bt = Tensor::zeros({1});
    std::vector<double> rm = {2.0}, rv = {4.0};
    Tensor y = batch_norm(x, gm, bt, rm, rv, false, false, 0.1, 0.0);
    for (int i = 0; i < 4; ++i)
        CHECK(y.data()[i] == doctest::Approx((x.data()[i] - 2.0) / 2.0).epsilon(1e-12));
    // buffers untouched in eval
    CHECK(rm[0] == 2.0);
    CHECK(rv[0] == 4.0);
}

TEST_CASE("concat then split at the same boundaries is the identity") {
    Rng rng(11);
    for (int t = 0; t < 10; ++t) {
        const int64_t c1 = 1 + static_cast<int64_t>(rng.uniform_u64(4));
        const int64_t c2 = 1 + static_cast<int64_t>(rng.uniform_u64(4));
        Tensor a = rand_tensor({2, c1, 3, 3}, rng);
        Tensor b = rand_tensor({2, c2, 3, 3}, rng);
        auto parts = split(concat({a, b}, 1), 1, {c1, c2});
        CHECK(parts[0].data() == a.data());
        CHECK(parts[1].data() == b.data());
    }
}

TEST_CASE("softmax over channels sums to one") {
    Rng rng(12);
    Tensor x = rand_tensor({2, 5, 3, 3}, rng, -3.0, 3.0);
    Tensor s = softmax_channels(x);
    for (int64_t b = 0; b < 2; ++b)
        for (int64_t p = 0; p < 9; ++p) {
            double acc = 0.0;
            for (int64_t c = 0; c < 5; ++c) acc += s.data()[(b * 5 + c) * 9 + p];
            CHECK(acc == doctest::Approx(1.0).epsilon(1e-12));
        }
}

TEST_CASE("finite forward outputs on finite inputs") {
    Rng rng(13);
    Tensor x = rand_tensor({2, 3, 8, 8}, rng, -5.0, 5.0);
    for (const Tensor& y : {sigmoid(x), gelu(x), relu(x), stein::abs(x)})
        for (double v : y.data()) CHECK(std::isfinite(v));
}
