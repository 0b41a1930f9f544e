#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "med2d/grad_check.hpp"
#include "med2d/losses.hpp"
#include "med2d/ops.hpp"
#include "oracles.hpp"

using namespace med2d;
using ops::Padding;

namespace {

Tensor rand_t(Shape s, uint64_t seed, float lo = -1.0f, float hi = 1.0f) {
    return random_uniform<float>(std::move(s), lo, hi, seed);
}

Tensor64 rand_t64(Shape s, uint64_t seed, double lo = -1.0, double hi = 1.0) {
    return random_uniform<double>(std::move(s), lo, hi, seed);
}

}  // namespace

// --- conv2d --------------------------------------------------------------------

TEST_CASE("conv2d: 1x1 identity kernel") {
    Tensor x = rand_t({5, 4, 1}, 1);
    Tape t;
    Var y = ops::conv2d(t, t.leaf(x), t.leaf(Tensor({1, 1, 1, 1}, {1.0f})), Var{}, 1,
                        Padding::same);
    CHECK(t.value(y).data == x.data);
}

TEST_CASE("conv2d: all-ones 3x3 on all-ones 5x5, same padding") {
    Tape t;
    Var y = ops::conv2d(t, t.leaf(Tensor::ones({5, 5, 1})), t.leaf(Tensor::ones({3, 3, 1, 1})),
                        Var{}, 1, Padding::same);
    CHECK(t.value(y).at(2, 2, 0) == 9.0f);
    CHECK(t.value(y).at(0, 0, 0) == 4.0f);
    CHECK(t.value(y).at(0, 4, 0) == 4.0f);
    CHECK(t.value(y).at(4, 0, 0) == 4.0f);
    CHECK(t.value(y).at(4, 4, 0) == 4.0f);
}

TEST_CASE("conv2d: stride 2 same padding halves 256x256") {
    Tape t;
    Var y = ops::conv2d(t, t.leaf(Tensor::ones({256, 256, 1})),
                        t.leaf(rand_t({3, 3, 1, 2}, 2)), Var{}, 2, Padding::same);
    CHECK(t.value(y).shape == Shape{128, 128, 2});
}

TEST_CASE("conv2d rejects channel mismatch and oversized valid kernels") {
    Tape t;
    Var x = t.leaf(Tensor::ones({4, 4, 3}));
    CHECK_THROWS_AS(ops::conv2d(t, x, t.leaf(Tensor::ones({3, 3, 2, 4})), Var{}, 1, Padding::same),
                    std::invalid_argument);
    CHECK_THROWS_AS(ops::conv2d(t, x, t.leaf(Tensor::ones({5, 5, 3, 1})), Var{}, 1,
                                Padding::valid),
                    std::invalid_argument);
    CHECK_THROWS_AS(ops::conv2d(t, x, t.leaf(Tensor::ones({3, 3, 3, 1})), Var{}, 3, Padding::same),
                    std::invalid_argument);
}

TEST_CASE("conv2d matches direct-summation oracle on random instances") {
    Rng rng(17);
    for (int trial = 0; trial < 40; ++trial) {
        const int H = rng.uniform_int(1, 8), W = rng.uniform_int(1, 8);
        const int K = 1 + 2 * rng.uniform_int(0, 2);  // 1, 3, 5
        const int Cin = rng.uniform_int(1, 4), Cout = rng.uniform_int(1, 4);
        const int stride = rng.uniform_int(1, 2);
        const bool same = rng.bernoulli(0.7f) || H < K || W < K;

        Tensor x = rand_t({H, W, Cin}, 100 + trial);
        Tensor k = rand_t({K, K, Cin, Cout}, 200 + trial);
        Tensor b = rand_t({Cout}, 300 + trial);

        Tape t;
        Var y = ops::conv2d(t, t.leaf(x), t.leaf(k), t.leaf(b), stride,
                            same ? Padding::same : Padding::valid);
        const Tensor64 ref = oracles::conv2d(x.cast<double>(), k.cast<double>(), nullptr, stride,
                                             same);
        // oracle above is bias-free; add bias explicitly to keep it independent
        REQUIRE(t.value(y).shape == ref.shape);
        for (int oi = 0; oi < ref.dim(0); ++oi)
            for (int oj = 0; oj < ref.dim(1); ++oj)
                for (int co = 0; co < Cout; ++co)
                    CHECK(t.value(y).at(oi, oj, co) ==
                          doctest::Approx(ref.at(oi, oj, co) + b[co]).epsilon(1e-6));
    }
}

TEST_CASE("conv2d delta kernel is identity for any C, exhaustive H,W <= 5") {
    for (int H = 1; H <= 5; ++H)
        for (int W = 1; W <= 5; ++W)
            for (int C : {1, 2, 3}) {
                Tensor x = rand_t({H, W, C}, static_cast<uint64_t>(H * 100 + W * 10 + C));
                Tensor k = Tensor::zeros({3, 3, C, C});
                for (int c = 0; c < C; ++c) k.at(1, 1, c, c) = 1.0f;
                Tape t;
                Var y = ops::conv2d(t, t.leaf(x), t.leaf(k), Var{}, 1, Padding::same);
                CHECK(t.value(y).data == x.data);
            }
}

TEST_CASE("conv2d batched equals per-sample") {
    Tensor x = rand_t({3, 6, 5, 2}, 31);
    Tensor k = rand_t({3, 3, 2, 4}, 32);
    Tensor b = rand_t({4}, 33);

    Tape t;
    Var yb = ops::conv2d(t, t.leaf(x), t.leaf(k), t.leaf(b), 2, Padding::same);
    for (int n = 0; n < 3; ++n) {
        Tensor xs({6, 5, 2});
        for (int i = 0; i < 6; ++i)
            for (int j = 0; j < 5; ++j)
                for (int c = 0; c < 2; ++c) xs.at(i, j, c) = x.at(n, i, j, c);
        Tape ts;
        Var ys = ops::conv2d(ts, ts.leaf(xs), ts.leaf(k), ts.leaf(b), 2, Padding::same);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                for (int c = 0; c < 4; ++c)
                    CHECK(t.value(yb).at(n, i, j, c) == ts.value(ys).at(i, j, c));
    }
}

// --- pointwise -------------------------------------------------------------------

TEST_CASE("pointwise_conv: identity weights leave input unchanged") {
    Tensor x = rand_t({3, 3, 2}, 4);
    Tensor k = Tensor::zeros({1, 1, 2, 2});
    k.at(0, 0, 0, 0) = 1.0f;
    k.at(0, 0, 1, 1) = 1.0f;
    Tape t;
    Var y = ops::pointwise_conv(t, t.leaf(x), t.leaf(k), Var{});
    CHECK(t.value(y).data == x.data);
}

TEST_CASE("pointwise_conv: sixfold channel expansion 4 -> 24") {
    Tape t;
    Var y = ops::pointwise_conv(t, t.leaf(rand_t({2, 2, 4}, 5)),
                                t.leaf(rand_t({1, 1, 4, 24}, 6)), Var{});
    CHECK(t.value(y).shape == Shape{2, 2, 24});
}

TEST_CASE("pointwise_conv: 2x2 matrix-vector oracle") {
    // x = [1, 2] per pixel; out_0 = 1*1 + 2*1 = 3; out_1 = 1*2 + 2*0 = 2
    Tensor x({1, 1, 2}, {1.0f, 2.0f});
    Tensor k = Tensor::zeros({1, 1, 2, 2});
    k.at(0, 0, 0, 0) = 1.0f;
    k.at(0, 0, 1, 0) = 1.0f;
    k.at(0, 0, 0, 1) = 2.0f;
    k.at(0, 0, 1, 1) = 0.0f;
    Tape t;
    Var y = ops::pointwise_conv(t, t.leaf(x), t.leaf(k), Var{});
    CHECK(t.value(y).data == std::vector<float>{3.0f, 2.0f});
}

TEST_CASE("pointwise_conv rejects non-1x1 kernels") {
    Tape t;
    CHECK_THROWS_AS(ops::pointwise_conv(t, t.leaf(Tensor::ones({3, 3, 2})),
                                        t.leaf(Tensor::ones({3, 3, 2, 2})), Var{}),
                    std::invalid_argument);
}

// --- depthwise ---------------------------------------------------------------------

TEST_CASE("depthwise_conv2d: delta kernel is identity") {
    Tensor x = rand_t({6, 6, 3}, 7);
    Tensor k = Tensor::zeros({7, 7, 3});
    for (int c = 0; c < 3; ++c) k.at(3, 3, c) = 1.0f;
    Tape t;
    Var y = ops::depthwise_conv2d(t, t.leaf(x), t.leaf(k), Var{});
    CHECK(t.value(y).data == x.data);
}

TEST_CASE("depthwise_conv2d: 7x7 all-ones on all-ones 9x9 gives 49 at center") {
    Tape t;
    Var y = ops::depthwise_conv2d(t, t.leaf(Tensor::ones({9, 9, 1})),
                                  t.leaf(Tensor::ones({7, 7, 1})), Var{});
    CHECK(t.value(y).at(4, 4, 0) == 49.0f);
    CHECK(t.value(y).shape == Shape{9, 9, 1});
}

TEST_CASE("depthwise_conv2d: channels never mix") {
    Tensor x = rand_t({5, 5, 2}, 8);
    Tensor k = rand_t({3, 3, 2}, 9);
    Tape t1;
    Var y1 = ops::depthwise_conv2d(t1, t1.leaf(x), t1.leaf(k), Var{});

    Tensor x2 = x;
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) x2.at(i, j, 0) += 10.0f;  // perturb channel 0 only
    Tape t2;
    Var y2 = ops::depthwise_conv2d(t2, t2.leaf(x2), t2.leaf(k), Var{});

    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j)
            CHECK(t1.value(y1).at(i, j, 1) == t2.value(y2).at(i, j, 1));
}

TEST_CASE("depthwise equals conv2d with block-diagonal kernel") {
    Rng rng(21);
    for (int trial = 0; trial < 10; ++trial) {
        const int H = rng.uniform_int(2, 6), W = rng.uniform_int(2, 6);
        const int C = rng.uniform_int(1, 4);
        const int K = 1 + 2 * rng.uniform_int(0, 1);
        Tensor x = rand_t({H, W, C}, 400 + trial);
        Tensor dk = rand_t({K, K, C}, 500 + trial);

        Tensor bk = Tensor::zeros({K, K, C, C});
        for (int p = 0; p < K; ++p)
            for (int q = 0; q < K; ++q)
                for (int c = 0; c < C; ++c) bk.at(p, q, c, c) = dk.at(p, q, c);

        Tape t;
        Var yd = ops::depthwise_conv2d(t, t.leaf(x), t.leaf(dk), Var{});
        Var yc = ops::conv2d(t, t.leaf(x), t.leaf(bk), Var{}, 1, Padding::same);
        for (int64_t i = 0; i < t.value(yd).numel(); ++i)
            CHECK(t.value(yd)[i] == doctest::Approx(t.value(yc)[i]).epsilon(1e-6));
    }
}

TEST_CASE("depthwise matches naive reference") {
    Tensor x = rand_t({8, 7, 3}, 42);
    Tensor k = rand_t({5, 5, 3}, 43);
    Tensor b = rand_t({3}, 44);
    Tape t;
    Var y = ops::depthwise_conv2d(t, t.leaf(x), t.leaf(k), t.leaf(b));
    const Tensor64 ref = oracles::depthwise(x.cast<double>(), k.cast<double>(), nullptr);
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 7; ++j)
            for (int c = 0; c < 3; ++c)
                CHECK(t.value(y).at(i, j, c) ==
                      doctest::Approx(ref.at(i, j, c) + b[c]).epsilon(1e-6));
}

// --- pooling / upsampling -------------------------------------------------------------

TEST_CASE("global_avg_pool basics") {
    Tape t;
    Var y = ops::global_avg_pool(t, t.leaf(Tensor::full({3, 4, 2}, 5.0f)));
    CHECK(t.value(y).shape == Shape{1, 1, 2});
    CHECK(t.value(y)[0] == 5.0f);
    CHECK(t.value(y)[1] == 5.0f);

    Var z = ops::global_avg_pool(t, t.leaf(Tensor({2, 2, 1}, {1.0f, 2.0f, 3.0f, 4.0f})));
    CHECK(t.value(z)[0] == 2.5f);
}

TEST_CASE("global_avg_pool gradient is uniform 1/(H*W)") {
    Tape t;
    Var x = t.leaf(rand_t({4, 5, 3}, 10));
    Var loss = ops::sum(t, ops::global_avg_pool(t, x));
    t.backward(loss);
    for (float g : t.grad(x).data) CHECK(g == doctest::Approx(1.0 / 20.0));
}

TEST_CASE("upsample2x replication and sum preservation") {
    Tape t;
    Var y = ops::upsample2x(t, t.leaf(Tensor({1, 1, 1}, {7.0f})));
    CHECK(t.value(y).shape == Shape{2, 2, 1});
    for (float v : t.value(y).data) CHECK(v == 7.0f);

    Tensor x = rand_t({3, 3, 2}, 11);
    Var u = ops::upsample2x(t, t.leaf(x));
    double sx = 0, su = 0;
    for (float v : x.data) sx += v;
    for (float v : t.value(u).data) su += v;
    CHECK(su == doctest::Approx(4.0 * sx).epsilon(1e-5));
}

TEST_CASE("upsample2x maps checkerboard to block checkerboard") {
    Tensor x({2, 2, 1}, {1.0f, 0.0f, 0.0f, 1.0f});
    Tape t;
    Var y = ops::upsample2x(t, t.leaf(x));
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            CHECK(t.value(y).at(i, j, 0) == x.at(i / 2, j / 2, 0));
}

// --- activations -------------------------------------------------------------------------

TEST_CASE("activation values") {
    Tape t;
    Var r = ops::relu(t, t.leaf(Tensor({2}, {-1.0f, 2.0f})));
    CHECK(t.value(r).data == std::vector<float>{0.0f, 2.0f});

    Var e = ops::elu(t, t.leaf(Tensor({2}, {0.0f, -1.0f})));
    CHECK(t.value(e)[0] == 0.0f);
    CHECK(t.value(e)[1] == doctest::Approx(std::exp(-1.0) - 1.0).epsilon(1e-6));

    Var s = ops::sigmoid(t, t.leaf(Tensor({3}, {0.0f, 100.0f, -100.0f})));
    CHECK(t.value(s)[0] == 0.5f);
    CHECK(t.value(s)[1] == doctest::Approx(1.0));
    CHECK(t.value(s)[2] == doctest::Approx(0.0));

    Var sm = ops::activation(t, ops::Act::softmax_channels, t.leaf(Tensor::full({1, 1, 4}, 3.0f)));
    for (float v : t.value(sm).data) CHECK(v == doctest::Approx(0.25));
}

TEST_CASE("softmax requires C >= 2") {
    Tape t;
    CHECK_THROWS_AS(ops::activation(t, ops::Act::softmax_channels, t.leaf(Tensor::ones({2, 2, 1}))),
                    std::invalid_argument);
}

// --- channel_norm --------------------------------------------------------------------------

TEST_CASE("channel_norm: constant channel normalizes to zero before affine") {
    Tape t;
    Var y = ops::channel_norm(t, t.leaf(Tensor::full({4, 4, 2}, 3.7f)),
                              t.leaf(Tensor::ones({2})), t.leaf(Tensor::zeros({2})), 1e-5f);
    for (float v : t.value(y).data) CHECK(v == 0.0f);
}

TEST_CASE("channel_norm: output moments are ~(0, 1)") {
    Tensor x = rand_t({8, 8, 3}, 12, -2.0f, 2.0f);
    Tape t;
    Var y = ops::channel_norm(t, t.leaf(x), t.leaf(Tensor::ones({3})), t.leaf(Tensor::zeros({3})),
                              1e-5f);
    for (int c = 0; c < 3; ++c) {
        double mean = 0, var = 0;
        for (int i = 0; i < 8; ++i)
            for (int j = 0; j < 8; ++j) mean += t.value(y).at(i, j, c);
        mean /= 64.0;
        for (int i = 0; i < 8; ++i)
            for (int j = 0; j < 8; ++j) {
                const double d = t.value(y).at(i, j, c) - mean;
                var += d * d;
            }
        var /= 64.0;
        CHECK(std::abs(mean) < 1e-5);
        CHECK(var == doctest::Approx(1.0).epsilon(1e-3));
    }
}

TEST_CASE("channel_norm: samples in a batch normalize independently") {
    Tensor x = rand_t({5, 5, 2}, 13);
    Tensor xb({2, 5, 5, 2});
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j)
            for (int c = 0; c < 2; ++c) {
                xb.at(0, i, j, c) = x.at(i, j, c);
                xb.at(1, i, j, c) = x.at(i, j, c);  // duplicate sample
            }
    Tape t;
    Var y1 = ops::channel_norm(t, t.leaf(x), t.leaf(Tensor::ones({2})), t.leaf(Tensor::zeros({2})),
                               1e-5f);
    Var y2 = ops::channel_norm(t, t.leaf(xb), t.leaf(Tensor::ones({2})),
                               t.leaf(Tensor::zeros({2})), 1e-5f);
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j)
            for (int c = 0; c < 2; ++c) {
                CHECK(t.value(y2).at(0, i, j, c) == t.value(y1).at(i, j, c));
                CHECK(t.value(y2).at(1, i, j, c) == t.value(y1).at(i, j, c));
            }
}

TEST_CASE("channel_norm is invariant to per-sample affine input rescaling") {
    Tensor x = rand_t({6, 6, 2}, 14, -1.0f, 1.0f);
    Tensor x2 = x;
    for (auto& v : x2.data) v = 3.0f * v + 0.7f;
    Tape t;
    Var sc = t.leaf(Tensor::ones({2})), sh = t.leaf(Tensor::zeros({2}));
    Var y1 = ops::channel_norm(t, t.leaf(x), sc, sh, 1e-5f);
    Var y2 = ops::channel_norm(t, t.leaf(x2), sc, sh, 1e-5f);
    for (int64_t i = 0; i < t.value(y1).numel(); ++i)
        CHECK(t.value(y1)[i] == doctest::Approx(t.value(y2)[i]).epsilon(1e-4));
}

TEST_CASE("channel_norm rejects eps <= 0") {
    Tape t;
    Var x = t.leaf(Tensor::ones({2, 2, 1}));
    CHECK_THROWS_AS(
        ops::channel_norm(t, x, t.leaf(Tensor::ones({1})), t.leaf(Tensor::zeros({1})), 0.0f),
        std::invalid_argument);
}

// --- dropout -----------------------------------------------------------------------------

TEST_CASE("dropout: rate 0 and inference mode are bitwise identity") {
    Tensor x = rand_t({7, 5, 3}, 15);
    Tape t;
    Var a = ops::dropout(t, t.leaf(x), 0.0f, 123, true);
    Var b = ops::dropout(t, t.leaf(x), 0.0f, 123, false);
    Var c = ops::dropout(t, t.leaf(x), 0.5f, 123, false);
    CHECK(t.value(a).data == x.data);
    CHECK(t.value(b).data == x.data);
    CHECK(t.value(c).data == x.data);
}

TEST_CASE("dropout: Monte-Carlo keep fraction and expectation") {
    const int64_t n = 100000;
    Tensor x = Tensor::full({100, 100, 10}, 2.0f);
    Tape t;
    Var y = ops::dropout(t, t.leaf(x), 0.5f, 987, true);
    int64_t kept = 0;
    double mean = 0;
    for (int64_t i = 0; i < n; ++i) {
        if (t.value(y)[i] != 0.0f) ++kept;
        mean += t.value(y)[i];
    }
    mean /= static_cast<double>(n);
    CHECK(std::abs(static_cast<double>(kept) / n - 0.5) < 0.01);
    CHECK(mean == doctest::Approx(2.0).epsilon(0.02));
}

TEST_CASE("dropout rejects rate >= 1") {
    Tape t;
    Var x = t.leaf(Tensor::ones({4}));
    CHECK_THROWS_AS(ops::dropout(t, x, 1.0f, 0, true), std::invalid_argument);
    CHECK_THROWS_AS(ops::dropout(t, x, -0.1f, 0, true), std::invalid_argument);
}

// --- losses -------------------------------------------------------------------------------

TEST_CASE("dice_loss hand-computed cases") {
    // pred = 0.5 everywhere, target half foreground on 4x4:
    // 1 - (2*4 + 1) / (8 + 8 + 1) = 1 - 9/17
    Tensor pred = Tensor::full({4, 4, 1}, 0.5f);
    Tensor target = Tensor::zeros({4, 4, 1});
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 4; ++j) target.at(i, j, 0) = 1.0f;
    Tape t;
    Var l = ops::dice_loss(t, t.leaf(pred), t.leaf(target), 1.0f);
    CHECK(t.value(l)[0] == doctest::Approx(1.0 - 9.0 / 17.0).epsilon(1e-6));

    // both empty -> exactly 0 (smooth / smooth)
    Tape t2;
    Var l2 = ops::dice_loss(t2, t2.leaf(Tensor::zeros({4, 4, 1})),
                            t2.leaf(Tensor::zeros({4, 4, 1})), 1.0f);
    CHECK(t2.value(l2)[0] == 0.0f);

    // perfect overlap on 256 foreground pixels -> smooth-limited, < 0.01
    Tensor big = Tensor::zeros({32, 32, 1});
    for (int i = 0; i < 16; ++i)
        for (int j = 0; j < 16; ++j) big.at(i, j, 0) = 1.0f;
    Tape t3;
    Var l3 = ops::dice_loss(t3, t3.leaf(big), t3.leaf(big), 1.0f);
    CHECK(t3.value(l3)[0] < 0.01f);
    CHECK(t3.value(l3)[0] >= 0.0f);

    // soft predictions against a hard copy of themselves stay imperfect
    Tensor soft = Tensor::full({32, 32, 1}, 0.6f);
    Tape t4;
    Var l4 = ops::dice_loss(t4, t4.leaf(soft), t4.leaf(soft), 1.0f);
    CHECK(t4.value(l4)[0] > 0.0f);
}

TEST_CASE("dice_loss rejects shape mismatch") {
    Tape t;
    CHECK_THROWS_AS(
        ops::dice_loss(t, t.leaf(Tensor::zeros({4, 4, 1})), t.leaf(Tensor::zeros({4, 5, 1})), 1.0f),
        std::invalid_argument);
}

// --- gradient checks (f64, tol 1e-4) -----------------------------------------------------

TEST_CASE("grad check: conv2d (x, kernel, bias)") {
    auto f = [](Tape64& t, const std::vector<Var>& v) {
        Var y = ops::conv2d(t, v[0], v[1], v[2], 1, Padding::same);
        return ops::sum(t, ops::mul(t, y, y));
    };
    const auto r = grad_check_many(
        f, {rand_t64({5, 4, 2}, 60), rand_t64({3, 3, 2, 3}, 61), rand_t64({3}, 62)}, 1e-5, 1e-4);
    CHECK(r.pass);

    auto f2 = [](Tape64& t, const std::vector<Var>& v) {
        Var y = ops::conv2d(t, v[0], v[1], v[2], 2, Padding::same);
        return ops::sum(t, ops::mul(t, y, y));
    };
    const auto r2 = grad_check_many(
        f2, {rand_t64({6, 5, 2}, 63), rand_t64({3, 3, 2, 2}, 64), rand_t64({2}, 65)}, 1e-5, 1e-4);
    CHECK(r2.pass);
}

TEST_CASE("grad check: depthwise_conv2d") {
    auto f = [](Tape64& t, const std::vector<Var>& v) {
        Var y = ops::depthwise_conv2d(t, v[0], v[1], v[2]);
        return ops::sum(t, ops::mul(t, y, y));
    };
    const auto r = grad_check_many(
        f, {rand_t64({6, 6, 3}, 66), rand_t64({5, 5, 3}, 67), rand_t64({3}, 68)}, 1e-5, 1e-4);
    CHECK(r.pass);
}

TEST_CASE("grad check: pooling and upsampling") {
    auto fg = [](Tape64& t, const std::vector<Var>& v) {
        Var y = ops::global_avg_pool(t, v[0]);
        return ops::sum(t, ops::mul(t, y, y));
    };
    CHECK(grad_check_many(fg, {rand_t64({4, 5, 3}, 69)}, 1e-5, 1e-4).pass);

    auto fu = [](Tape64& t, const std::vector<Var>& v) {
        Var y = ops::upsample2x(t, v[0]);
        return ops::sum(t, ops::mul(t, y, y));
    };
    CHECK(grad_check_many(fu, {rand_t64({3, 4, 2}, 70)}, 1e-5, 1e-4).pass);
}

TEST_CASE("grad check: activations") {
    // keep relu inputs away from the kink at 0
    Tensor64 x = rand_t64({4, 4, 2}, 71, 0.1, 1.0);
    for (int64_t i = 0; i < x.numel(); i += 2) x[i] = -x[i];

    for (auto kind : {ops::Act::relu, ops::Act::elu, ops::Act::sigmoid}) {
        auto f = [kind](Tape64& t, const std::vector<Var>& v) {
            Var y = ops::activation(t, kind, v[0]);
            return ops::sum(t, ops::mul(t, y, y));
        };
        CHECK(grad_check_many(f, {x}, 1e-5, 1e-4).pass);
    }

    Tensor64 coeff = rand_t64({3, 3, 4}, 72);
    auto fs = [&coeff](Tape64& t, const std::vector<Var>& v) {
        Var y = ops::activation(t, ops::Act::softmax_channels, v[0]);
        return ops::sum(t, ops::mul(t, y, t.leaf(coeff)));
    };
    CHECK(grad_check_many(fs, {rand_t64({3, 3, 4}, 73)}, 1e-5, 1e-4).pass);
}

TEST_CASE("grad check: channel_norm (x, scale, shift)") {
    auto f = [](Tape64& t, const std::vector<Var>& v) {
        Var y = ops::channel_norm(t, v[0], v[1], v[2], 1e-5);
        return ops::sum(t, ops::mul(t, y, y));
    };
    const auto r = grad_check_many(
        f, {rand_t64({5, 4, 3}, 74), rand_t64({3}, 75, 0.5, 1.5), rand_t64({3}, 76)}, 1e-6, 1e-4);
    CHECK(r.pass);
}

TEST_CASE("grad check: dropout with a fixed mask") {
    auto f = [](Tape64& t, const std::vector<Var>& v) {
        Var y = ops::dropout(t, v[0], 0.4, 555, true);
        return ops::sum(t, ops::mul(t, y, y));
    };
    CHECK(grad_check_many(f, {rand_t64({6, 6, 2}, 77)}, 1e-5, 1e-4).pass);
}

TEST_CASE("grad check: losses") {
    // probabilities away from clamp boundaries
    Tensor64 pred = rand_t64({4, 4, 2}, 78, 0.1, 0.9);
    Tensor64 target({4, 4, 2});
    Rng rng(79);
    for (auto& v : target.data) v = rng.bernoulli(0.5f) ? 1.0 : 0.0;

    auto fd = [](Tape64& t, const std::vector<Var>& v) {
        return ops::dice_loss(t, v[0], v[1], 1.0);
    };
    CHECK(grad_check_many(fd, {pred, target}, 1e-6, 1e-4).pass);

    auto fb = [](Tape64& t, const std::vector<Var>& v) { return ops::bce_loss(t, v[0], v[1]); };
    CHECK(grad_check_many(fb, {pred, target}, 1e-6, 1e-4).pass);

    // ce over per-pixel distributions
    Tensor64 probs({3, 3, 4});
    Rng rng2(80);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double tot = 0;
            for (int c = 0; c < 4; ++c) {
                probs.at(i, j, c) = 0.1 + rng2.uniform_f64();
                tot += probs.at(i, j, c);
            }
            for (int c = 0; c < 4; ++c) probs.at(i, j, c) /= tot;
        }
    Tensor64 onehot = Tensor64::zeros({3, 3, 4});
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) onehot.at(i, j, rng2.uniform_int(0, 3)) = 1.0;

    auto fc = [](Tape64& t, const std::vector<Var>& v) { return ops::ce_loss(t, v[0], v[1]); };
    CHECK(grad_check_many(fc, {probs, onehot}, 1e-6, 1e-4).pass);
}

TEST_CASE("kernels are bitwise identical across thread counts") {
    Tensor x = rand_t({4, 33, 29, 5}, 90);
    Tensor k = rand_t({3, 3, 5, 7}, 91);
    Tensor b = rand_t({7}, 92);

    const int saved = kernels::threads();
    kernels::set_threads(1);
    Tape t1;
    Var x1 = t1.leaf(x);
    Var y1 = ops::conv2d(t1, x1, t1.leaf(k), t1.leaf(b), 2, Padding::same);
    Var l1 = ops::sum(t1, ops::mul(t1, y1, y1));
    t1.backward(l1);

    kernels::set_threads(4);
    Tape t4;
    Var x4 = t4.leaf(x);
    Var y4 = ops::conv2d(t4, x4, t4.leaf(k), t4.leaf(b), 2, Padding::same);
    Var l4 = ops::sum(t4, ops::mul(t4, y4, y4));
    t4.backward(l4);
    kernels::set_threads(saved);

    CHECK(t1.value(y1).data == t4.value(y4).data);
    CHECK(t1.grad(x1).data == t4.grad(x4).data);
}
