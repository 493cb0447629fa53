#include <cmath>
#include <vector>

#include "diffaug/errors.hpp"
#include "diffaug/ops.hpp"
#include "diffaug/rng.hpp"
#include "diffaug/tensor.hpp"
#include "doctest.h"
#include "gradcheck.hpp"

using namespace diffaug;
namespace op = diffaug::ops;

namespace {

Tensor rnd(Shape s, uint64_t seed, double scale = 1.0, bool rg = true) {
    Rng r(mix64(seed));
    std::vector<double> v(shape_size(s));
    for (auto& x : v) x = scale * r.normal();
    return Tensor::from(std::move(s), std::move(v), rg);
}

// Plain nested-loop cross-correlation, independent of the im2col path.
std::vector<double> conv_ref(const std::vector<double>& x,
                             const std::vector<double>& w,
                             const std::vector<double>& b, size_t n, size_t ci,
                             size_t h, size_t wd, size_t co, size_t k,
                             size_t stride, size_t pad, size_t oh, size_t ow) {
    std::vector<double> out(n * co * oh * ow, 0.0);
    for (size_t bi = 0; bi < n; ++bi)
        for (size_t oc = 0; oc < co; ++oc)
            for (size_t oy = 0; oy < oh; ++oy)
                for (size_t ox = 0; ox < ow; ++ox) {
                    double acc = b.empty() ? 0.0 : b[oc];
                    for (size_t ic = 0; ic < ci; ++ic)
                        for (size_t ky = 0; ky < k; ++ky)
                            for (size_t kx = 0; kx < k; ++kx) {
                                long iy = static_cast<long>(oy * stride + ky) -
                                          static_cast<long>(pad);
                                long ix = static_cast<long>(ox * stride + kx) -
                                          static_cast<long>(pad);
                                if (iy < 0 || ix < 0 ||
                                    iy >= static_cast<long>(h) ||
                                    ix >= static_cast<long>(wd))
                                    continue;
                                acc += x[((bi * ci + ic) * h + iy) * wd + ix] *
                                       w[((oc * ci + ic) * k + ky) * k + kx];
                            }
                    out[((bi * co + oc) * oh + oy) * ow + ox] = acc;
                }
    return out;
}

}  // namespace

TEST_SUITE("tensor_ops") {

TEST_CASE("elementwise ops match finite differences") {
    auto bin = [](auto f, uint64_t seed) {
        Tensor a = rnd({3, 4}, seed), b = rnd({3, 4}, seed ^ 77);
        auto r = gradcheck::check_tensor([&] { return f(a, b); }, {a, b}, seed);
        CHECK(r.max_rel < 1e-4);
        CHECK(r.checked == 24);
    };
    bin([](const Tensor& a, const Tensor& b) { return op::add(a, b); }, 1);
    bin([](const Tensor& a, const Tensor& b) { return op::sub(a, b); }, 2);
    bin([](const Tensor& a, const Tensor& b) { return op::mul(a, b); }, 3);

    auto un = [](auto f, uint64_t seed, double scale) {
        Tensor x = rnd({3, 4}, seed, scale);
        auto r = gradcheck::check_tensor([&] { return f(x); }, {x}, seed);
        CHECK(r.max_rel < 1e-4);
    };
    un([](const Tensor& x) { return op::scale(x, -1.7); }, 4, 1.0);
    un([](const Tensor& x) { return op::add_const(x, 0.3); }, 5, 1.0);
    un([](const Tensor& x) { return op::exp(x); }, 6, 0.5);
    un([](const Tensor& x) { return op::silu(x); }, 7, 1.5);
    un([](const Tensor& x) { return op::sigmoid(x); }, 8, 1.5);
}

TEST_CASE("matmul matches the naive triple loop and its gradients check") {
    Tensor a = rnd({3, 4}, 10), b = rnd({4, 5}, 11);
    Tensor c = op::matmul(a, b);
    REQUIRE(c.shape() == Shape{3, 5});
    for (size_t i = 0; i < 3; ++i)
        for (size_t j = 0; j < 5; ++j) {
            double acc = 0.0;
            for (size_t k = 0; k < 4; ++k)
                acc += a.value()[i * 4 + k] * b.value()[k * 5 + j];
            CHECK(c.value()[i * 5 + j] == doctest::Approx(acc).epsilon(1e-12));
        }
    auto r = gradcheck::check_tensor([&] { return op::matmul(a, b); }, {a, b},
                                     12);
    CHECK(r.max_rel < 1e-4);

    CHECK_THROWS_AS(op::matmul(rnd({2, 3}, 1), rnd({4, 2}, 2)),
                    DimensionError);
}

TEST_CASE("shape ops are exact index maps with exact gradients") {
    Tensor x = rnd({3, 4}, 20);

    Tensor xt = op::transpose(x);
    REQUIRE(xt.shape() == Shape{4, 3});
    for (size_t i = 0; i < 3; ++i)
        for (size_t j = 0; j < 4; ++j)
            CHECK(xt.value()[j * 3 + i] == x.value()[i * 4 + j]);

    Tensor rs = op::reshape(x, {2, 6});
    CHECK(rs.value() == x.value());
    CHECK_THROWS_AS(op::reshape(x, {5, 5}), DimensionError);

    Tensor nr = op::narrow_rows(x, 1, 2);
    REQUIRE(nr.shape() == Shape{2, 4});
    for (size_t j = 0; j < 8; ++j) CHECK(nr.value()[j] == x.value()[4 + j]);

    Tensor nc = op::narrow_cols(x, 1, 2);
    REQUIRE(nc.shape() == Shape{3, 2});
    for (size_t i = 0; i < 3; ++i)
        for (size_t j = 0; j < 2; ++j)
            CHECK(nc.value()[i * 2 + j] == x.value()[i * 4 + 1 + j]);

    for (uint64_t s = 0; s < 2; ++s) {
        Tensor a = rnd({2, 3}, 21 + s), b = rnd({1, 3}, 23 + s);
        auto r1 = gradcheck::check_tensor(
            [&] { return op::concat_rows({a, b}); }, {a, b}, 24 + s);
        CHECK(r1.max_rel < 1e-4);
        Tensor c = rnd({2, 2}, 25 + s);
        auto r2 = gradcheck::check_tensor(
            [&] { return op::concat_cols({a, c}); }, {a, c}, 26 + s);
        CHECK(r2.max_rel < 1e-4);
    }

    auto r = gradcheck::check_tensor(
        [&] { return op::narrow_cols(op::transpose(x), 0, 2); }, {x}, 27);
    CHECK(r.max_rel < 1e-4);
}

TEST_CASE("concat is the inverse of narrow") {
    Tensor x = rnd({4, 3}, 30);
    Tensor back = op::concat_rows(
        {op::narrow_rows(x, 0, 1), op::narrow_rows(x, 1, 3)});
    CHECK(back.value() == x.value());
    Tensor y = rnd({3, 5}, 31);
    Tensor backc = op::concat_cols(
        {op::narrow_cols(y, 0, 2), op::narrow_cols(y, 2, 3)});
    CHECK(backc.value() == y.value());
}

TEST_CASE("reductions and losses match closed forms") {
    Tensor x = rnd({3, 4}, 40);
    double s = 0.0;
    for (double v : x.value()) s += v;
    CHECK(op::sum(x).item() == doctest::Approx(s).epsilon(1e-12));
    CHECK(op::mean(x).item() == doctest::Approx(s / 12.0).epsilon(1e-12));

    Tensor a = rnd({3, 4}, 41), b = rnd({3, 4}, 42);
    double m = 0.0;
    for (size_t i = 0; i < 12; ++i) {
        double d = a.value()[i] - b.value()[i];
        m += d * d;
    }
    CHECK(op::mse(a, b).item() == doctest::Approx(m / 12.0).epsilon(1e-12));

    auto r1 = gradcheck::check_scalar([&] { return op::mse(a, b); }, {a, b},
                                      43);
    CHECK(r1.max_rel < 1e-4);
    auto r2 = gradcheck::check_scalar([&] { return op::mean(x); }, {x}, 44);
    CHECK(r2.max_rel < 1e-4);
    auto r3 = gradcheck::check_scalar([&] { return op::sum(x); }, {x}, 45);
    CHECK(r3.max_rel < 1e-4);
}

TEST_CASE("add_bias_rows broadcasts one bias vector over every row") {
    Tensor x = rnd({3, 4}, 50);
    Tensor b = rnd({4}, 51);
    Tensor y = op::add_bias_rows(x, b);
    for (size_t i = 0; i < 3; ++i)
        for (size_t j = 0; j < 4; ++j)
            CHECK(y.value()[i * 4 + j] == x.value()[i * 4 + j] + b.value()[j]);
    auto r = gradcheck::check_tensor([&] { return op::add_bias_rows(x, b); },
                                     {x, b}, 52);
    CHECK(r.max_rel < 1e-4);
}

TEST_CASE("softmax rows are distributions with correct values") {
    Tensor x = Tensor::from({2, 2}, {0.0, std::log(2.0), 3.0, 3.0}, true);
    Tensor y = op::softmax(x);
    CHECK(y.value()[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(y.value()[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(y.value()[2] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(y.value()[3] == doctest::Approx(0.5).epsilon(1e-12));

    Tensor big = Tensor::from({1, 2}, {1000.0, 1000.0 + std::log(3.0)});
    Tensor yb = op::softmax(big);
    CHECK(yb.value()[0] == doctest::Approx(0.25).epsilon(1e-9));

    Tensor z = rnd({3, 5}, 53);
    Tensor yz = op::softmax(z);
    for (size_t i = 0; i < 3; ++i) {
        double s = 0.0;
        for (size_t j = 0; j < 5; ++j) s += yz.value()[i * 5 + j];
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
    auto r = gradcheck::check_tensor([&] { return op::softmax(z); }, {z}, 54);
    CHECK(r.max_rel < 1e-4);
}

TEST_CASE("scaled dot attention matches a hand-rolled reference") {
    size_t nq = 3, nk = 5, d = 4;
    Tensor q = rnd({nq, d}, 60), k = rnd({nk, d}, 61), v = rnd({nk, d}, 62);
    Tensor out = op::scaled_dot_attention(q, k, v);
    REQUIRE(out.shape() == Shape{nq, d});
    for (size_t i = 0; i < nq; ++i) {
        std::vector<double> logits(nk);
        double mx = -1e300;
        for (size_t j = 0; j < nk; ++j) {
            double acc = 0.0;
            for (size_t a = 0; a < d; ++a)
                acc += q.value()[i * d + a] * k.value()[j * d + a];
            logits[j] = acc / std::sqrt(static_cast<double>(d));
            mx = std::max(mx, logits[j]);
        }
        double zsum = 0.0;
        for (double& l : logits) {
            l = std::exp(l - mx);
            zsum += l;
        }
        for (size_t a = 0; a < d; ++a) {
            double acc = 0.0;
            for (size_t j = 0; j < nk; ++j)
                acc += logits[j] / zsum * v.value()[j * d + a];
            CHECK(out.value()[i * d + a] ==
                  doctest::Approx(acc).epsilon(1e-10));
        }
    }
    auto r = gradcheck::check_tensor(
        [&] { return op::scaled_dot_attention(q, k, v); }, {q, k, v}, 63);
    CHECK(r.max_rel < 1e-4);
}

TEST_CASE("cross entropy equals mean negative log softmax probability") {
    Tensor logits = rnd({3, 4}, 70);
    std::vector<size_t> labels{0, 2, 3};
    Tensor loss = op::cross_entropy_logits(logits, labels);
    double want = 0.0;
    for (size_t i = 0; i < 3; ++i) {
        double mx = -1e300, z = 0.0;
        for (size_t j = 0; j < 4; ++j)
            mx = std::max(mx, logits.value()[i * 4 + j]);
        for (size_t j = 0; j < 4; ++j)
            z += std::exp(logits.value()[i * 4 + j] - mx);
        want -= logits.value()[i * 4 + labels[i]] - mx - std::log(z);
    }
    want /= 3.0;
    CHECK(loss.item() == doctest::Approx(want).epsilon(1e-12));
    auto r = gradcheck::check_scalar(
        [&] { return op::cross_entropy_logits(logits, labels); }, {logits},
        71);
    CHECK(r.max_rel < 1e-4);
}

TEST_CASE("bce with logits matches the closed form and stays finite") {
    Tensor logits = Tensor::from({1, 3}, {0.3, -1.2, 2.0}, true);
    std::vector<double> targets{1.0, 0.0, 1.0};
    auto ref = [](double l, double t) {
        // log(1 + e^-|l|) + max(l, 0) - t * l, the stable form.
        return std::log1p(std::exp(-std::abs(l))) + std::max(l, 0.0) - t * l;
    };
    double want =
        (ref(0.3, 1.0) + ref(-1.2, 0.0) + ref(2.0, 1.0)) / 3.0;
    CHECK(op::bce_with_logits(logits, targets).item() ==
          doctest::Approx(want).epsilon(1e-10));

    Tensor extreme = Tensor::from({1, 2}, {60.0, -60.0});
    double v = op::bce_with_logits(extreme, {0.0, 1.0}).item();
    CHECK(std::isfinite(v));
    CHECK(v == doctest::Approx(60.0).epsilon(1e-9));

    auto r = gradcheck::check_scalar(
        [&] { return op::bce_with_logits(logits, targets); }, {logits}, 72);
    CHECK(r.max_rel < 1e-4);
}

TEST_CASE("embedding gathers rows and accumulates repeated-id gradients") {
    Tensor table = rnd({6, 4}, 80);
    std::vector<size_t> ids{0, 3, 3, 5};
    Tensor out = op::embedding(table, ids);
    REQUIRE(out.shape() == Shape{4, 4});
    for (size_t i = 0; i < ids.size(); ++i)
        for (size_t j = 0; j < 4; ++j)
            CHECK(out.value()[i * 4 + j] == table.value()[ids[i] * 4 + j]);
    auto r = gradcheck::check_tensor([&] { return op::embedding(table, ids); },
                                     {table}, 81);
    CHECK(r.max_rel < 1e-4);
}

TEST_CASE("conv2d matches the nested-loop reference") {
    for (auto [stride, pad] : {std::pair<size_t, size_t>{1, 1},
                               std::pair<size_t, size_t>{2, 1},
                               std::pair<size_t, size_t>{1, 0}}) {
        size_t n = 2, ci = 2, h = 5, wd = 5, co = 3, k = 3;
        Tensor x = rnd({n, ci, h, wd}, 90 + stride);
        Tensor w = rnd({co, ci, k, k}, 91 + pad);
        Tensor b = rnd({co}, 92);
        Tensor y = op::conv2d(x, w, b, stride, pad);
        size_t oh = (h + 2 * pad - k) / stride + 1;
        size_t ow = (wd + 2 * pad - k) / stride + 1;
        REQUIRE(y.shape() == Shape{n, co, oh, ow});
        std::vector<double> want =
            conv_ref(x.value(), w.value(), b.value(), n, ci, h, wd, co, k,
                     stride, pad, oh, ow);
        for (size_t i = 0; i < want.size(); ++i)
            CHECK(y.value()[i] == doctest::Approx(want[i]).epsilon(1e-10));

        auto r = gradcheck::check_tensor(
            [&] { return op::conv2d(x, w, b, stride, pad); }, {x, w, b},
            93 + stride + pad, 1e-4, 20);
        CHECK(r.max_rel < 1e-4);
    }
}

TEST_CASE("upsample_nearest2 repeats each pixel into a 2x2 block") {
    Tensor x = rnd({1, 2, 3, 3}, 100);
    Tensor y = op::upsample_nearest2(x);
    REQUIRE(y.shape() == Shape{1, 2, 6, 6});
    for (size_t c = 0; c < 2; ++c)
        for (size_t r = 0; r < 6; ++r)
            for (size_t cc = 0; cc < 6; ++cc)
                CHECK(y.value()[(c * 6 + r) * 6 + cc] ==
                      x.value()[(c * 3 + r / 2) * 3 + cc / 2]);
    auto g = gradcheck::check_tensor([&] { return op::upsample_nearest2(x); },
                                     {x}, 101);
    CHECK(g.max_rel < 1e-4);
}

TEST_CASE("channel ops stack, bias and reglue exactly") {
    Tensor a = rnd({1, 2, 3, 3}, 110), b = rnd({1, 1, 3, 3}, 111);
    Tensor cat = op::concat_channels(a, b);
    REQUIRE(cat.shape() == Shape{1, 3, 3, 3});
    for (size_t i = 0; i < 18; ++i) CHECK(cat.value()[i] == a.value()[i]);
    for (size_t i = 0; i < 9; ++i) CHECK(cat.value()[18 + i] == b.value()[i]);
    auto g1 = gradcheck::check_tensor(
        [&] { return op::concat_channels(a, b); }, {a, b}, 112);
    CHECK(g1.max_rel < 1e-4);

    Tensor x = rnd({2, 3, 2, 2}, 113);
    Tensor tb = rnd({2, 3}, 114);
    Tensor y = op::add_channel_bias(x, tb);
    for (size_t bi = 0; bi < 2; ++bi)
        for (size_t c = 0; c < 3; ++c)
            for (size_t p = 0; p < 4; ++p)
                CHECK(y.value()[(bi * 3 + c) * 4 + p] ==
                      x.value()[(bi * 3 + c) * 4 + p] +
                          tb.value()[bi * 3 + c]);
    auto g2 = gradcheck::check_tensor(
        [&] { return op::add_channel_bias(x, tb); }, {x, tb}, 115);
    CHECK(g2.max_rel < 1e-4);

    Tensor t = op::nchw_to_tokens(a);
    REQUIRE(t.shape() == Shape{9, 2});
    CHECK(t.value()[0] == a.value()[0]);
    CHECK(t.value()[1] == a.value()[9]);
    Tensor back = op::tokens_to_nchw(t, 1, 2, 3, 3);
    CHECK(back.value() == a.value());
    auto g3 = gradcheck::check_tensor(
        [&] {
            return op::tokens_to_nchw(op::nchw_to_tokens(a), 1, 2, 3, 3);
        },
        {a}, 116);
    CHECK(g3.max_rel < 1e-4);
}

TEST_CASE("group and layer norm whiten and their gradients check") {
    Tensor x = rnd({2, 4, 3, 3}, 120);
    Tensor gamma = Tensor::full({4}, 1.0, true);
    Tensor beta = Tensor::zeros({4}, true);
    Tensor y = op::group_norm(x, gamma, beta, 2);
    // Per (batch, group) statistics over 2 channels x 9 pixels.
    for (size_t bi = 0; bi < 2; ++bi)
        for (size_t g = 0; g < 2; ++g) {
            double mean = 0.0, var = 0.0;
            for (size_t c = 2 * g; c < 2 * g + 2; ++c)
                for (size_t p = 0; p < 9; ++p)
                    mean += y.value()[(bi * 4 + c) * 9 + p];
            mean /= 18.0;
            for (size_t c = 2 * g; c < 2 * g + 2; ++c)
                for (size_t p = 0; p < 9; ++p) {
                    double d = y.value()[(bi * 4 + c) * 9 + p] - mean;
                    var += d * d;
                }
            var /= 18.0;
            CHECK(std::abs(mean) < 1e-12);
            CHECK(var == doctest::Approx(1.0).epsilon(1e-3));
        }
    auto g1 = gradcheck::check_tensor(
        [&] { return op::group_norm(x, gamma, beta, 2); }, {x, gamma, beta},
        121, 1e-4, 24);
    CHECK(g1.max_rel < 1e-4);

    Tensor z = rnd({3, 6}, 122);
    Tensor lg = rnd({6}, 123), lb = rnd({6}, 124);
    auto g2 = gradcheck::check_tensor(
        [&] { return op::layer_norm(z, lg, lb); }, {z, lg, lb}, 125);
    CHECK(g2.max_rel < 1e-4);
    Tensor ln = op::layer_norm(z, Tensor::full({6}, 1.0), Tensor::zeros({6}));
    for (size_t i = 0; i < 3; ++i) {
        double mean = 0.0;
        for (size_t j = 0; j < 6; ++j) mean += ln.value()[i * 6 + j];
        CHECK(std::abs(mean / 6.0) < 1e-12);
    }
}

TEST_CASE("detach stops gradient flow and NoGradGuard suppresses graphs") {
    Tensor x = rnd({2, 2}, 130);
    Tensor d = x.detach();
    CHECK(d.value() == x.value());
    CHECK_FALSE(d.requires_grad());

    CHECK(grad_enabled());
    {
        NoGradGuard ng;
        CHECK_FALSE(grad_enabled());
        Tensor y = op::mul(x, x);
        CHECK_FALSE(y.requires_grad());
    }
    CHECK(grad_enabled());

    Tensor loss = op::sum(op::mul(x, x.detach()));
    backward(loss);
    for (size_t i = 0; i < 4; ++i)
        CHECK(x.grad()[i] == doctest::Approx(x.value()[i]).epsilon(1e-12));
}

TEST_CASE("backward accumulates through a shared subexpression") {
    Tensor x = Tensor::from({1, 1}, {3.0}, true);
    Tensor y = op::mul(x, x);  // d/dx = 2x = 6
    backward(op::sum(y));
    CHECK(x.grad()[0] == doctest::Approx(6.0).epsilon(1e-12));
}

}  // TEST_SUITE
