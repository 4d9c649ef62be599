#include "opchecks.hpp"

#include <pwg/optim.hpp>

#include <doctest.h>

#include <cmath>

using namespace pwg;

namespace {

// Direct nested-loop cross-correlation with zero padding.
Image<double> conv_oracle(const Image<double> &x, const Conv2d<double> &conv) {
    const int k = conv.kernel(), r = k / 2, cin = conv.in_channels(), cout = conv.out_channels();
    Image<double> y(x.height(), x.width(), cout);
    for (int yy = 0; yy < x.height(); ++yy)
        for (int xx = 0; xx < x.width(); ++xx)
            for (int o = 0; o < cout; ++o) {
                double acc = conv.bias.value[o];
                for (int ky = 0; ky < k; ++ky)
                    for (int kx = 0; kx < k; ++kx) {
                        const int sy = yy + ky - r, sx = xx + kx - r;
                        if (sy < 0 || sy >= x.height() || sx < 0 || sx >= x.width()) continue;
                        for (int i = 0; i < cin; ++i)
                            acc += x(sy, sx, i) * conv.weight.value[((ky * k + kx) * cin + i) * cout + o];
                    }
                y(yy, xx, o) = acc;
            }
    return y;
}

}  // namespace

TEST_CASE("conv2d: identity kernel") {
    Conv2d<double> conv("id", 3, 1, 1);
    conv.weight.value[4] = 1.0;
    Rng rng(1);
    const auto x = test::random_image<double>(5, 6, 1, rng);
    CHECK(conv.forward(x) == x);
}

TEST_CASE("conv2d: all-ones 3x3 on a constant image") {
    Conv2d<double> conv("ones", 3, 1, 1);
    std::fill(conv.weight.value.begin(), conv.weight.value.end(), 1.0);
    const Image<double> x(6, 6, 1, 0.7);
    const auto y = conv.forward(x);
    for (int yy = 1; yy < 5; ++yy)
        for (int xx = 1; xx < 5; ++xx) CHECK(y(yy, xx) == doctest::Approx(9 * 0.7));
    CHECK(y(0, 0) == doctest::Approx(4 * 0.7));  // zero padding at the corner
}

TEST_CASE("conv2d: random 5x5 matches the nested-loop oracle") {
    Rng rng(2);
    for (int trial = 0; trial < 5; ++trial) {
        const int cin = 1 + static_cast<int>(rng.below(4)), cout = 1 + static_cast<int>(rng.below(4));
        Conv2d<double> conv("c", 5, cin, cout);
        conv.init_xavier(trial);
        for (auto &b : conv.bias.value) b = rng.uniform(-1, 1);
        const auto x = test::random_image<double>(7, 9, cin, rng);
        const auto y = conv.forward(x), ref = conv_oracle(x, conv);
        for (std::size_t i = 0; i < y.size(); ++i) CHECK(std::abs(y.vec()[i] - ref.vec()[i]) < 1e-5);
    }
}

TEST_CASE("conv2d: shape errors") {
    CHECK_THROWS_AS(Conv2d<double>("even", 4, 1, 1), ArgumentError);
    Conv2d<double> conv("c", 3, 2, 1);
    CHECK_THROWS_AS(conv.forward(Image<double>(4, 4, 3)), ArgumentError);
}

TEST_CASE("activations") {
    CHECK(relu(-1.0) == 0.0);
    CHECK(relu(2.0) == 2.0);
    CHECK(leaky_relu(-1.0, 0.01) == doctest::Approx(-0.01));
    CHECK(leaky_relu(3.0, 0.01) == 3.0);
    const double h = 1e-5;
    const double fd = (leaky_relu(-3.0 + h, 0.01) - leaky_relu(-3.0 - h, 0.01)) / (2 * h);
    CHECK(fd == doctest::Approx(0.01).epsilon(1e-9));
    std::vector<double> out{leaky_relu(-3.0, 0.01)}, g{1.0};
    leaky_relu_backward<double>(out, g, 0.01);
    CHECK(g[0] == doctest::Approx(fd).epsilon(1e-9));
}

TEST_CASE("softmax_channels") {
    Image<double> x(1, 3, 2);
    x.vec() = {0.0, 0.0, std::log(3.0), 0.0, 100.0, 100.0};
    const auto y = softmax_channels(x);
    CHECK(y(0, 0, 0) == doctest::Approx(0.5));
    CHECK(y(0, 1, 0) == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(y(0, 1, 1) == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(std::abs(y(0, 2, 0) - 0.5) < 1e-6);

    Rng rng(3);
    const auto z = test::random_image<double>(5, 5, 7, rng, -10, 10);
    Image<double> shifted = z;
    for (auto &v : shifted.vec()) v += 100.0;
    const auto a = softmax_channels(z), b = softmax_channels(shifted);
    for (int p = 0; p < a.pixels(); ++p) {
        double sum = 0;
        for (int c = 0; c < 7; ++c) {
            const double v = a(p / 5, p % 5, c);
            CHECK(v > 0.0);
            CHECK(v < 1.0);
            CHECK(std::abs(v - b(p / 5, p % 5, c)) < 1e-6);
            sum += v;
        }
        CHECK(std::abs(sum - 1.0) < 1e-6);
    }
    CHECK_THROWS_AS(softmax_channels(Image<double>(2, 2, 1)), ArgumentError);
}

TEST_CASE("stop_gradient") {
    Rng rng(4);
    const auto x = test::random_image<double>(3, 4, 2, rng);
    const auto y = stop_gradient(x);
    CHECK(std::memcmp(x.data(), y.data(), x.size() * sizeof(double)) == 0);
    const auto g = stop_gradient_backward(test::random_image<double>(3, 4, 2, rng));
    CHECK(g.same_shape(x));
    for (double v : g.vec()) CHECK(v == 0.0);
}

TEST_CASE("xavier_init") {
    const auto a = xavier_init<double>({5, 5, 10, 10}, 9);
    const double bound = std::sqrt(6.0 / 500.0);
    CHECK(bound == doctest::Approx(0.10954).epsilon(1e-4));
    CHECK(a.size() == 2500);
    for (double v : a) CHECK(std::abs(v) <= bound);
    CHECK(a == xavier_init<double>({5, 5, 10, 10}, 9));
    CHECK(a != xavier_init<double>({5, 5, 10, 10}, 10));

    const auto big = xavier_init<double>({1000, 100}, 11);
    const double b2 = std::sqrt(6.0 / 1100.0);
    double mean = 0;
    for (double v : big) mean += v;
    mean /= big.size();
    const double sd = b2 / std::sqrt(3.0);
    CHECK(std::abs(mean) < 3 * sd / std::sqrt(static_cast<double>(big.size())));
    CHECK_THROWS_AS(xavier_init<double>({3}, 0), ArgumentError);
}

TEST_CASE("adam_step: scalar oracle") {
    Parameter<double> p("p", {1});
    p.value[0] = 1.0;
    p.grad[0] = 1.0;
    adam_step(p, 1e-4);
    const double m = 0.1 * 1.0, v = 0.001 * 1.0;
    const double m_hat = m / (1 - 0.9), v_hat = v / (1 - 0.999);
    CHECK(p.value[0] == doctest::Approx(1.0 - 1e-4 * m_hat / (std::sqrt(v_hat) + 1e-8)).epsilon(1e-15));
    CHECK(p.step == 1);
    CHECK(p.grad[0] == 0.0);

    // Second step, again by hand.
    p.grad[0] = -0.5;
    const double before = p.value[0];
    adam_step(p, 1e-4);
    const double m2 = 0.9 * m + 0.1 * -0.5, v2 = 0.999 * v + 0.001 * 0.25;
    const double upd = 1e-4 * (m2 / (1 - 0.81)) / (std::sqrt(v2 / (1 - 0.999 * 0.999)) + 1e-8);
    CHECK(p.value[0] == doctest::Approx(before - upd).epsilon(1e-14));
}

TEST_CASE("adam_step: zero gradient leaves values unchanged") {
    Parameter<float> p("p", {4});
    p.value = {1, 2, 3, 4};
    p.grad = {1, 0, 0, 0};
    adam_step(p, 1e-3);
    const auto snapshot = p.value;
    adam_step(p, 1e-3);  // all-zero gradient
    CHECK(p.value == snapshot);
    CHECK(p.step == 2);
    CHECK(p.m[0] != 0.0f);
}

TEST_CASE("adam_step: learning rates and errors") {
    for (double lr : {1e-4, 1e-5, 1e-6}) {
        Parameter<double> p("p", {1});
        p.grad[0] = 2.0;
        adam_step(p, lr);
        // The first bias-corrected step moves by almost exactly lr.
        CHECK(p.value[0] == doctest::Approx(-lr).epsilon(1e-6));
    }
    Parameter<double> p("layer.weight", {2});
    p.grad[1] = std::numeric_limits<double>::infinity();
    try {
        adam_step(p, 1e-4);
        FAIL("expected an error");
    } catch (const ArgumentError &e) {
        CHECK(std::string(e.what()).find("layer.weight") != std::string::npos);
    }
    CHECK_THROWS_AS(adam_step(p, 0.0), ArgumentError);
}

TEST_CASE("grad_check on sum of squares") {
    Rng rng(5);
    std::vector<double> x(20);
    for (auto &v : x) v = rng.uniform(-2, 2);
    const ScalarFn f = [](std::span<const double> v) {
        double s = 0;
        for (double a : v) s += a * a;
        return s;
    };
    const GradientFn g = [](std::span<const double> v) {
        std::vector<double> out(v.begin(), v.end());
        for (auto &a : out) a *= 2;
        return out;
    };
    const auto r = grad_check(f, g, x);
    CHECK(r.passed);
    CHECK(r.max_rel_error < 1e-6);
    CHECK(r.checked == 20);

    // A wrong gradient is caught.
    const GradientFn wrong = [&](std::span<const double> v) {
        auto out = g(v);
        out[3] *= 1.01;
        return out;
    };
    const auto bad = grad_check(f, wrong, x);
    CHECK_FALSE(bad.passed);
    CHECK(bad.worst_index == 3);

    GradCheckOptions sub;
    sub.max_coords = 5;
    CHECK(grad_check(f, g, x, sub).checked == 5);
}

TEST_CASE("grad_check skips coordinates that straddle a kink") {
    // f(x) = sum relu(x); x[0] sits inside the finite-difference stencil of the kink.
    const std::vector<double> x{3e-6, 0.5, -0.7};
    const ScalarFn f = [](std::span<const double> v) {
        double s = 0;
        for (double a : v) s += relu(a);
        return s;
    };
    const GradientFn g = [](std::span<const double> v) {
        std::vector<double> out;
        for (double a : v) out.push_back(a > 0 ? 1.0 : 0.0);
        return out;
    };
    CHECK_FALSE(grad_check(f, g, x).passed);
    GradCheckOptions opts;
    opts.pattern = [](std::span<const double> v) {
        std::vector<std::uint8_t> p;
        for (double a : v) p.push_back(a > 0);
        return p;
    };
    const auto r = grad_check(f, g, x, opts);
    CHECK(r.passed);
    CHECK(r.skipped == 1);
    CHECK(r.checked == 2);
}

TEST_CASE("conv + relu + softmax stack passes grad_check") {
    Rng rng(6);
    ConvStack<double> stack("s", 3, {2, 4, 3});
    stack.init_xavier(1);
    auto x = test::random_image<double>(5, 5, 2, rng);
    const auto r = test::random_image<double>(5, 5, 3, rng);
    test::Params ps;
    stack.collect(ps);
    auto loss = [&] { return test::dot(softmax_channels(stack.forward(x, nullptr)), r); };
    const auto rep = test::check_params(
        ps, loss,
        [&] {
            typename ConvStack<double>::Tape t;
            const auto logits = stack.forward(x, &t);
            stack.backward(t, softmax_channels_backward(softmax_channels(logits), r), false);
        },
        {});
    CHECK(rep.passed);
    CHECK(rep.max_rel_error < 1e-4);
}

TEST_CASE("every differentiable op passes grad_check") {
    for (std::uint64_t seed : {1, 2}) {
        for (const auto &c : test::run_op_checks(seed)) {
            INFO(c.name << " seed " << seed << " rel " << c.report.max_rel_error << " abs " << c.report.max_abs_error);
            CHECK(c.report.checked > 0);
            CHECK(c.report.passed);
        }
    }
}

TEST_CASE("parameter cast round-trips through double") {
    Parameter<float> p("x", {3});
    p.value = {1.5f, -2.25f, 1e-7f};
    p.m = {0.1f, 0.2f, 0.3f};
    p.step = 7;
    const auto back = p.cast<double>().cast<float>();
    CHECK(back.value == p.value);
    CHECK(back.m == p.m);
    CHECK(back.step == 7);
}
