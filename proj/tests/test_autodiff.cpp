#include <doctest.h>

#include <cmath>
#include <random>

#include "hscat/autodiff.hpp"
#include "hscat/gradcheck.hpp"

using namespace hscat;
using namespace hscat::ad;

namespace {

Tensor random_tensor(std::vector<int> shape, std::mt19937_64& rng, double sd = 1.0) {
    Tensor t(std::move(shape));
    std::normal_distribution<double> n(0.0, sd);
    for (double& v : t.data) v = n(rng);
    return t;
}

// Small two-layer network: dense -> relu -> dense -> sum of squares.
double two_layer(const Tensor& x, const Tensor& w1, const Tensor& b1, const Tensor& w2, const Tensor& b2) {
    const int h = w1.dim(0), in = w1.dim(1), out = w2.dim(0);
    std::vector<double> hid(static_cast<std::size_t>(h));
    for (int i = 0; i < h; ++i) {
        double a = b1.data[std::size_t(i)];
        for (int k = 0; k < in; ++k) a += w1.data[std::size_t(i * in + k)] * x.data[std::size_t(k)];
        hid[std::size_t(i)] = std::max(0.0, a);
    }
    double loss = 0.0;
    for (int o = 0; o < out; ++o) {
        double a = b2.data[std::size_t(o)];
        for (int k = 0; k < h; ++k) a += w2.data[std::size_t(o * h + k)] * hid[std::size_t(k)];
        loss += a * a;
    }
    return loss;
}

}  // namespace

TEST_CASE("every op passes the finite-difference suite") {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        for (const gradcheck::CheckResult& r : gradcheck::autodiff_suite(seed)) {
            CAPTURE(seed);
            CAPTURE(r.name);
            CAPTURE(r.max_rel_error);
            CHECK(r.entries > 0);
            CHECK(r.max_rel_error <= gradcheck::kAutodiffTolerance);
            CHECK(r.pass);
        }
    }
}

TEST_CASE("relu gradient examples") {
    Tape tape;
    Var x = tape.leaf(Tensor({2}, std::vector<double>{-1.0, 1.0}));
    Var y = sum(scale(relu(x), 3.0));
    tape.backward(y);
    CHECK(x.grad().data[0] == 0.0);
    CHECK(x.grad().data[1] == 3.0);
}

TEST_CASE("identity 1x1 convolution") {
    std::mt19937_64 rng(4);
    const Tensor img = random_tensor({3, 5, 6}, rng);
    Tensor w({3, 3, 1, 1});
    for (int c = 0; c < 3; ++c) w.data[std::size_t(c * 3 + c)] = 1.0;
    Tape tape;
    Var x = tape.leaf(img);
    Var y = conv2d(x, tape.constant(w), tape.constant(Tensor({3})));
    CHECK(y.value() == img);
    tape.backward(sum(y));
    for (double g : x.grad().data) CHECK(g == 1.0);
}

TEST_CASE("taped convolution matches the direct loops") {
    std::mt19937_64 rng(5);
    for (Conv2dOptions opt : {Conv2dOptions{1, 1, 1}, Conv2dOptions{2, 1, 1}, Conv2dOptions{2, 0, 1}, Conv2dOptions{1, 0, 0}}) {
        const Tensor x = random_tensor({4, 9, 8}, rng);
        const Tensor w = random_tensor({5, 4, 3, 3}, rng);
        const Tensor b = random_tensor({5}, rng);
        Tape tape;
        const Tensor fast = conv2d(tape.constant(x), tape.constant(w), tape.constant(b), opt).value();
        const Tensor ref = conv2d_direct(x, w, b, opt);
        REQUIRE(fast.shape == ref.shape);
        for (std::size_t n = 0; n < fast.size(); ++n) CHECK(fast.data[n] == doctest::Approx(ref.data[n]).epsilon(1e-12));
    }
}

TEST_CASE("simple backward examples") {
    std::mt19937_64 rng(6);
    const Tensor v = random_tensor({2, 3}, rng);
    {
        Tape tape;
        Var x = tape.leaf(v);
        tape.backward(sum(x));
        for (double g : x.grad().data) CHECK(g == 1.0);
    }
    {
        Tape tape;
        Var x = tape.leaf(v);
        tape.backward(mse(x, v));
        for (double g : x.grad().data) CHECK(g == 0.0);
    }
    {
        Tape tape;
        Var x = tape.leaf(v);
        Var unused = tape.leaf(v);
        tape.backward(mean(x));
        for (double g : unused.grad().data) CHECK(g == 0.0);
        CHECK(unused.grad().shape == v.shape);
    }
}

TEST_CASE("two-layer network against finite differences") {
    std::mt19937_64 rng(7);
    Parameter w1("w1", random_tensor({6, 4}, rng)), b1("b1", random_tensor({6}, rng, 0.1));
    Parameter w2("w2", random_tensor({3, 6}, rng)), b2("b2", random_tensor({3}, rng, 0.1));
    const Tensor x = random_tensor({4}, rng);
    Tape tape;
    Var h = relu(dense(tape.constant(x), tape.param(w1), tape.param(b1)));
    Var o = dense(h, tape.param(w2), tape.param(b2));
    tape.backward(sum(mul(o, o)));
    CHECK(tape.size() > 0);

    for (Parameter* p : {&w1, &b1, &w2, &b2}) {
        std::vector<double> numeric, analytic;
        for (std::size_t n = 0; n < p->value.size(); ++n) {
            const double orig = p->value.data[n];
            const double step = 1e-5 * (1.0 + std::abs(orig));
            p->value.data[n] = orig + step;
            const double up = two_layer(x, w1.value, b1.value, w2.value, b2.value);
            p->value.data[n] = orig - step;
            const double down = two_layer(x, w1.value, b1.value, w2.value, b2.value);
            p->value.data[n] = orig;
            numeric.push_back((up - down) / (2.0 * step));
            analytic.push_back(p->grad.data[n]);
        }
        CAPTURE(p->name);
        CHECK(gradcheck::max_relative_error(analytic, numeric) <= 1e-4);
    }
}

TEST_CASE("gradients are linear in the loss") {
    std::mt19937_64 rng(8);
    const Tensor v = random_tensor({3, 4, 4}, rng);
    const Tensor w = random_tensor({2, 3, 3, 3}, rng);
    auto grad_of = [&](double a, double b) {
        Tape tape;
        Var x = tape.leaf(v);
        Var y = conv2d(x, tape.constant(w), tape.constant(Tensor({2})), {1, 1, 1});
        Var l1 = sum(relu(y));
        Var l2 = mean(mul(y, y));
        tape.backward(add(scale(l1, a), scale(l2, b)));
        return x.grad();
    };
    const Tensor g1 = grad_of(1.0, 0.0), g2 = grad_of(0.0, 1.0), g = grad_of(2.5, -0.7);
    for (std::size_t n = 0; n < g.size(); ++n) CHECK(g.data[n] == doctest::Approx(2.5 * g1.data[n] - 0.7 * g2.data[n]).epsilon(1e-12));
}

TEST_CASE("gradients are deterministic") {
    auto run = [] {
        std::mt19937_64 rng(9);
        Parameter w("w", random_tensor({4, 2, 3, 3}, rng));
        Parameter b("b", random_tensor({4}, rng));
        const Tensor x = random_tensor({2, 8, 8}, rng);
        Tape tape;
        Var y = conv2d(tape.constant(x), tape.param(w), tape.param(b), {2, 1, 1});
        tape.backward(masked_l1(y, Tensor(y.shape(), 0.3), Tensor(y.shape(), 1.0)));
        return w.grad;
    };
    CHECK(run() == run());
}

TEST_CASE("parameter gradients accumulate until zeroed") {
    Parameter p("p", Tensor({3}, 1.0));
    for (int rep = 0; rep < 2; ++rep) {
        Tape tape;
        tape.backward(sum(tape.param(p)));
    }
    for (double g : p.grad.data) CHECK(g == 2.0);
    p.zero_grad();
    for (double g : p.grad.data) CHECK(g == 0.0);
}

TEST_CASE("error handling") {
    Tape tape;
    Var x = tape.leaf(Tensor({2, 3}, 1.0));
    CHECK_THROWS_AS(tape.backward(x), ShapeError);
    CHECK_THROWS_AS(add(x, tape.constant(Tensor({3, 2}))), ShapeError);
    CHECK_THROWS_AS(reshape(x, {5}), ShapeError);
    CHECK_THROWS_AS(slice(x, 1, 3), ShapeError);
    CHECK_THROWS_AS(depth_to_space(tape.leaf(Tensor({3, 2, 2})), 2, 1), ShapeError);
    CHECK_THROWS_AS(outer3(tape.leaf(Tensor({2, 4})), tape.leaf(Tensor({2, 3, 3})), 3), ShapeError);
    CHECK_THROWS_AS(masked_l1(x, Tensor({2, 3}), Tensor({2, 3}, 0.0)), ConfigError);
    CHECK_THROWS_AS(conv2d(tape.leaf(Tensor({2, 4, 4})), tape.leaf(Tensor({3, 3, 3, 3})), tape.leaf(Tensor({3}))), ShapeError);

    Tape other;
    CHECK_THROWS_AS(add(x, other.leaf(Tensor({2, 3}))), ConfigError);
    CHECK_THROWS_AS(other.backward(sum(x)), ConfigError);

    tape.backward(sum(x));
    CHECK_THROWS_AS(tape.backward(sum(x)), ConfigError);
    tape.reset();
    CHECK(tape.size() == 0);
}

TEST_CASE("outer3 places the vector on the requested axis") {
    Tape tape;
    Tensor v({1, 2}, std::vector<double>{1.0, 2.0});
    Tensor m({1, 3, 4});
    for (std::size_t n = 0; n < m.size(); ++n) m.data[n] = double(n);
    const Tensor t0 = outer3(tape.constant(v), tape.constant(m), 0).value();
    CHECK(t0.shape == std::vector<int>{2, 3, 4});
    CHECK(t0.data[std::size_t((1 * 3 + 2) * 4 + 3)] == 2.0 * 11.0);
    const Tensor t2 = outer3(tape.constant(v), tape.constant(m), 2).value();
    CHECK(t2.shape == std::vector<int>{3, 4, 2});
    CHECK(t2.data[std::size_t((2 * 4 + 3) * 2 + 1)] == 2.0 * 11.0);
}

TEST_CASE("depth_to_space layout") {
    Tape tape;
    Tensor x({4, 1, 1}, std::vector<double>{1, 2, 3, 4});
    const Tensor y = depth_to_space(tape.constant(x), 2, 2).value();
    CHECK(y.shape == std::vector<int>{1, 2, 2});
    CHECK(y.data == std::vector<double>{1, 2, 3, 4});
}

TEST_CASE("Adam takes a bias-corrected first step of size lr") {
    Parameter p("p", Tensor({3}, std::vector<double>{1.0, -2.0, 0.5}));
    p.grad = Tensor({3}, std::vector<double>{0.3, -4.0, 0.0});
    Adam opt({&p}, AdamConfig{0.01});
    opt.step();
    CHECK(p.value.data[0] == doctest::Approx(1.0 - 0.01).epsilon(1e-6));
    CHECK(p.value.data[1] == doctest::Approx(-2.0 + 0.01).epsilon(1e-6));
    CHECK(p.value.data[2] == 0.5);
    opt.zero_grad();
    CHECK(p.grad.data[1] == 0.0);
}
