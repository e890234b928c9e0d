#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "vr/common.hpp"
#include "vr/optim.hpp"

using namespace vr;

namespace {

Tensor param_with_grad(std::vector<double> values, std::vector<double> grad) {
    const int n = static_cast<int>(values.size());
    Tensor p = Tensor::from({n}, std::move(values), true);
    p.grad() = std::move(grad);
    return p;
}

double l2(const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

}  // namespace

TEST_CASE("schedule warms up linearly then decays along a cosine") {
    // warmup over the first 10 of 100 steps
    CHECK(lr_schedule(0, 100, 1.0, 0.1) == 0.0);
    CHECK(lr_schedule(5, 100, 1.0, 0.1) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(lr_schedule(10, 100, 1.0, 0.1) == doctest::Approx(1.0).epsilon(1e-12));
    // halfway through the cosine span the rate is half the peak
    CHECK(lr_schedule(55, 100, 1.0, 0.1) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(lr_schedule(100, 100, 1.0, 0.1) == doctest::Approx(0.0).epsilon(1e-12));

    // no warmup: starts at the peak immediately
    CHECK(lr_schedule(0, 100, 2.0, 0.0) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(lr_schedule(50, 100, 2.0, 0.0) == doctest::Approx(1.0).epsilon(1e-12));

    // monotone decay after warmup
    double prev = lr_schedule(10, 100, 1.0, 0.1);
    for (int s = 11; s <= 100; ++s) {
        double cur = lr_schedule(s, 100, 1.0, 0.1);
        CHECK(cur <= prev + 1e-15);
        prev = cur;
    }

    CHECK_THROWS_AS(lr_schedule(-1, 100, 1.0, 0.1), ValueError);
    CHECK_THROWS_AS(lr_schedule(101, 100, 1.0, 0.1), ValueError);
    CHECK_THROWS_AS(lr_schedule(0, 0, 1.0, 0.1), ValueError);
    CHECK_THROWS_AS(lr_schedule(0, 100, 1.0, 1.0), ValueError);
}

TEST_CASE("global norm clipping rescales only when above the ceiling") {
    Tensor a = param_with_grad({1, 2}, {3, 0});
    Tensor b = param_with_grad({0, 0}, {0, 4});
    std::vector<Tensor> params{a, b};

    SUBCASE("above the ceiling") {
        double norm = clip_global_norm(params, 1.0);
        CHECK(norm == doctest::Approx(5.0).epsilon(1e-12));
        std::vector<double> all{a.grad_values()[0], a.grad_values()[1], b.grad_values()[0],
                                b.grad_values()[1]};
        CHECK(l2(all) == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(a.grad_values()[0] == doctest::Approx(3.0 / 5.0).epsilon(1e-12));
        CHECK(b.grad_values()[1] == doctest::Approx(4.0 / 5.0).epsilon(1e-12));
    }
    SUBCASE("below the ceiling leaves gradients alone") {
        double norm = clip_global_norm(params, 10.0);
        CHECK(norm == doctest::Approx(5.0).epsilon(1e-12));
        CHECK(a.grad_values()[0] == 3.0);
        CHECK(b.grad_values()[1] == 4.0);
    }
    SUBCASE("non-positive ceiling disables clipping") {
        double norm = clip_global_norm(params, 0.0);
        CHECK(norm == doctest::Approx(5.0).epsilon(1e-12));
        CHECK(a.grad_values()[0] == 3.0);
        norm = clip_global_norm(params, -1.0);
        CHECK(a.grad_values()[0] == 3.0);
        CHECK(norm == doctest::Approx(5.0).epsilon(1e-12));
    }
    SUBCASE("missing gradients count as zero") {
        Tensor c = Tensor::from({2}, {7, 7}, true);  // never received a grad
        std::vector<Tensor> with_missing{a, c};
        double norm = clip_global_norm(with_missing, 100.0);
        CHECK(norm == doctest::Approx(3.0).epsilon(1e-12));
    }
}

TEST_CASE("adamw fixed points: zero gradient and pure decay") {
    SUBCASE("zero gradient, zero decay: parameters do not move") {
        Tensor p = param_with_grad({1.5, -2.5}, {0, 0});
        AdamW opt({p}, 0.0);
        opt.step(0.1);
        CHECK(p.values()[0] == 1.5);
        CHECK(p.values()[1] == -2.5);
        CHECK(opt.step_count() == 1);
    }
    SUBCASE("zero gradient with decay shrinks multiplicatively") {
        Tensor p = param_with_grad({2.0, -4.0}, {0, 0});
        AdamW opt({p}, 0.5);
        opt.step(0.1);  // p <- p - lr * wd * p = p * (1 - 0.05)
        CHECK(p.values()[0] == doctest::Approx(2.0 * 0.95).epsilon(1e-12));
        CHECK(p.values()[1] == doctest::Approx(-4.0 * 0.95).epsilon(1e-12));
    }
}

TEST_CASE("adamw first step follows the bias-corrected update exactly") {
    const double g = 3.0, lr = 0.01, eps = 1e-8;
    Tensor p = param_with_grad({1.0}, {g});
    AdamW opt({p}, 0.0);
    opt.step(lr);
    // after bias correction the first update is lr * g / (|g| + eps)
    const double expect = 1.0 - lr * (g / (std::sqrt(g * g) + eps));
    CHECK(p.values()[0] == doctest::Approx(expect).epsilon(1e-14));

    // second step with the same gradient, tracked against hand arithmetic
    p.grad() = {g};
    opt.step(lr);
    const double m2 = 0.9 * (0.1 * g) + 0.1 * g;
    const double v2 = 0.999 * (0.001 * g * g) + 0.001 * g * g;
    const double mh = m2 / (1 - 0.9 * 0.9);
    const double vh = v2 / (1 - 0.999 * 0.999);
    CHECK(p.values()[0] ==
          doctest::Approx(expect - lr * (mh / (std::sqrt(vh) + eps))).epsilon(1e-12));
}

TEST_CASE("adamw drives a quadratic to its minimum") {
    Tensor w = Tensor::from({1}, {5.0}, true);
    AdamW opt({w}, 0.0);
    for (int i = 0; i < 200; ++i) {
        opt.zero_grad();
        w.grad() = {2.0 * w.values()[0]};
        opt.step(0.1);
    }
    CHECK(std::abs(w.values()[0]) < 1e-3);
}

TEST_CASE("adamw decouples decay from the gradient path") {
    // with a huge gradient, the adaptive term saturates near sign(g), so
    // doubling the gradient barely changes the step; decay acts on p alone
    Tensor p1 = param_with_grad({1.0}, {1e6});
    Tensor p2 = param_with_grad({1.0}, {2e6});
    AdamW o1({p1}, 0.0), o2({p2}, 0.0);
    o1.step(0.01);
    o2.step(0.01);
    CHECK(p1.values()[0] == doctest::Approx(p2.values()[0]).epsilon(1e-9));
}

TEST_CASE("adamw state accessors round-trip") {
    Tensor p = param_with_grad({1.0, 2.0, 3.0}, {0.1, 0.2, 0.3});
    AdamW opt({p}, 0.1);
    opt.step(0.05);
    REQUIRE(opt.first_moments().size() == 1);
    REQUIRE(opt.first_moments()[0].size() == 3);
    CHECK(opt.first_moments()[0][0] == doctest::Approx(0.01).epsilon(1e-12));
    CHECK(opt.second_moments()[0][2] == doctest::Approx(0.001 * 0.09).epsilon(1e-12));
    opt.set_step_count(7);
    CHECK(opt.step_count() == 7);

    CHECK_THROWS_AS(AdamW({p}, -0.1), ValueError);
    CHECK_THROWS_AS(AdamW({p}, 0.0, 1.0), ValueError);
    CHECK_THROWS_AS(AdamW({p}, 0.0, 0.9, 0.999, 0.0), ValueError);
}

TEST_CASE("zero_grad clears accumulated gradients") {
    Tensor p = param_with_grad({1.0}, {5.0});
    AdamW opt({p}, 0.0);
    opt.zero_grad();
    CHECK_FALSE(p.has_grad());
    opt.step(0.1);  // missing grad counts as zero
    CHECK(p.values()[0] == 1.0);
}
