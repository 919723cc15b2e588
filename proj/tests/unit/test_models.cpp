#include "vmp/error.hpp"
#include "vmp/models.hpp"

#include <doctest.h>

#include <cmath>

using namespace vmp;

namespace {

double fd_t(const KernelFn& f, KernelArgs a) {
    double h = 1e-6;
    KernelArgs up = a, dn = a;
    up.t += h;
    dn.t -= h;
    return (f(up) - f(dn)) / (2 * h);
}

} // namespace

TEST_CASE("registry entries build and self-test") {
    for (const auto& name : registry_names()) {
        if (name == "custom") {
            CHECK_THROWS_AS(registry_get(name, {}), ConfigError);
            continue;
        }
        CHECK_NOTHROW(registry_get(name, {{"lambda_b", 0.7}, {"lambda_sigma", 1.3}, {"gamma0", 0.1}}));
    }
    CHECK_THROWS_AS(registry_get("nope", {}), ConfigError);
}

TEST_CASE("constant model has no time derivative") {
    auto m = registry_get("constant", {{"b0", 0.05}, {"sigma0", 0.2}});
    KernelArgs a{0.7, 0.2, 1.3, 0.9, 0.0};
    CHECK(m.drift.d_t(a) == 0.0);
    CHECK(m.diffusion.d_t(a) == 0.0);
    CHECK(m.memoryless());
    CHECK(m.b(0.7, 0.2, 1.3, 0.9) == doctest::Approx(0.05 * 0.9 * 1.3));
    CHECK(m.sigma(0.7, 0.2, 1.3, 0.9) == doctest::Approx(0.2 * 0.9 * 1.3));
    CHECK(m.gamma(0.7, 0.2, 1.3, 0.9, 1.0) == 0.0);
}

TEST_CASE("exponential kernel time derivative") {
    auto m = registry_get("exp_kernel_linear", {{"b0", 0.05}, {"lambda_b", 1.0}});
    KernelArgs a{0.9, 0.3, 1.1, 0.8, 0.0};
    double expected = -0.05 * std::exp(-(0.9 - 0.3)) * 0.8 * 1.1;
    CHECK(m.drift.d_t(a) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(fd_t(m.drift.value, a) == doctest::Approx(expected).epsilon(1e-6));
    CHECK_FALSE(m.memoryless());
}

TEST_CASE("x-independent entry") {
    auto m = registry_get("x_independent_linear", {{"lambda_b", 0.5}});
    CHECK(m.x_independent);
    KernelArgs a{0.9, 0.3, 5.0, 0.8, 0.0};
    CHECK(m.drift.d_x(a) == 0.0);
    CHECK(m.diffusion.d_x(a) == 0.0);
    a.x = -3.0;
    CHECK(m.drift.value(a) == doctest::Approx(m.drift.value({0.9, 0.3, 5.0, 0.8, 0.0})));
}

TEST_CASE("custom model fills missing partials and catches wrong ones") {
    CustomModelParts parts;
    parts.xi = [](double t) { return 1.0 + t * t; };
    parts.drift.value = [](const KernelArgs& a) { return std::sin(a.t - a.s) * a.x * a.v; };
    auto m = make_custom_model(parts);
    KernelArgs a{0.8, 0.1, 1.2, 0.5, 0.0};
    CHECK(m.drift.d_t(a) == doctest::Approx(std::cos(0.7) * 1.2 * 0.5).epsilon(1e-6));
    CHECK(m.xi_prime(0.5) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(m.diffusion.zero);

    CustomModelParts bad = parts;
    bad.drift.d_t = [](const KernelArgs& x) { return 2.0 * std::cos(x.t - x.s) * x.x * x.v; };
    try {
        make_custom_model(bad);
        FAIL("expected a partial self-test failure");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("drift") != std::string::npos);
    }
}

TEST_CASE("performance functionals") {
    for (const auto& name : performance_names()) {
        auto s = performance_get(name, {});
        CHECK_NOTHROW(validate_performance(s));
    }
    auto q = performance_get("quadratic", {{"a", 1.5}, {"running_kappa", 2.0}});
    CHECK(q.terminal(2.0) == doctest::Approx(6.0));
    CHECK(q.terminal_prime(2.0) == doctest::Approx(6.0));
    CHECK(q.running(0.0, 0.0, 3.0) == doctest::Approx(-9.0));
    CHECK(q.running_dv(0.0, 0.0, 3.0) == doctest::Approx(-6.0));
    CHECK_THROWS_AS(performance_get("unknown", {}), ConfigError);

    PerformanceSpec broken;
    broken.name = "broken";
    broken.terminal = [](double x) { return x * x; };
    broken.terminal_prime = [](double x) { return 3.0 * x; };
    CHECK_THROWS_AS(complete_performance(broken), ConfigError);
}

TEST_CASE("utilities") {
    auto lu = UtilitySpec::log_utility();
    for (double y : {0.01, 0.3, 1.0, 7.0, 1e4}) CHECK(lu.inverse_du(y) == 1.0 / y);
    auto pu = UtilitySpec::power(0.5);
    for (double x : {0.01, 0.5, 2.0, 100.0}) {
        CHECK(pu.inverse_du(pu.du(x)) == doctest::Approx(x).epsilon(1e-10));
        CHECK(lu.inverse_du(lu.du(x)) == doctest::Approx(x).epsilon(1e-10));
    }
    CHECK(pu.u(4.0) == doctest::Approx(4.0));
    CHECK_THROWS_AS(UtilitySpec::power(1.0), ConfigError);
    CHECK_THROWS_AS(UtilitySpec::power(0.0), ConfigError);
    CHECK_THROWS_AS(lu.inverse_du(-1.0), ContractViolation);
}

TEST_CASE("control processes stay admissible") {
    auto c = ControlProcess::constant(1.0, {0.0, 2.0});
    CHECK(c.value({}) == 1.0);
    CHECK_THROWS_AS(ControlProcess::constant(3.0, {0.0, 2.0}), ContractViolation);

    auto ol = ControlProcess::open_loop(1, 4, {0.1, 0.2, 0.3, 0.4}, {0.0, 1.0});
    ControlContext ctx;
    ctx.node = 2;
    ctx.path = 17;
    CHECK(ol.value(ctx) == doctest::Approx(0.3));

    auto fb = ControlProcess::feedback([](const ControlContext& x) { return x.state; }, {-1.0, 1.0});
    ctx.state = 0.5;
    CHECK(fb.value(ctx) == 0.5);
    ctx.state = 1.5;
    CHECK_THROWS_AS(fb.value(ctx), ContractViolation);

    Perturbation beta{1, 4, {0.0, 1.0, 0.0, 0.0}};
    auto shifted = ol.perturbed(beta, 0.25);
    ctx.node = 1;
    CHECK(shifted.value(ctx) == doctest::Approx(0.45));
    ctx.node = 2;
    CHECK(shifted.value(ctx) == doctest::Approx(0.3));
}

TEST_CASE("information modes") {
    TimeGrid g(1.0, 10);
    auto full = InfoMode::full();
    CHECK(full.feature_node(7, g) == 7);
    auto d = InfoMode::delayed(0.3);
    CHECK(d.lag_steps(g) == 3);
    CHECK(d.feature_node(7, g) == 4);
    CHECK(d.feature_node(2, g) == 0);
    CHECK_THROWS_AS(InfoMode::delayed(-0.1), ConfigError);
    CHECK_THROWS_AS(InfoMode::delayed(2.0).validate(g), ConfigError);
}
