#include "vmp/error.hpp"
#include "vmp/volterra.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace vmp;

namespace {

double max_gap(const StateEnsemble& a, const StateEnsemble& b) {
    double g = 0.0;
    for (std::size_t m = 0; m < a.path_count(); ++m)
        for (std::size_t i = 0; i <= a.steps(); ++i) g = std::max(g, std::abs(a.at(m, i) - b.at(m, i)));
    return g;
}

ControlProcess unit_control() { return ControlProcess::constant(1.0, {-10.0, 10.0}); }

} // namespace

TEST_CASE("zero coefficients reproduce xi on both forms") {
    auto model = registry_get("exp_kernel_linear", {{"b0", 0.0}, {"sigma0", 0.0}, {"xi0", 0.5}, {"xi1", 2.0}});
    auto paths = sample_paths(TimeGrid(1.0, 16), JumpModel::none(), 50, 1);
    auto a = simulate_integral_form(model, unit_control(), paths);
    auto b = simulate_differential_form(model, unit_control(), paths);
    for (std::size_t m = 0; m < 50; ++m)
        for (std::size_t i = 0; i <= 16; ++i) {
            double xi = 0.5 + 2.0 * paths.grid().node(i);
            CHECK(a.at(m, i) == xi);
            CHECK(b.at(m, i) == doctest::Approx(xi).epsilon(1e-12));
        }
}

TEST_CASE("differential form integrates xi prime") {
    CustomModelParts parts;
    parts.xi = [](double t) { return t; };
    parts.xi_prime = [](double) { return 1.0; };
    auto model = make_custom_model(parts);
    auto paths = sample_paths(TimeGrid(1.0, 8), JumpModel::none(), 4, 2);
    auto s = simulate_differential_form(model, unit_control(), paths);
    for (std::size_t i = 0; i <= 8; ++i) CHECK(s.at(3, i) == doctest::Approx(paths.grid().node(i)).epsilon(1e-12));
}

TEST_CASE("initial state equals xi(0)") {
    auto model = registry_get("constant", {{"xi0", 1.7}, {"gamma0", 0.3}});
    auto paths = sample_paths(TimeGrid(1.0, 8), JumpModel::make(2.0, {-0.5, 0.5}, {0.5, 0.5}), 20, 3);
    auto s = simulate(model, unit_control(), paths, Scheme::integral);
    for (std::size_t m = 0; m < 20; ++m) CHECK(s.at(m, 0) == 1.7);
}

TEST_CASE("GBM mean under the integral form") {
    auto model = registry_get("constant", {{"b0", 0.05}, {"sigma0", 0.2}});
    auto paths = sample_paths(TimeGrid(1.0, 64), JumpModel::none(), 100000, 4);
    auto s = simulate_integral_form(model, unit_control(), paths);
    auto e = mean_estimate(s.column(64));
    CHECK(std::abs(e.value - std::exp(0.05)) <= 3.0 * e.se);
}

TEST_CASE("constant kernels: both forms agree pathwise") {
    auto model = registry_get("constant", {{"gamma0", 0.2}});
    auto paths = sample_paths(TimeGrid(1.0, 32), JumpModel::make(1.0, {-1.0, 1.0}, {0.5, 0.5}), 200, 5);
    auto a = simulate_integral_form(model, unit_control(), paths);
    auto b = simulate_differential_form(model, unit_control(), paths);
    CHECK(max_gap(a, b) <= 1e-12);
}

TEST_CASE("exp kernels: forms converge at first order") {
    auto model = registry_get("exp_kernel_linear", {{"lambda_b", 1.0}, {"lambda_sigma", 1.0}});
    auto fine = sample_paths(TimeGrid(1.0, 128), JumpModel::none(), 2000, 6);
    std::vector<double> gaps;
    for (std::size_t f : {4u, 2u, 1u}) {
        auto p = f == 1 ? fine : fine.coarsened(f);
        gaps.push_back(max_gap(simulate_integral_form(model, unit_control(), p),
                               simulate_differential_form(model, unit_control(), p)));
    }
    for (std::size_t k = 0; k + 1 < gaps.size(); ++k) {
        double ratio = gaps[k] / gaps[k + 1];
        CHECK(ratio >= 1.5);
        CHECK(ratio <= 3.0);
    }
}

TEST_CASE("performance of deterministic states") {
    auto model = registry_get("constant", {{"b0", 0.0}, {"sigma0", 0.0}, {"xi0", 2.5}});
    auto paths = sample_paths(TimeGrid(2.0, 16), JumpModel::none(), 100, 7);
    auto s = simulate(model, unit_control(), paths, Scheme::integral);
    auto lin = evaluate_performance(performance_get("linear", {}), s);
    CHECK(lin.value == 2.5);
    CHECK(lin.se == 0.0);
    auto run = evaluate_performance(performance_get("zero", {{"running_const", 1.0}}), s);
    CHECK(run.value == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(run.se == doctest::Approx(0.0));
}

TEST_CASE("log utility of GBM wealth") {
    auto model = registry_get("constant", {{"b0", 0.05}, {"sigma0", 0.2}});
    auto paths = sample_paths(TimeGrid(1.0, 64), JumpModel::none(), 100000, 8);
    auto s = simulate_log_euler(model, unit_control(), paths);
    auto J = evaluate_performance(performance_from_utility(UtilitySpec::log_utility()), s);
    CHECK(std::abs(J.value - 0.03) <= 3.0 * J.se);
}

TEST_CASE("performance stderr scales like one over root M") {
    auto model = registry_get("constant", {});
    auto spec = performance_get("quadratic", {});
    auto big = sample_paths(TimeGrid(1.0, 16), JumpModel::none(), 100000, 9);
    auto all = simulate(model, unit_control(), big, Scheme::integral);
    auto per = performance_per_path(spec, all);
    double prev = 0.0;
    for (std::size_t M : {1000u, 10000u, 100000u}) {
        auto e = mean_estimate(std::span<const double>(per.data(), M));
        if (prev > 0.0) {
            double ratio = prev / e.se / std::sqrt(10.0);
            CHECK(ratio >= 1.0 / 1.5);
            CHECK(ratio <= 1.5);
        }
        prev = e.se;
    }
}

TEST_CASE("log-Euler rejects jump kernels") {
    auto model = registry_get("constant", {{"gamma0", 0.3}});
    auto paths = sample_paths(TimeGrid(1.0, 8), JumpModel::make(1.0, {1.0}, {1.0}), 10, 1);
    CHECK_THROWS_AS(simulate_log_euler(model, unit_control(), paths), ContractViolation);
}

TEST_CASE("non-finite states abort with a location") {
    CustomModelParts parts;
    parts.xi = [](double) { return 1.0; };
    parts.drift.value = [](const KernelArgs& a) { return a.x * a.x * 1e6; };
    auto model = make_custom_model(parts);
    auto paths = sample_paths(TimeGrid(1.0, 64), JumpModel::none(), 2, 1);
    CHECK_THROWS_AS(simulate_integral_form(model, unit_control(), paths), SimulationError);
}

TEST_CASE("trajectory table") {
    auto model = registry_get("constant", {});
    auto paths = sample_paths(TimeGrid(1.0, 4), JumpModel::none(), 100, 1);
    auto t = trajectory_table(simulate(model, unit_control(), paths, Scheme::integral));
    CHECK(t.header() == std::vector<std::string>{"t", "mean_X", "std_X", "q05", "q95"});
    CHECK(t.rows().size() == 5);
    CHECK(t.rows()[0][1] == fmt_number(1.0));
}
