#include "vmp/error.hpp"
#include "vmp/malliavin.hpp"
#include "vmp/portfolio.hpp"

#include <doctest.h>

#include <cmath>

using namespace vmp;

namespace {

MarketModel merton() { return {}; }

MarketModel memory_market() {
    MarketModel m;
    m.lambda_b = 1.0;
    return m;
}

} // namespace

TEST_CASE("theta0 closed forms") {
    TimeGrid g(1.0, 8);
    MarketModel flat;
    flat.b0 = 0.0;
    for (double v : theta0(flat, g)) CHECK(v == 0.0);
    for (double v : theta0(merton(), g)) CHECK(v == doctest::Approx(-0.25).epsilon(1e-15));
    auto th = theta0(memory_market(), g);
    for (std::size_t i = 0; i <= 8; ++i) CHECK(th[i] == doctest::Approx(-0.25 * std::exp(-(1.0 - g.node(i)))));

    MarketModel bad;
    bad.lambda_sigma = 3.0;
    bad.c0 = 0.15;
    CHECK_THROWS_AS(theta0(bad, g), ContractViolation);
    MarketModel broke;
    broke.x = 0.0;
    CHECK_THROWS_AS(broke.validate(g), ContractViolation);
}

TEST_CASE("exponential martingale") {
    TimeGrid g(1.0, 32);
    auto paths = sample_paths(g, JumpModel::none(), 100000, 1);
    std::vector<double> zero(33, 0.0);
    for (double v : y_martingale(zero, paths.path(0), 0.7)) CHECK(v == 0.7);

    auto th = theta0(memory_market(), g);
    std::vector<double> ratio(paths.path_count());
    for (std::size_t m = 0; m < ratio.size(); ++m) {
        auto Y = y_martingale(th, paths.path(m), 2.0);
        ratio[m] = Y.back() / 2.0;
        CHECK(Y.back() > 0.0);
    }
    auto e = mean_estimate(ratio);
    CHECK(std::abs(e.value - 1.0) <= 3.0 * e.se);

    auto p = paths.path(3);
    auto Y = y_martingale(th, p, 1.5);
    for (std::size_t i = 0; i < 32; ++i)
        CHECK(std::log(Y[i + 1]) - std::log(Y[i]) ==
              doctest::Approx(th[i] * p.increment(i) - 0.5 * th[i] * th[i] * g.dt()).epsilon(1e-10));
}

TEST_CASE("Malliavin identities of Y") {
    TimeGrid g(1.0, 16);
    auto paths = sample_paths(g, JumpModel::none(), 200, 2);
    auto mk = memory_market();
    auto th = theta0(mk, g);
    std::vector<double> resid, scale;
    for (std::size_t m = 0; m < 200; ++m) {
        auto p = paths.path(m);
        for (std::size_t i = 0; i < 16; ++i) {
            // ln Y(t_{i+1}) is the first value that sees dB_i
            PathFunctional lnY = [&](const Path& q) { return std::log(y_martingale(th, q, 1.0)[i + 1]); };
            CHECK(d_brownian(lnY, p, i) == doctest::Approx(th[i]).epsilon(1e-7));
            PathFunctional lnYi = [&](const Path& q) { return std::log(y_martingale(th, q, 1.0)[i]); };
            CHECK(d_brownian(lnYi, p, i) == 0.0);
            if (m < 20) {
                PathFunctional YT = [&](const Path& q) { return y_martingale(th, q, 1.0).back(); };
                double t = g.node(i), YTv = YT(p);
                resid.push_back(mk.sigma(1.0, t) * d_brownian(YT, p, i) + mk.b(1.0, t) * YTv);
                scale.push_back(mk.b(1.0, t) * YTv);
            }
        }
    }
    CHECK(rms(resid) <= 0.02 * rms(scale));
}

TEST_CASE("terminal wealth") {
    TimeGrid g(1.0, 16);
    auto paths = sample_paths(g, JumpModel::none(), 10, 3);
    auto p = paths.path(4);
    auto th = theta0(memory_market(), g);
    double s = 0.0, q = 0.0;
    for (std::size_t i = 0; i < 16; ++i) {
        s += th[i] * p.increment(i);
        q += th[i] * th[i] * g.dt();
    }
    double c = 0.8;
    CHECK(terminal_wealth(c, p, UtilitySpec::log_utility(), th) ==
          doctest::Approx(std::exp(-s + 0.5 * q) / c).epsilon(1e-12));
    double E = std::exp(s - 0.5 * q);
    CHECK(terminal_wealth(c, p, UtilitySpec::power(0.5), th) == doctest::Approx(std::pow(c * E, -2.0)).epsilon(1e-12));
    std::vector<double> zero(17, 0.0);
    CHECK(terminal_wealth(c, p, UtilitySpec::log_utility(), zero) == doctest::Approx(1.0 / c));
    CHECK(terminal_wealth(2.0 * c, p, UtilitySpec::log_utility(), th) < terminal_wealth(c, p, UtilitySpec::log_utility(), th));
    CHECK_THROWS_AS(terminal_wealth(0.0, p, UtilitySpec::log_utility(), th), ContractViolation);
}

TEST_CASE("BSVIE without drift and with a constant terminal value") {
    MarketModel flat;
    flat.b0 = 0.0;
    auto paths = sample_paths(TimeGrid(1.0, 8), JumpModel::none(), 2000, 4);
    auto sol = bsvie_solve(0.5, flat, UtilitySpec::log_utility(), paths);
    for (double v : sol.xhat) CHECK(v == doctest::Approx(2.0).epsilon(1e-9));
    for (double v : sol.z_diag) CHECK(v == doctest::Approx(0.0).scale(1.0).epsilon(1e-9));
    auto pi = recover_pi(sol, flat, paths.grid());
    for (double v : pi.values) CHECK(v == doctest::Approx(0.0).scale(1.0).epsilon(1e-9));
}

TEST_CASE("BSVIE at the Girsanov value of c") {
    auto paths = sample_paths(TimeGrid(1.0, 16), JumpModel::none(), 20000, 5);
    MarketModel mk = merton();
    mk.x = 1.5;
    auto sol = bsvie_solve(1.0 / mk.x, mk, UtilitySpec::log_utility(), paths, {}, false);
    CHECK(sol.x0() == doctest::Approx(1.5).epsilon(0.02));
    CHECK(sol.x0_std() <= 0.01 * sol.x0());
    for (std::size_t m = 0; m < 20000; ++m) CHECK(sol.x_at(m, 16) > 0.0);
}

TEST_CASE("calibrating c") {
    auto paths = sample_paths(TimeGrid(1.0, 16), JumpModel::none(), 20000, 6);
    // equal decay rates keep b0/sigma0 free of t, so the Girsanov value c = 1/x holds
    MarketModel twin = memory_market();
    twin.lambda_sigma = 1.0;
    auto twin_c = solve_c(twin, UtilitySpec::log_utility(), paths);
    CHECK(twin_c.c == doctest::Approx(1.0).epsilon(0.02));
    CHECK(twin_c.table().rows().size() == twin_c.c_trace.size());

    // otherwise the t = 0 driver k(s) = b0(0,s)/sigma0(0,s) differs from -theta0(s) and
    // Xhat_c(0) = exp(int theta^2 + int theta k) / c
    auto mk = memory_market();
    auto th = theta0(mk, paths.grid());
    double expo = 0.0, dt = paths.grid().dt();
    for (std::size_t j = 0; j < 16; ++j) {
        double s = paths.grid().node(j), k = mk.b(0.0, s) / mk.sigma(0.0, s);
        expo += (th[j] * th[j] + th[j] * k) * dt;
    }
    auto log_c = solve_c(mk, UtilitySpec::log_utility(), paths);
    CHECK(log_c.c == doctest::Approx(std::exp(expo)).epsilon(0.02));

    MarketModel flat;
    flat.b0 = 0.0;
    flat.x = 2.0;
    CHECK(solve_c(flat, UtilitySpec::log_utility(), paths).c == doctest::Approx(0.5).epsilon(1e-3));

    // Xhat_c(0) = exp(theta^2 T) / c^2 for gamma = 1/2, so c = exp(theta^2 T / 2)
    auto pw = solve_c(merton(), UtilitySpec::power(0.5), paths);
    CHECK(pw.c == doctest::Approx(std::exp(0.5 * 0.0625)).epsilon(0.02));

    auto other = solve_c(memory_market(), UtilitySpec::log_utility(), sample_paths(TimeGrid(1.0, 16), JumpModel::none(), 20000, 66));
    CHECK(std::abs(other.c - log_c.c) <= 0.02);

    CHECK_THROWS_AS(solve_c(merton(), UtilitySpec::log_utility(), paths, 5.0, 10.0), ConfigError);
}

TEST_CASE("Merton strategy from the BSVIE") {
    auto paths = sample_paths(TimeGrid(1.0, 16), JumpModel::none(), 20000, 7);
    auto mk = merton();
    auto sc = solve_c(mk, UtilitySpec::log_utility(), paths);
    auto sol = bsvie_solve(sc.c, mk, UtilitySpec::log_utility(), paths);
    auto pi = recover_pi(sol, mk, paths.grid());
    for (std::size_t j = 4; j <= 12; ++j) CHECK(pi.mean[j] == doctest::Approx(1.25).epsilon(0.05));
    CHECK(sol.z_ratio_spread() <= 0.05);
    auto t = portfolio_table(theta0(mk, paths.grid()), pi, paths.grid());
    CHECK(t.header() == std::vector<std::string>{"t", "theta0", "mean_pi", "std_pi"});
}

TEST_CASE("positive wealth simulation") {
    auto paths = sample_paths(TimeGrid(1.0, 32), JumpModel::none(), 100000, 8);
    auto mk = merton();
    auto flat = simulate_wealth_positive(mk, ControlProcess::constant(0.0, {-5.0, 5.0}), paths);
    for (std::size_t m = 0; m < 100; ++m) CHECK(flat.at(m, 32) == 1.0);

    auto gbm = simulate_wealth_positive(mk, ControlProcess::constant(1.0, {-5.0, 5.0}), paths);
    auto e = mean_estimate(gbm.column(32));
    CHECK(std::abs(e.value - std::exp(0.05)) <= 3.0 * e.se);

    auto mem = memory_market();
    auto small = sample_paths(TimeGrid(1.0, 128), JumpModel::none(), 500, 9);
    auto u = ControlProcess::constant(1.25, {-5.0, 5.0});
    auto a = simulate_wealth_positive(mem, u, small);
    auto b = simulate_integral_form(mem.coefficient_model(), u, small);
    double worst = 0.0;
    for (std::size_t m = 0; m < 500; ++m) {
        CHECK(a.at(m, 128) > 0.0);
        worst = std::max(worst, std::abs(a.at(m, 128) - b.at(m, 128)));
    }
    CHECK(worst <= 0.05);
}

TEST_CASE("optimality against shifted strategies") {
    auto paths = sample_paths(TimeGrid(1.0, 16), JumpModel::none(), 20000, 10);
    auto rep = verify_optimality(merton(), UtilitySpec::log_utility(), ControlProcess::constant(1.25, {-5.0, 5.0}),
                                 paths, {-0.25, -0.1, 0.1, 0.25}, true);
    CHECK(rep.pass);
    CHECK(rep.strategies.size() == 5);
    for (std::size_t k = 1; k < rep.strategies.size(); ++k) CHECK(rep.strategies[k].gap >= -3.0 * rep.strategies[k].gap_se);
    CHECK(rep.stationarity >= 0.0);
    CHECK(rep.stationarity <= 0.05);
    CHECK(rep.table().header() == std::vector<std::string>{"strategy", "J_estimate", "stderr"});
}
