#include "vmp/error.hpp"
#include "vmp/regression.hpp"
#include "vmp/stats.hpp"

#include <doctest.h>

#include <cmath>

using namespace vmp;

namespace {

double rel_rms(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> d(a.size());
    for (std::size_t k = 0; k < a.size(); ++k) d[k] = a[k] - b[k];
    return rms(d) / rms(b);
}

} // namespace

TEST_CASE("constants are reproduced by the intercept") {
    auto paths = sample_paths(TimeGrid(1.0, 16), JumpModel::none(), 2000, 1);
    std::vector<double> y(2000, 3.25);
    auto fit = conditional_expectation(y, 8, {}, paths);
    for (double v : fit) CHECK(v == doctest::Approx(3.25).epsilon(1e-9));
}

TEST_CASE("E[B(T) | F_t] is B(t)") {
    auto paths = sample_paths(TimeGrid(1.0, 64), JumpModel::none(), 100000, 2);
    auto BT = paths.brownian_at(64);
    for (std::size_t i : {16u, 32u, 48u}) {
        auto fit = conditional_expectation(BT, i, {}, paths);
        CHECK(rel_rms(fit, paths.brownian_at(i)) <= 0.02);
    }
}

TEST_CASE("targets in the basis span are reproduced") {
    auto paths = sample_paths(TimeGrid(1.0, 32), JumpModel::none(), 20000, 3);
    auto B = paths.brownian_at(20);
    std::vector<double> y(B.size());
    for (std::size_t m = 0; m < y.size(); ++m) y[m] = B[m] * B[m];
    auto fit = conditional_expectation(y, 20, {}, paths);
    CHECK(rel_rms(fit, y) <= 0.01);
}

TEST_CASE("too few paths for the basis") {
    auto paths = sample_paths(TimeGrid(1.0, 8), JumpModel::none(), 30, 4);
    std::vector<double> y(30, 1.0);
    CHECK_THROWS_AS(conditional_expectation(y, 4, {3, 1e-8}, paths), RegressionError);
}

TEST_CASE("delayed information uses lagged features") {
    auto paths = sample_paths(TimeGrid(1.0, 20), JumpModel::none(), 20000, 5);
    auto B10 = paths.brownian_at(10);
    auto full = conditional_expectation(B10, 10, {}, paths);
    CHECK(rel_rms(full, B10) <= 1e-6);
    auto lag = conditional_expectation(B10, 10, {}, paths, InfoMode::delayed(0.25));
    CHECK(rel_rms(lag, paths.brownian_at(5)) <= 0.03);
}

TEST_CASE("surrogate gradient matches finite differences") {
    auto paths = sample_paths(TimeGrid(1.0, 16), JumpModel::make(2.0, {1.0}, {1.0}), 5000, 6);
    auto feats = node_features(paths, 8);
    REQUIRE(feats.variables() == 2);
    std::vector<double> y(5000);
    for (std::size_t m = 0; m < y.size(); ++m) {
        double b = feats.columns[0][m], e = feats.columns[1][m];
        y[m] = b * b * e + std::sin(b);
    }
    NodeRegression reg(feats, {});
    auto s = reg.fit(y);
    double raw[2] = {0.3, -0.4}, grad[2];
    s.gradient(raw, grad);
    for (int r = 0; r < 2; ++r) {
        double up[2] = {raw[0], raw[1]}, dn[2] = {raw[0], raw[1]};
        up[r] += 1e-6;
        dn[r] -= 1e-6;
        CHECK(grad[r] == doctest::Approx((s.value(up) - s.value(dn)) / 2e-6).epsilon(1e-5));
    }
    auto fitted = reg.fitted(y);
    auto pred = reg.predict(s.coefficients());
    double row[2] = {feats.columns[0][17], feats.columns[1][17]};
    CHECK(pred[17] == doctest::Approx(fitted[17]));
    CHECK(s.value(row) == doctest::Approx(fitted[17]));
}

TEST_CASE("duplicate and constant features are dropped") {
    FeatureMatrix f;
    f.rows = 500;
    std::vector<double> a(500), c(500, 2.0);
    for (std::size_t m = 0; m < 500; ++m) a[m] = std::sin(0.37 * static_cast<double>(m));
    f.add("a", a);
    f.add("copy", a);
    f.add("const", c);
    MonomialMap map(f, 3);
    CHECK(map.active().size() == 1);
    CHECK(map.dimension() == 4);
}
