#include "vmp/portfolio.hpp"

#include "vmp/adjoint.hpp"
#include "vmp/error.hpp"
#include "vmp/hamiltonian.hpp"
#include "vmp/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

namespace vmp {

double MarketModel::b(double t, double s) const { return b0 * std::exp(-lambda_b * (t - s)); }

double MarketModel::sigma(double t, double s) const { return sigma0 * std::exp(-lambda_sigma * (t - s)); }

double MarketModel::grid_min_sigma(const TimeGrid& grid) const {
    double lo = sigma(0.0, 0.0);
    for (std::size_t i = 0; i <= grid.steps(); ++i)
        for (std::size_t j = 0; j <= grid.steps(); ++j) lo = std::min(lo, sigma(grid.node(i), grid.node(j)));
    return lo;
}

void MarketModel::validate(const TimeGrid& grid) const {
    if (!(x > 0.0)) throw ContractViolation("initial wealth must be positive");
    double lo = grid_min_sigma(grid);
    double bound = c0 > 0.0 ? c0 : lo;
    if (!(bound > 0.0) || lo < bound)
        throw ContractViolation("sigma0 falls to " + fmt_number(lo) + ", below the bound c0 = " + fmt_number(bound));
}

CoefficientModel MarketModel::coefficient_model() const {
    ParamMap p{{"b0", b0}, {"sigma0", sigma0}, {"gamma0", 0.0}, {"lambda_b", lambda_b},
               {"lambda_sigma", lambda_sigma}, {"lambda_gamma", 0.0}, {"xi0", x}, {"xi1", 0.0}};
    CoefficientModel m = registry_get("exp_kernel_linear", p);
    m.name = "market";
    return m;
}

std::vector<double> theta0(const MarketModel& market, const TimeGrid& grid) {
    market.validate(grid);
    double T = grid.horizon();
    std::vector<double> th(grid.steps() + 1);
    for (std::size_t i = 0; i <= grid.steps(); ++i) {
        double t = grid.node(i);
        th[i] = -market.b(T, t) / market.sigma(T, t);
    }
    return th;
}

std::vector<double> y_martingale(const std::vector<double>& theta, const Path& path, double c) {
    if (!(c > 0.0)) throw ContractViolation("Y(0) = c must be positive");
    std::size_t N = path.grid().steps();
    if (theta.size() < N) throw ContractViolation("theta0 does not cover the grid");
    double dt = path.grid().dt();
    std::vector<double> Y(N + 1);
    double ln = std::log(c);
    Y[0] = c;
    for (std::size_t i = 0; i < N; ++i) {
        ln += theta[i] * path.increment(i) - 0.5 * theta[i] * theta[i] * dt;
        Y[i + 1] = std::exp(ln);
    }
    return Y;
}

double terminal_wealth(double c, const Path& path, const UtilitySpec& utility, const std::vector<double>& theta) {
    auto Y = y_martingale(theta, path, c);
    return utility.inverse_du(Y.back());
}

double BsvieSolution::x0() const {
    double s = 0.0;
    for (std::size_t m = 0; m < paths; ++m) s += x_at(m, 0);
    return s / static_cast<double>(paths);
}

double BsvieSolution::x0_std() const {
    std::vector<double> col(paths);
    for (std::size_t m = 0; m < paths; ++m) col[m] = x_at(m, 0);
    return stddev(col);
}

double BsvieSolution::z_ratio_spread() const {
    if (!full) throw ContractViolation("Z spread needs the full BSVIE solution");
    double worst = 0.0;
    for (std::size_t j = 1; j < steps; ++j) {
        double lo = 1e300, hi = -1e300, s = 0.0;
        for (std::size_t i = 0; i <= j; ++i) {
            double v = z_ratio_mean[i * steps + j];
            lo = std::min(lo, v);
            hi = std::max(hi, v);
            s += v;
        }
        double mean = s / static_cast<double>(j + 1);
        if (mean != 0.0) worst = std::max(worst, (hi - lo) / std::abs(mean));
    }
    return worst;
}

namespace {

struct PortfolioNoise {
    std::size_t N, M;
    std::vector<double> theta;
    std::vector<double> F_unit_log; // sum theta dB - 1/2 sum theta^2 dt, per path
};

PortfolioNoise portfolio_noise(const MarketModel& market, const PathBundle& paths) {
    if (paths.jump_model().active()) throw ContractViolation("the market model is Brownian only");
    const TimeGrid& grid = paths.grid();
    PortfolioNoise pn{grid.steps(), paths.path_count(), theta0(market, grid), {}};
    pn.F_unit_log.resize(pn.M);
    double dt = grid.dt();
    for (std::size_t m = 0; m < pn.M; ++m) {
        double s = 0.0;
        for (std::size_t l = 0; l < pn.N; ++l)
            s += pn.theta[l] * paths.increment(m, l) - 0.5 * pn.theta[l] * pn.theta[l] * dt;
        pn.F_unit_log[m] = s;
    }
    return pn;
}

std::vector<double> terminal_values(double c, const UtilitySpec& utility, const PortfolioNoise& pn) {
    if (!(c > 0.0)) throw ContractViolation("c must be positive");
    std::vector<double> F(pn.M);
    for (std::size_t m = 0; m < pn.M; ++m) F[m] = utility.inverse_du(c * std::exp(pn.F_unit_log[m]));
    return F;
}

// Features B(t_j) and int_0^{t_j} theta0 dB, advanced one node at a time.
struct FeatureCursor {
    const PathBundle& paths;
    const std::vector<double>& theta;
    std::vector<double> B, L;

    FeatureCursor(const PathBundle& p, const std::vector<double>& th)
        : paths(p), theta(th), B(p.path_count(), 0.0), L(p.path_count(), 0.0) {}

    void set_terminal() {
        std::size_t N = paths.steps();
        for (std::size_t m = 0; m < B.size(); ++m) {
            double b = 0.0, l = 0.0;
            for (std::size_t j = 0; j < N; ++j) {
                b += paths.increment(m, j);
                l += theta[j] * paths.increment(m, j);
            }
            B[m] = b;
            L[m] = l;
        }
    }
    void step_back(std::size_t j) { // node j+1 -> j
        for (std::size_t m = 0; m < B.size(); ++m) {
            B[m] -= paths.increment(m, j);
            L[m] -= theta[j] * paths.increment(m, j);
        }
    }
    void step_forward(std::size_t j) { // node j -> j+1
        for (std::size_t m = 0; m < B.size(); ++m) {
            B[m] += paths.increment(m, j);
            L[m] += theta[j] * paths.increment(m, j);
        }
    }
    FeatureMatrix matrix() const {
        FeatureMatrix f;
        f.add("B", B);
        f.add("L", L);
        return f;
    }
};

// Path weights w with Xhat_c(0) = sum_m w_m F_c^m, by running the transposed
// one-row recursion forward.
std::vector<double> x0_weights(const MarketModel& market, const PortfolioNoise& pn, const PathBundle& paths,
                               const RegressionBasis& basis) {
    std::size_t N = pn.N, M = pn.M;
    const TimeGrid& grid = paths.grid();
    double dt = grid.dt();
    Eigen::VectorXd w = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(M), 1.0 / static_cast<double>(M));
    FeatureCursor fc(paths, pn.theta);
    Eigen::MatrixXd tmp(static_cast<Eigen::Index>(M), 1);
    for (std::size_t j = 0; j < N; ++j) {
        NodeRegression reg(fc.matrix(), basis);
        double k = market.b(0.0, grid.node(j)) / market.sigma(0.0, grid.node(j));
        tmp.col(0) = w;
        Eigen::VectorXd Pw = reg.fitted(tmp).col(0);
        Eigen::VectorXd d(static_cast<Eigen::Index>(M));
        for (std::size_t m = 0; m < M; ++m)
            d(static_cast<Eigen::Index>(m)) = Pw(static_cast<Eigen::Index>(m)) * paths.increment(m, j) / dt;
        tmp.col(0) = d;
        Eigen::VectorXd Pd = reg.fitted(tmp).col(0);
        w = Pw - k * dt * (d - Pd);
        fc.step_forward(j);
    }
    return std::vector<double>(w.data(), w.data() + w.size());
}

} // namespace

BsvieSolution bsvie_solve(double c, const MarketModel& market, const UtilitySpec& utility, const PathBundle& paths,
                          const RegressionBasis& basis, bool full) {
    utility.validate();
    PortfolioNoise pn = portfolio_noise(market, paths);
    std::size_t N = pn.N, M = pn.M;
    const TimeGrid& grid = paths.grid();
    double dt = grid.dt();
    std::vector<double> F = terminal_values(c, utility, pn);

    BsvieSolution sol;
    sol.steps = N;
    sol.paths = M;
    sol.full = full;
    sol.xhat.assign(M * (N + 1), 0.0);
    if (full) {
        sol.z_diag.assign(M * N, 0.0);
        sol.z_ratio_mean.assign(N * N, 0.0);
    }
    std::size_t rows = full ? N : 1;
    Eigen::MatrixXd V(static_cast<Eigen::Index>(M), static_cast<Eigen::Index>(rows));
    for (std::size_t m = 0; m < M; ++m) {
        for (std::size_t i = 0; i < rows; ++i) V(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(i)) = F[m];
        sol.xhat[m * (N + 1) + N] = F[m];
    }

    FeatureCursor fc(paths, pn.theta);
    fc.set_terminal();
    for (std::size_t j = N; j-- > 0;) {
        fc.step_back(j);
        NodeRegression reg(fc.matrix(), basis);
        auto a = static_cast<Eigen::Index>(std::min(j + 1, rows));
        Eigen::MatrixXd cur = V.leftCols(a);
        Eigen::MatrixXd Vhat = reg.fitted(cur);
        Eigen::MatrixXd T = cur - Vhat;
        for (std::size_t m = 0; m < M; ++m) T.row(static_cast<Eigen::Index>(m)) *= paths.increment(m, j) / dt;
        Eigen::MatrixXd Z = reg.fitted(T);
        double s = grid.node(j);
        for (Eigen::Index i = 0; i < a; ++i) {
            double t = grid.node(static_cast<std::size_t>(i));
            double k = market.b(t, s) / market.sigma(t, s);
            V.col(i) = Vhat.col(i) - k * dt * Z.col(i);
            if (full)
                sol.z_ratio_mean[static_cast<std::size_t>(i) * N + j] = Z.col(i).mean() / market.sigma(t, s);
        }
        if (full || j == 0) {
            for (std::size_t m = 0; m < M; ++m) {
                auto e = static_cast<Eigen::Index>(m);
                sol.xhat[m * (N + 1) + j] = V(e, static_cast<Eigen::Index>(full ? j : 0));
                if (full) sol.z_diag[m * N + j] = Z(e, static_cast<Eigen::Index>(j));
            }
        }
    }
    if (utility.kind == UtilitySpec::Kind::log || utility.kind == UtilitySpec::Kind::power) {
        std::size_t bad = 0;
        for (std::size_t m = 0; m < M; ++m)
            for (std::size_t i = 0; i <= N; ++i)
                if ((full || i == 0 || i == N) && !(sol.xhat[m * (N + 1) + i] > 0.0)) ++bad;
        if (bad)
            throw RegressionError("BSVIE produced " + std::to_string(bad) +
                                  " nonpositive wealth values; increase the path count or lower the degree");
    }
    return sol;
}

CsvTable SolveCResult::table() const {
    CsvTable t({"c_iteration", "c_value", "G_value"});
    for (std::size_t k = 0; k < c_trace.size(); ++k)
        t.row({std::to_string(k), fmt_number(c_trace[k]), fmt_number(g_trace[k])});
    return t;
}

SolveCResult solve_c(const MarketModel& market, const UtilitySpec& utility, const PathBundle& paths, double c_lo,
                     double c_hi, const RegressionBasis& basis) {
    utility.validate();
    market.validate(paths.grid());
    double ux = utility.du(market.x);
    if (c_lo <= 0.0) c_lo = 1e-3 * ux;
    if (c_hi <= 0.0) c_hi = 1e3 * ux;
    if (!(c_hi > c_lo)) throw ConfigError("c bracket must satisfy 0 < c_lo < c_hi");

    PortfolioNoise pn = portfolio_noise(market, paths);
    std::vector<double> w = x0_weights(market, pn, paths, basis);
    SolveCResult res;
    auto G = [&](double c) {
        auto F = terminal_values(c, utility, pn);
        double s = 0.0;
        for (std::size_t m = 0; m < pn.M; ++m) s += w[m] * F[m];
        double g = s - market.x;
        res.c_trace.push_back(c);
        res.g_trace.push_back(g);
        return g;
    };

    // Monotonicity scan over 8 log-spaced points.
    double prev = 0.0;
    for (int k = 0; k < 8; ++k) {
        double c = c_lo * std::pow(c_hi / c_lo, k / 7.0);
        double g = G(c);
        if (k > 0 && !(g < prev))
            throw ConfigError("c -> Xhat_c(0) is not decreasing on the bracket (G = " + fmt_number(prev) +
                              " then " + fmt_number(g) + " at c = " + fmt_number(c) + ")");
        prev = g;
    }
    double g_lo = res.g_trace.front(), g_hi = res.g_trace.back();
    if (!(g_lo > 0.0 && g_hi < 0.0))
        throw ConfigError("invalid c bracket: G(c_lo) = " + fmt_number(g_lo) + ", G(c_hi) = " + fmt_number(g_hi));

    double lo = c_lo, hi = c_hi;
    while (hi / lo - 1.0 > 1e-3) {
        double mid = std::sqrt(lo * hi);
        if (G(mid) > 0.0)
            lo = mid;
        else
            hi = mid;
    }
    res.c = std::sqrt(lo * hi);
    G(res.c);
    return res;
}

RecoveredPi recover_pi(const BsvieSolution& sol, const MarketModel& market, const TimeGrid& grid) {
    if (!sol.full) throw ContractViolation("pi recovery needs the full BSVIE solution");
    std::size_t N = sol.steps, M = sol.paths;
    RecoveredPi pi{N, M, std::vector<double>(M * N), std::vector<double>(N), std::vector<double>(N)};
    for (std::size_t j = 0; j < N; ++j) {
        double s = market.sigma(grid.node(j), grid.node(j));
        std::vector<double> col(M);
        for (std::size_t m = 0; m < M; ++m) {
            double x = sol.x_at(m, j);
            if (!(x > 0.0))
                throw SimulationError("nonpositive Xhat at path " + std::to_string(m) + ", node " + std::to_string(j));
            col[m] = pi.values[m * N + j] = sol.z_diag[m * N + j] / (s * x);
        }
        pi.mean[j] = mean(col);
        pi.stddev[j] = stddev(col);
    }
    return pi;
}

ControlProcess pi_control(const RecoveredPi& pi, Interval admissible) {
    return ControlProcess::open_loop(pi.paths, pi.steps, pi.values, admissible);
}

StateEnsemble simulate_wealth_positive(const MarketModel& market, const ControlProcess& pi, const PathBundle& paths) {
    market.validate(paths.grid());
    return simulate_log_euler(market.coefficient_model(), pi, paths);
}

CsvTable OptimalityReport::table() const {
    CsvTable t({"strategy", "J_estimate", "stderr"});
    for (const auto& s : strategies) t.row({s.name, fmt_number(s.J.value), fmt_number(s.J.se)});
    return t;
}

OptimalityReport verify_optimality(const MarketModel& market, const UtilitySpec& utility, const ControlProcess& pi_hat,
                                   const PathBundle& paths, const std::vector<double>& shifts,
                                   bool with_stationarity) {
    PerformanceSpec spec = performance_from_utility(utility);
    std::size_t N = paths.steps();
    StateEnsemble base = simulate_wealth_positive(market, pi_hat, paths);
    auto J0 = performance_per_path(spec, base);
    OptimalityReport rep;
    rep.strategies.push_back({"pi_hat", mean_estimate(J0), 0.0, 0.0});
    Perturbation one{1, N, std::vector<double>(N, 1.0)};
    rep.pass = true;
    for (double d : shifts) {
        StateEnsemble st = simulate_wealth_positive(market, pi_hat.perturbed(one, d), paths);
        auto J = performance_per_path(spec, st);
        std::vector<double> gap(J.size());
        for (std::size_t m = 0; m < J.size(); ++m) gap[m] = J0[m] - J[m];
        Estimate g = mean_estimate(gap);
        char name[64];
        std::snprintf(name, sizeof name, "pi_hat%+g", d);
        rep.strategies.push_back({name, mean_estimate(J), g.value, g.se});
        if (g.value < -3.0 * g.se) rep.pass = false;
    }
    if (with_stationarity) {
        CoefficientModel model = market.coefficient_model();
        AdjointSolution adj = solve_general(model, spec, base, paths);
        rep.stationarity = check_stationarity(model, spec, base, paths, adj).max_interior();
    }
    return rep;
}

CsvTable portfolio_table(const std::vector<double>& theta, const RecoveredPi& pi, const TimeGrid& grid) {
    CsvTable t({"t", "theta0", "mean_pi", "std_pi"});
    for (std::size_t i = 0; i < pi.steps; ++i)
        t.row({fmt_number(grid.node(i)), fmt_number(theta[i]), fmt_number(pi.mean[i]), fmt_number(pi.stddev[i])});
    return t;
}

} // namespace vmp
