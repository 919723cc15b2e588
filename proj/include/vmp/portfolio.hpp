#pragma once

#include "vmp/csv.hpp"
#include "vmp/grid_noise.hpp"
#include "vmp/models.hpp"
#include "vmp/regression.hpp"
#include "vmp/stats.hpp"
#include "vmp/volterra.hpp"

#include <cstddef>
#include <string>
#include <vector>

namespace vmp {

// Deterministic market kernels b0(t,s) = b0 e^{-lambda_b (t-s)} and
// sigma0(t,s) = sigma0 e^{-lambda_sigma (t-s)}; wealth starts at x.
struct MarketModel {
    double b0 = 0.05, sigma0 = 0.2;
    double lambda_b = 0.0, lambda_sigma = 0.0;
    double x = 1.0;
    double c0 = 0.0; // lower bound for sigma0; 0 means "use the grid minimum"

    double b(double t, double s) const;
    double sigma(double t, double s) const;
    double grid_min_sigma(const TimeGrid& grid) const;
    // Throws ContractViolation when sigma0 drops below c0 on the grid or x <= 0.
    void validate(const TimeGrid& grid) const;
    // dX = b0(t,s) pi X ds + sigma0(t,s) pi X dB in Volterra form.
    CoefficientModel coefficient_model() const;
};

// theta0(t_i) = -b0(T, t_i) / sigma0(T, t_i) on nodes 0..N.
std::vector<double> theta0(const MarketModel& market, const TimeGrid& grid);

// Y(t_i) = c exp(sum_{l<i} theta_l dB_l - 1/2 theta_l^2 dt).
std::vector<double> y_martingale(const std::vector<double>& theta, const Path& path, double c);

// F(c) = (U')^{-1}(Y(T)).
double terminal_wealth(double c, const Path& path, const UtilitySpec& utility, const std::vector<double>& theta);

struct BsvieSolution {
    std::size_t steps = 0, paths = 0;
    bool full = false;
    std::vector<double> xhat;         // [m * (N+1) + i]; only i = 0 and N unless full
    std::vector<double> z_diag;       // [m * N + j], Z[j][j]; full only
    std::vector<double> z_ratio_mean; // [i * N + j], mean over paths of Z[i][j] / sigma0(t_i, t_j), i <= j

    double x_at(std::size_t m, std::size_t i) const { return xhat[m * (steps + 1) + i]; }
    double x0() const;
    double x0_std() const;
    // max over j of (max_i - min_i) / |mean_i| of z_ratio_mean over i <= j
    double z_ratio_spread() const;
};

// V(t_i, s_N) = F(c); V(t_i, s_j) = E[V_{j+1} | F_j] - (b0/sigma0)(t_i, s_j) Z[i][j] dt with
// Z[i][j] = E[(V_{j+1} - E[V_{j+1}|F_j]) dB_j | F_j] / dt. Features are B and int theta0 dB.
// With full = false only the t_0 row is computed.
BsvieSolution bsvie_solve(double c, const MarketModel& market, const UtilitySpec& utility, const PathBundle& paths,
                          const RegressionBasis& basis = {}, bool full = true);

struct SolveCResult {
    double c = 0.0;
    std::vector<double> c_trace, g_trace; // bracket scan then bisection
    CsvTable table() const;               // c_iteration, c_value, G_value
};

// Root of G(c) = Xhat_c(0) - x by bisection in log c to relative tolerance
// 1e-3. The map c -> Xhat_c(0) is linear in F(c), so its path weights are
// computed once and every evaluation reuses the same paths.
SolveCResult solve_c(const MarketModel& market, const UtilitySpec& utility, const PathBundle& paths,
                     double c_lo = 0.0, double c_hi = 0.0, const RegressionBasis& basis = {});

struct RecoveredPi {
    std::size_t steps = 0, paths = 0;
    std::vector<double> values; // [m * N + j]
    std::vector<double> mean, stddev;
};

// pi_j = Z[j][j] / (sigma0(t_j, t_j) Xhat_j).
RecoveredPi recover_pi(const BsvieSolution& sol, const MarketModel& market, const TimeGrid& grid);

// Open-loop control from recovered values, admissible on [lo, hi].
ControlProcess pi_control(const RecoveredPi& pi, Interval admissible);

StateEnsemble simulate_wealth_positive(const MarketModel& market, const ControlProcess& pi, const PathBundle& paths);

struct StrategyResult {
    std::string name;
    Estimate J;
    double gap = 0.0, gap_se = 0.0; // J(pi_hat) - J(this), paired
};

struct OptimalityReport {
    std::vector<StrategyResult> strategies; // pi_hat first
    double stationarity = -1.0;             // max interior statistic, negative when not run
    bool pass = false;                      // every gap >= -3 se
    CsvTable table() const;                 // strategy, J_estimate, stderr
};

OptimalityReport verify_optimality(const MarketModel& market, const UtilitySpec& utility, const ControlProcess& pi_hat,
                                   const PathBundle& paths, const std::vector<double>& shifts = {-0.25, -0.1, 0.1, 0.25},
                                   bool with_stationarity = false);

// Columns t, theta0, mean_pi, std_pi.
CsvTable portfolio_table(const std::vector<double>& theta, const RecoveredPi& pi, const TimeGrid& grid);

} // namespace vmp
