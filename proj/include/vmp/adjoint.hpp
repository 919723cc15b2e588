#pragma once

#include "vmp/csv.hpp"
#include "vmp/grid_noise.hpp"
#include "vmp/models.hpp"
#include "vmp/regression.hpp"
#include "vmp/volterra.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace vmp {

// (p, q, r) on the grid. p has N+1 nodes; q and r live on 0..N-1.
// surrogates[i] expresses p_i as a polynomial in the node-i features
// (B, X, eta) so that it can be differentiated along paths.
struct AdjointTriple {
    std::size_t steps = 0, paths = 0, marks = 0;
    std::vector<double> p_values; // [m * (N+1) + i]
    std::vector<double> q_values; // [m * N + i]
    std::vector<double> r_values; // [(m * N + i) * K + k]
    std::vector<Surrogate> surrogates;
    int passes = 0;
    std::vector<double> changes;

    AdjointTriple() = default;
    AdjointTriple(std::size_t steps, std::size_t paths, std::size_t marks);

    double p(std::size_t m, std::size_t i) const { return p_values[m * (steps + 1) + i]; }
    double q(std::size_t m, std::size_t i) const { return q_values[m * steps + i]; }
    double r(std::size_t m, std::size_t i, std::size_t k) const { return r_values[(m * steps + i) * marks + k]; }
    double& p(std::size_t m, std::size_t i) { return p_values[m * (steps + 1) + i]; }
    double& q(std::size_t m, std::size_t i) { return q_values[m * steps + i]; }
    double& r(std::size_t m, std::size_t i, std::size_t k) { return r_values[(m * steps + i) * marks + k]; }
    std::vector<double> p_column(std::size_t i) const;
    std::vector<double> q_column(std::size_t i) const;
    std::vector<double> r_column(std::size_t i, std::size_t k) const;
};

// Dp[i][j] ~ E[D_i p_j | F_i] and Djp[i][j][k] ~ E[D_{i,k} p_j | F_i] for
// j >= i; the diagonal j = i holds q_i and r_i. Entries with j < i are zero
// by adaptedness and are not stored.
class MalliavinField {
public:
    MalliavinField() = default;
    MalliavinField(std::size_t steps, std::size_t paths, std::size_t marks);

    bool present() const { return steps_ > 0; }
    double dp(std::size_t i, std::size_t j, std::size_t m) const;
    double djp(std::size_t i, std::size_t j, std::size_t k, std::size_t m) const;
    void set_dp(std::size_t i, std::size_t j, std::size_t m, double v) { dp_[slot(i, j) * paths_ + m] = v; }
    void set_djp(std::size_t i, std::size_t j, std::size_t k, std::size_t m, double v) {
        djp_[(slot(i, j) * marks_ + k) * paths_ + m] = v;
    }

private:
    std::size_t steps_ = 0, paths_ = 0, marks_ = 0;
    std::vector<std::size_t> offsets_;
    std::vector<double> dp_, djp_;
    std::size_t slot(std::size_t i, std::size_t j) const { return offsets_[i] + (j - i); }
};

// Whether the Hamiltonian needs the Malliavin field: only kernels whose
// Brownian or jump coefficient depends on the first time argument use it.
bool field_required(const CoefficientModel& model, const JumpModel& jumps);

struct AdjointOptions {
    enum class Estimator {
        surrogate, // q, r from derivatives of the next-node surrogate
        increment, // q = E[(p_{i+1} - E[p_{i+1}|F_i]) dB_i | F_i] / dt, r analogous
    };
    RegressionBasis basis;
    int max_iter = 20;
    double tol = 1e-4;
    Estimator estimator = Estimator::surrogate;
    bool build_field = true; // only when field_required
};

// p_i = E[g'(X_N) | F_i], q_i = E[D_i g'(X_N) | F_i], r_i = E[D_{i,k} g'(X_N) | F_i].
AdjointTriple solve_explicit_x_independent(const CoefficientModel& model, const PerformanceSpec& spec,
                                           const StateEnsemble& states, const PathBundle& paths,
                                           const RegressionBasis& basis = {});

struct AdjointSolution {
    AdjointTriple triple;
    MalliavinField field;
};

// Backward regression sweep with Picard passes on the driver dH/dx.
AdjointSolution solve_general(const CoefficientModel& model, const PerformanceSpec& spec,
                              const StateEnsemble& states, const PathBundle& paths,
                              const AdjointOptions& options = {});

// Differentiates the surrogates of p_j (j > i) along dB_i and the add-one-jump
// direction, then projects onto F_i. The terminal node uses g' directly.
MalliavinField malliavin_field_from_surrogate(const AdjointTriple& triple, const CoefficientModel& model,
                                              const PerformanceSpec& spec, const StateEnsemble& states,
                                              const PathBundle& paths, const RegressionBasis& basis = {});

// Columns t, mean_p, mean_q, mean_r_k..., picard_iters.
CsvTable adjoint_table(const AdjointTriple& triple, const TimeGrid& grid);

} // namespace vmp
