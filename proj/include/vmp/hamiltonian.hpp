#pragma once

#include "vmp/adjoint.hpp"
#include "vmp/csv.hpp"
#include "vmp/grid_noise.hpp"
#include "vmp/models.hpp"
#include "vmp/regression.hpp"
#include "vmp/volterra.hpp"

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace vmp {

// Adjoint data seen by the Hamiltonian at node i on one path: p_j and the
// field rows for j = i..N (index 0 is the diagonal), plus r_i.
struct AdjointSlice {
    std::size_t node = 0;
    std::span<const double> p;   // p_i, ..., p_N
    double q = 0.0;
    std::span<const double> r;   // r_i[k]
    std::span<const double> dp;  // Dp[i][j], j = i..N; empty when the field is not required
    std::span<const double> djp; // Djp[i][j][k] at [(j - i) * K + k]
};

// Per-thread storage for gathering slices out of a triple and field.
struct SliceBuffer {
    std::vector<double> p, r, dp, djp;
    AdjointSlice view(std::size_t node, double q) const;
};

void gather_slice(const AdjointTriple& triple, const MalliavinField& field, bool with_field, std::size_t i,
                  std::size_t m, SliceBuffer& buf);

// H = H0 + H1. The memory part H1 sums d/dt kernels at (t_j, t_i) over j > i
// against p_j and the field rows.
class Hamiltonian {
public:
    Hamiltonian(const CoefficientModel& model, const PerformanceSpec& spec, const JumpModel& jumps,
                const TimeGrid& grid);

    double h0(double t, double x, double v, double p, double q, std::span<const double> r) const;
    double h1(const AdjointSlice& s, double x, double v) const;
    double value(const AdjointSlice& s, double x, double v) const;
    double du(const AdjointSlice& s, double x, double v) const;
    double dx(const AdjointSlice& s, double x, double v) const;
    // Separate contributions to dH/du: f_v, b_v p, sigma_v q, jump diagonal,
    // drift memory, diffusion memory, jump memory.
    static constexpr std::size_t du_term_count = 7;
    void du_terms(const AdjointSlice& s, double x, double v, std::span<double> terms) const;

    bool needs_field() const { return needs_field_; }
    const TimeGrid& grid() const { return grid_; }

private:
    const CoefficientModel& model_;
    const PerformanceSpec& spec_;
    const JumpModel& jumps_;
    TimeGrid grid_;
    bool use_jumps_;
    bool needs_field_;

    enum class Part { value, dx, dv };
    void terms(const AdjointSlice& s, double x, double v, Part part, std::span<double> out) const;
};

// Terminal data for the reduced Hamiltonian at one node and path.
struct TerminalData {
    double g_prime = 0.0;               // E[g'(X_N) | F_t]
    double d_g_prime = 0.0;             // E[D_t g'(X_N) | F_t]
    std::vector<double> dj_g_prime;     // E[D_{t,z_k} g'(X_N) | F_t]
};

// f + b(T, t, v) g' + sigma(T, t, v) E[D g'] + sum_k nu_k gamma(T, t, v, z_k) E[D_k g'].
double eval_H0_reduced(const CoefficientModel& model, const PerformanceSpec& spec, const JumpModel& jumps,
                       const TimeGrid& grid, std::size_t i, double x, double v, const TerminalData& data);

struct MaximizeResult {
    double argmax = 0.0;
    double value = 0.0;
    bool at_boundary = false;
};

// 64-point scan of the interval, then golden section around the best cell
// down to width |U| * 1e-6. Ties go to the smaller v.
MaximizeResult maximize_control(const std::function<double(double)>& objective, const Interval& admissible,
                                std::size_t coarse_points = 64, double rel_tol = 1e-6);

struct StationarityReport {
    std::vector<double> t;
    std::vector<double> statistic; // RMS of E[dH/du | G_t] over the largest term scale
    std::vector<double> fitted_rms;
    std::vector<double> scale;
    double threshold = 0.05;

    double max_interior() const; // nodes 1..N-1
    CsvTable table() const;      // t, statistic, threshold, pass
};

StationarityReport check_stationarity(const CoefficientModel& model, const PerformanceSpec& spec,
                                      const StateEnsemble& states, const PathBundle& paths,
                                      const AdjointSolution& adjoint, const InfoMode& info = InfoMode::full(),
                                      const RegressionBasis& basis = {});

struct ArrowReport {
    std::vector<double> x_grid;
    std::vector<double> kappa_hat;
    double max_positive_second_difference = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

// kappa(x, v) = mean over paths of H at node i with the adjoint held fixed;
// kappa_hat(x) = max over v. Concavity is judged by second differences.
ArrowReport arrow_spotcheck(const CoefficientModel& model, const PerformanceSpec& spec,
                            const StateEnsemble& states, const PathBundle& paths, const AdjointSolution& adjoint,
                            std::size_t i, std::size_t x_points = 16);

struct MaximumConditionReport {
    double mean_gap_conditional = 0.0;   // E[max_v E[H|G] - E[H(u)|G]]
    double mean_shift_conditional = 0.0; // E|v*_cond - u|
    double mean_shift_pathwise = 0.0;    // E|v*_path - u|
    std::size_t boundary_hits = 0;
};

// Compares the realized control at node i with the maximizer of H, taking
// the conditional expectation first (regression in v-parametrized form) and,
// as a diagnostic, pathwise first.
MaximumConditionReport check_maximum_condition(const CoefficientModel& model, const PerformanceSpec& spec,
                                               const StateEnsemble& states, const PathBundle& paths,
                                               const AdjointSolution& adjoint, std::size_t i,
                                               const InfoMode& info = InfoMode::full(),
                                               const RegressionBasis& basis = {}, std::size_t v_points = 17);

struct VariationEnsemble {
    std::size_t steps = 0, paths = 0;
    std::vector<double> values; // [m * (N+1) + i]
    double at(std::size_t m, std::size_t i) const { return values[m * (steps + 1) + i]; }
};

// Forward Euler of the linearized state equation in direction beta, along
// the realized states and controls.
VariationEnsemble simulate_variation(const CoefficientModel& model, const StateEnsemble& states,
                                     const PathBundle& paths, const Perturbation& beta);

// beta = alpha * 1[t_start, t_start + width) with alpha = 1 + 0.5 tanh(B(t_start)).
Perturbation window_perturbation(const PathBundle& paths, std::size_t start, std::size_t width);

struct GateauxReport {
    double fd = 0.0, fd_se = 0.0;
    double adjoint = 0.0, adjoint_se = 0.0;
    bool pass = false;
};

GateauxReport gateaux_check(const CoefficientModel& model, const PerformanceSpec& spec,
                            const ControlProcess& control, const Perturbation& beta, const PathBundle& paths,
                            Scheme scheme, const AdjointOptions& options = {}, double lambda = 1e-3);

} // namespace vmp
