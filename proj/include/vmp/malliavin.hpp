#pragma once

#include "vmp/csv.hpp"
#include "vmp/grid_noise.hpp"
#include "vmp/regression.hpp"

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace vmp {

using PathFunctional = std::function<double(const Path&)>;
// u(path, i) may only look at increments and jumps before node i.
using AdaptedProcess = std::function<double(const Path&, std::size_t)>;
using AdaptedMarkProcess = std::function<double(const Path&, std::size_t, std::size_t)>;

// dF/d(dB_i) by central difference with h = 1e-4 sqrt(dt).
double d_brownian(const PathFunctional& F, const Path& path, std::size_t i);
// All N Brownian derivatives of one path, perturbing a single copy in place.
std::vector<double> d_brownian_all(const PathFunctional& F, const Path& path);
// F(path with one extra mark-k jump at node i) - F(path).
double d_jump(const PathFunctional& F, const Path& path, std::size_t i, std::size_t k);

struct CheckReport {
    std::string name;
    double lhs = 0.0, rhs = 0.0;
    double se_lhs = 0.0, se_rhs = 0.0;
    bool pass = false;
    bool degenerate = false;

    double combined_se() const;
};

CheckReport check_duality_brownian(const PathFunctional& F, const AdaptedProcess& u, const PathBundle& paths,
                                   const RegressionBasis& basis = {});
// Throws DegenerateCase when the jump model is inactive.
CheckReport check_duality_jump(const PathFunctional& F, const AdaptedMarkProcess& psi, const PathBundle& paths,
                               const RegressionBasis& basis = {});

struct ClarkOconeResult {
    std::vector<double> residuals;
    double relative_rms = 0.0;
    double std_F = 0.0;
    bool degenerate = false; // std(F) == 0; relative_rms then holds RMS(residual)
};
ClarkOconeResult clark_ocone_reconstruct(const PathFunctional& F, const PathBundle& paths,
                                         const RegressionBasis& basis = {});

// Symmetric kernel evaluated at n grid times.
using ChaosKernel = std::function<double(std::span<const double>)>;
// n! sum_{j1<...<jn} f(t_j1, ..., t_jn) dB_j1 ... dB_jn for n in {1, 2, 3}.
double iterated_integral(const ChaosKernel& f, int n, const Path& path);

// E[I_2(f)^2] against 2 ||f||^2 with the norm as a full-grid Riemann sum.
CheckReport check_isometry(const std::function<double(double, double)>& f2, const PathBundle& paths);

struct ChaosDerivativeReport {
    double max_abs_error = 0.0;     // after removing the diagonal term 2 f(t_i, t_i) dB_i
    double max_raw_error = 0.0;     // plain |D I_2 - 2 I_1(f(., t_i))|
    double max_diagonal_term = 0.0;
};
ChaosDerivativeReport check_chaos_derivative(const std::function<double(double, double)>& f2,
                                             const PathBundle& paths, std::size_t sample_paths = 200);

struct FubiniSums {
    double rows_first = 0.0;    // sum_i sum_{j<i} a(t_i, t_j) dt^2
    double columns_first = 0.0; // sum_j sum_{i>j} a(t_i, t_j) dt^2
};
FubiniSums fubini_sums(const std::function<double(double, double)>& a, const TimeGrid& grid);

// Largest |D F| over nodes i >= j on the sampled paths, for F measurable
// with respect to the information before node j. Both noises are probed.
double adaptedness_violation(const PathFunctional& F, std::size_t j, const PathBundle& paths,
                             std::size_t sample_paths = 100);

// Columns check_name, lhs, rhs, stderr, pass.
CsvTable check_table(const std::vector<CheckReport>& reports);

} // namespace vmp
