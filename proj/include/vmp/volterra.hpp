#pragma once

#include "vmp/csv.hpp"
#include "vmp/grid_noise.hpp"
#include "vmp/models.hpp"
#include "vmp/stats.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace vmp {

enum class Scheme {
    integral,     // full-history sums of the Volterra equation
    differential, // Euler on dX with the d/dt memory terms
    log_euler,    // Euler on ln X; positive by construction, Brownian only
};

// X_i^m on nodes 0..N and the realized controls u_i^m on nodes 0..N-1.
class StateEnsemble {
public:
    StateEnsemble(TimeGrid grid, std::size_t paths, Scheme scheme, std::vector<double> states,
                  std::vector<double> controls, ControlProcess control);

    const TimeGrid& grid() const { return grid_; }
    std::size_t path_count() const { return paths_; }
    std::size_t steps() const { return grid_.steps(); }
    Scheme scheme() const { return scheme_; }
    const ControlProcess& control_process() const { return control_; }

    double at(std::size_t m, std::size_t i) const { return states_[m * (grid_.steps() + 1) + i]; }
    double control(std::size_t m, std::size_t i) const { return controls_[m * grid_.steps() + i]; }
    std::span<const double> path(std::size_t m) const {
        return {states_.data() + m * (grid_.steps() + 1), grid_.steps() + 1};
    }
    std::span<const double> controls(std::size_t m) const {
        return {controls_.data() + m * grid_.steps(), grid_.steps()};
    }
    std::vector<double> column(std::size_t i) const;
    std::vector<double> control_column(std::size_t i) const;

private:
    TimeGrid grid_;
    std::size_t paths_;
    Scheme scheme_;
    std::vector<double> states_;
    std::vector<double> controls_;
    ControlProcess control_;
};

// Noise of a single path in dense form; dN holds the compensated counts
// dN_{i,k} - lambda w_k dt at [i*K + k].
struct PathNoise {
    std::span<const double> dB;
    std::span<const double> dN;
};

// The per-path recursion behind every simulator. Given X[0..from] and, when
// control is null, fixed u[0..to-1], fills X[from+1..to]. With a control the
// values u[from..to-1] are evaluated on the fly and written back.
class SchemeRunner {
public:
    SchemeRunner(const CoefficientModel& model, const TimeGrid& grid, const JumpModel& jumps, Scheme scheme);

    void run(std::span<double> X, std::span<double> u, const PathNoise& noise, std::size_t from, std::size_t to,
             const ControlProcess* control, std::size_t path) const;

    Scheme scheme() const { return scheme_; }

private:
    const CoefficientModel& model_;
    TimeGrid grid_;
    const JumpModel& jumps_;
    Scheme scheme_;
    bool use_jumps_;

    double integral_term(double t_target, std::size_t j, const double* X, const double* u,
                         const PathNoise& noise) const;
    double memory_drift(std::size_t l, const double* X, const double* u, const PathNoise& noise) const;
};

StateEnsemble simulate(const CoefficientModel& model, const ControlProcess& control, const PathBundle& paths,
                       Scheme scheme);
StateEnsemble simulate_integral_form(const CoefficientModel& model, const ControlProcess& control,
                                     const PathBundle& paths);
StateEnsemble simulate_differential_form(const CoefficientModel& model, const ControlProcess& control,
                                         const PathBundle& paths);
// Positive scheme on ln X; rejects active jump kernels.
StateEnsemble simulate_log_euler(const CoefficientModel& model, const ControlProcess& control,
                                 const PathBundle& paths);

// sum_{i<N} f(t_i, X_i, u_i) dt + g(X_N), one value per path.
std::vector<double> performance_per_path(const PerformanceSpec& spec, const StateEnsemble& states);
Estimate evaluate_performance(const PerformanceSpec& spec, const StateEnsemble& states);

// Columns t, mean_X, std_X, q05, q95.
CsvTable trajectory_table(const StateEnsemble& states);

} // namespace vmp
