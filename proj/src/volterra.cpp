#include "vmp/volterra.hpp"

#include "vmp/error.hpp"
#include "vmp/parallel.hpp"

#include <cmath>
#include <string>

namespace vmp {

StateEnsemble::StateEnsemble(TimeGrid grid, std::size_t paths, Scheme scheme, std::vector<double> states,
                             std::vector<double> controls, ControlProcess control)
    : grid_(grid), paths_(paths), scheme_(scheme), states_(std::move(states)), controls_(std::move(controls)),
      control_(std::move(control)) {}

std::vector<double> StateEnsemble::column(std::size_t i) const {
    std::vector<double> out(paths_);
    for (std::size_t m = 0; m < paths_; ++m) out[m] = at(m, i);
    return out;
}

std::vector<double> StateEnsemble::control_column(std::size_t i) const {
    std::vector<double> out(paths_);
    for (std::size_t m = 0; m < paths_; ++m) out[m] = control(m, i);
    return out;
}

SchemeRunner::SchemeRunner(const CoefficientModel& model, const TimeGrid& grid, const JumpModel& jumps,
                           Scheme scheme)
    : model_(model), grid_(grid), jumps_(jumps), scheme_(scheme), use_jumps_(jumps.active() && !model.jump.zero) {
    if (scheme == Scheme::log_euler && use_jumps_)
        throw ContractViolation("the log-Euler scheme supports Brownian noise only");
}

// b(t, t_j) dt + sigma(t, t_j) dB_j + sum_k gamma(t, t_j, z_k) dN_{j,k}
double SchemeRunner::integral_term(double t, std::size_t j, const double* X, const double* u,
                                   const PathNoise& noise) const {
    double s = grid_.node(j);
    KernelArgs a{t, s, X[j], u[j], 0.0};
    double term = 0.0;
    if (!model_.drift.zero) term += model_.drift.value(a) * grid_.dt();
    if (!model_.diffusion.zero) term += model_.diffusion.value(a) * noise.dB[j];
    if (use_jumps_) {
        std::size_t K = jumps_.mark_count();
        for (std::size_t k = 0; k < K; ++k) {
            a.z = jumps_.marks[k];
            term += model_.jump.value(a) * noise.dN[j * K + k];
        }
    }
    return term;
}

// sum_{j<l} [db/dt dt + dsigma/dt dB_j + sum_k dgamma/dt dN_{j,k}] at t_l
double SchemeRunner::memory_drift(std::size_t l, const double* X, const double* u, const PathNoise& noise) const {
    double t = grid_.node(l);
    double dt = grid_.dt();
    std::size_t K = jumps_.mark_count();
    double A = 0.0;
    for (std::size_t j = 0; j < l; ++j) {
        KernelArgs a{t, grid_.node(j), X[j], u[j], 0.0};
        if (!model_.drift.t_invariant) A += model_.drift.d_t(a) * dt;
        if (!model_.diffusion.t_invariant) A += model_.diffusion.d_t(a) * noise.dB[j];
        if (use_jumps_ && !model_.jump.t_invariant) {
            for (std::size_t k = 0; k < K; ++k) {
                a.z = jumps_.marks[k];
                A += model_.jump.d_t(a) * noise.dN[j * K + k];
            }
        }
    }
    return A;
}

void SchemeRunner::run(std::span<double> Xs, std::span<double> us, const PathNoise& noise, std::size_t from,
                       std::size_t to, const ControlProcess* control, std::size_t path) const {
    double* X = Xs.data();
    double* u = us.data();
    double dt = grid_.dt();
    std::size_t K = jumps_.mark_count();
    bool memoryless = model_.memoryless();

    double B = 0.0;
    if (control)
        for (std::size_t j = 0; j < from; ++j) B += noise.dB[j];

    // Running history sum for memoryless kernels in the integral form.
    double S = 0.0;
    if (scheme_ == Scheme::integral && memoryless && from > 0) S = X[from] - model_.xi(grid_.node(from));

    for (std::size_t l = from; l < to; ++l) {
        double t = grid_.node(l);
        if (control) {
            u[l] = control->value(ControlContext{l, path, t, X[l], B});
            B += noise.dB[l];
        }
        double next;
        switch (scheme_) {
        case Scheme::integral: {
            double t_next = grid_.node(l + 1);
            if (memoryless) {
                S += integral_term(t_next, l, X, u, noise);
                next = model_.xi(t_next) + S;
            } else {
                double sum = 0.0;
                for (std::size_t j = 0; j <= l; ++j) sum += integral_term(t_next, j, X, u, noise);
                next = model_.xi(t_next) + sum;
            }
            break;
        }
        case Scheme::differential: {
            KernelArgs a{t, t, X[l], u[l], 0.0};
            double drift = model_.xi_prime(t);
            if (!model_.drift.zero) drift += model_.drift.value(a);
            if (!memoryless) drift += memory_drift(l, X, u, noise);
            next = X[l] + drift * dt;
            if (!model_.diffusion.zero) next += model_.diffusion.value(a) * noise.dB[l];
            if (use_jumps_) {
                for (std::size_t k = 0; k < K; ++k) {
                    a.z = jumps_.marks[k];
                    next += model_.jump.value(a) * noise.dN[l * K + k];
                }
            }
            break;
        }
        default: {
            double x = X[l];
            if (!(x > 0.0))
                throw SimulationError("log-Euler scheme met a nonpositive state at path " + std::to_string(path) +
                                      ", node " + std::to_string(l));
            KernelArgs a{t, t, x, u[l], 0.0};
            double drift = model_.xi_prime(t);
            if (!model_.drift.zero) drift += model_.drift.value(a);
            if (!memoryless) {
                double A = memory_drift(l, X, u, noise);
                if (!std::isfinite(A))
                    throw SimulationError("non-finite memory term at path " + std::to_string(path) + ", node " +
                                          std::to_string(l));
                drift += A;
            }
            double vol = model_.diffusion.zero ? 0.0 : model_.diffusion.value(a) / x;
            double mu = drift / x - 0.5 * vol * vol;
            next = x * std::exp(vol * noise.dB[l] + mu * dt);
            break;
        }
        }
        if (!std::isfinite(next))
            throw SimulationError("non-finite state at path " + std::to_string(path) + ", node " +
                                  std::to_string(l + 1));
        X[l + 1] = next;
    }
}

StateEnsemble simulate(const CoefficientModel& model, const ControlProcess& control, const PathBundle& paths,
                       Scheme scheme) {
    const TimeGrid& grid = paths.grid();
    std::size_t N = grid.steps(), M = paths.path_count();
    std::size_t K = paths.jump_model().mark_count();
    SchemeRunner runner(model, grid, paths.jump_model(), scheme);
    std::vector<double> X(M * (N + 1)), U(M * N);
    double x0 = model.xi(0.0);
    parallel_for(M, [&](std::size_t begin, std::size_t end) {
        std::vector<double> dN(N * K);
        for (std::size_t m = begin; m < end; ++m) {
            if (K) paths.compensated_increments(m, dN);
            std::span<double> Xm(X.data() + m * (N + 1), N + 1);
            std::span<double> Um(U.data() + m * N, N);
            Xm[0] = x0;
            runner.run(Xm, Um, PathNoise{paths.increments(m), dN}, 0, N, &control, m);
        }
    });
    return StateEnsemble(grid, M, scheme, std::move(X), std::move(U), control);
}

StateEnsemble simulate_integral_form(const CoefficientModel& model, const ControlProcess& control,
                                     const PathBundle& paths) {
    return simulate(model, control, paths, Scheme::integral);
}

StateEnsemble simulate_differential_form(const CoefficientModel& model, const ControlProcess& control,
                                         const PathBundle& paths) {
    return simulate(model, control, paths, Scheme::differential);
}

StateEnsemble simulate_log_euler(const CoefficientModel& model, const ControlProcess& control,
                                 const PathBundle& paths) {
    return simulate(model, control, paths, Scheme::log_euler);
}

std::vector<double> performance_per_path(const PerformanceSpec& spec, const StateEnsemble& states) {
    const TimeGrid& grid = states.grid();
    std::size_t N = grid.steps(), M = states.path_count();
    std::vector<double> J(M);
    for (std::size_t m = 0; m < M; ++m) {
        double s = 0.0;
        if (!spec.running_zero)
            for (std::size_t i = 0; i < N; ++i)
                s += spec.running(grid.node(i), states.at(m, i), states.control(m, i)) * grid.dt();
        s += spec.terminal(states.at(m, N));
        if (!std::isfinite(s)) throw SimulationError("non-finite performance value on path " + std::to_string(m));
        J[m] = s;
    }
    return J;
}

Estimate evaluate_performance(const PerformanceSpec& spec, const StateEnsemble& states) {
    auto J = performance_per_path(spec, states);
    return mean_estimate(J);
}

CsvTable trajectory_table(const StateEnsemble& states) {
    CsvTable table({"t", "mean_X", "std_X", "q05", "q95"});
    for (std::size_t i = 0; i <= states.steps(); ++i) {
        auto col = states.column(i);
        table.row({fmt_number(states.grid().node(i)), fmt_number(mean(col)), fmt_number(stddev(col)),
                   fmt_number(quantile(col, 0.05)), fmt_number(quantile(col, 0.95))});
    }
    return table;
}

} // namespace vmp
