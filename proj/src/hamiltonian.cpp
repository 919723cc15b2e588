#include "vmp/hamiltonian.hpp"

#include "vmp/error.hpp"
#include "vmp/parallel.hpp"
#include "vmp/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace vmp {

AdjointSlice SliceBuffer::view(std::size_t node, double q) const { return {node, p, q, r, dp, djp}; }

void gather_slice(const AdjointTriple& triple, const MalliavinField& field, bool with_field, std::size_t i,
                  std::size_t m, SliceBuffer& buf) {
    std::size_t N = triple.steps, K = triple.marks;
    buf.p.resize(N - i + 1);
    for (std::size_t j = i; j <= N; ++j) buf.p[j - i] = triple.p(m, j);
    buf.r.assign(K, 0.0);
    if (i < N)
        for (std::size_t k = 0; k < K; ++k) buf.r[k] = triple.r(m, i, k);
    buf.dp.clear();
    buf.djp.clear();
    if (!with_field) return;
    buf.dp.resize(N - i + 1);
    buf.djp.resize((N - i + 1) * K);
    for (std::size_t j = i; j <= N; ++j) {
        buf.dp[j - i] = field.dp(i, j, m);
        for (std::size_t k = 0; k < K; ++k) buf.djp[(j - i) * K + k] = field.djp(i, j, k, m);
    }
}

Hamiltonian::Hamiltonian(const CoefficientModel& model, const PerformanceSpec& spec, const JumpModel& jumps,
                         const TimeGrid& grid)
    : model_(model), spec_(spec), jumps_(jumps), grid_(grid), use_jumps_(jumps.active() && !model.jump.zero),
      needs_field_(field_required(model, jumps)) {
    if (!model.drift.complete() || !model.diffusion.complete() || !model.jump.complete())
        throw ConfigError("model '" + model.name + "' lacks kernel partials needed by the Hamiltonian");
    if (!spec.running_zero && (!spec.running || !spec.running_dx || !spec.running_dv))
        throw ConfigError("performance '" + spec.name + "' lacks running-cost derivatives");
}

double Hamiltonian::h0(double t, double x, double v, double p, double q, std::span<const double> r) const {
    KernelArgs a{t, t, x, v, 0.0};
    double h = spec_.running_zero ? 0.0 : spec_.running(t, x, v);
    if (!model_.drift.zero) h += model_.drift.value(a) * p;
    if (!model_.diffusion.zero) h += model_.diffusion.value(a) * q;
    if (use_jumps_) {
        for (std::size_t k = 0; k < jumps_.mark_count(); ++k) {
            a.z = jumps_.marks[k];
            h += jumps_.intensity * jumps_.weights[k] * model_.jump.value(a) * r[k];
        }
    }
    return h;
}

void Hamiltonian::terms(const AdjointSlice& s, double x, double v, Part part, std::span<double> out) const {
    std::size_t N = grid_.steps(), i = s.node, K = jumps_.mark_count();
    if (i > N || s.p.size() != N - i + 1) throw ContractViolation("adjoint slice does not cover nodes i..N");
    std::fill(out.begin(), out.end(), 0.0);
    double t = grid_.node(i), dt = grid_.dt();

    auto diag = [&](const KernelFamily& k, const KernelArgs& a) {
        switch (part) {
        case Part::value: return k.value(a);
        case Part::dx: return k.d_x(a);
        default: return k.d_v(a);
        }
    };
    auto memory = [&](const KernelFamily& k, const KernelArgs& a) {
        switch (part) {
        case Part::value: return k.d_t(a);
        case Part::dx: return k.d_tx(a);
        default: return k.d_tv(a);
        }
    };

    if (!spec_.running_zero) {
        switch (part) {
        case Part::value: out[0] = spec_.running(t, x, v); break;
        case Part::dx: out[0] = spec_.running_dx(t, x, v); break;
        default: out[0] = spec_.running_dv(t, x, v); break;
        }
    }
    KernelArgs a{t, t, x, v, 0.0};
    if (!model_.drift.zero) out[1] = diag(model_.drift, a) * s.p[0];
    if (!model_.diffusion.zero) out[2] = diag(model_.diffusion, a) * s.q;
    if (use_jumps_) {
        if (s.r.size() < K) throw ContractViolation("adjoint slice lacks r values");
        for (std::size_t k = 0; k < K; ++k) {
            a.z = jumps_.marks[k];
            out[3] += jumps_.intensity * jumps_.weights[k] * diag(model_.jump, a) * s.r[k];
        }
    }
    if (i == N) return;

    bool drift_mem = !model_.drift.zero && !model_.drift.t_invariant;
    bool diff_mem = !model_.diffusion.zero && !model_.diffusion.t_invariant;
    bool jump_mem = use_jumps_ && !model_.jump.t_invariant;
    if (diff_mem && s.dp.size() != N - i + 1) throw ContractViolation("Malliavin field entries are missing");
    if (jump_mem && s.djp.size() != (N - i + 1) * K) throw ContractViolation("jump Malliavin field is missing");
    for (std::size_t j = i + 1; j <= N; ++j) {
        KernelArgs b{grid_.node(j), t, x, v, 0.0};
        if (drift_mem) out[4] += memory(model_.drift, b) * s.p[j - i];
        if (diff_mem) out[5] += memory(model_.diffusion, b) * s.dp[j - i];
        if (jump_mem) {
            for (std::size_t k = 0; k < K; ++k) {
                b.z = jumps_.marks[k];
                out[6] += jumps_.intensity * jumps_.weights[k] * memory(model_.jump, b) * s.djp[(j - i) * K + k];
            }
        }
    }
    out[4] *= dt;
    out[5] *= dt;
    out[6] *= dt;
}

double Hamiltonian::h1(const AdjointSlice& s, double x, double v) const {
    double t[du_term_count];
    terms(s, x, v, Part::value, t);
    return t[4] + t[5] + t[6];
}

double Hamiltonian::value(const AdjointSlice& s, double x, double v) const {
    double t[du_term_count];
    terms(s, x, v, Part::value, t);
    double h = 0.0;
    for (double e : t) h += e;
    return h;
}

double Hamiltonian::du(const AdjointSlice& s, double x, double v) const {
    double t[du_term_count];
    terms(s, x, v, Part::dv, t);
    double h = 0.0;
    for (double e : t) h += e;
    return h;
}

double Hamiltonian::dx(const AdjointSlice& s, double x, double v) const {
    double t[du_term_count];
    terms(s, x, v, Part::dx, t);
    double h = 0.0;
    for (double e : t) h += e;
    return h;
}

void Hamiltonian::du_terms(const AdjointSlice& s, double x, double v, std::span<double> out) const {
    if (out.size() < du_term_count) throw ContractViolation("du_terms needs room for 7 terms");
    terms(s, x, v, Part::dv, out.first(du_term_count));
}

double eval_H0_reduced(const CoefficientModel& model, const PerformanceSpec& spec, const JumpModel& jumps,
                       const TimeGrid& grid, std::size_t i, double x, double v, const TerminalData& data) {
    if (!model.x_independent) throw ContractViolation("the reduced Hamiltonian needs an x-independent model");
    double t = grid.node(i), T = grid.horizon();
    KernelArgs a{T, t, x, v, 0.0};
    double h = spec.running_zero ? 0.0 : spec.running(t, x, v);
    if (!model.drift.zero) h += model.drift.value(a) * data.g_prime;
    if (!model.diffusion.zero) h += model.diffusion.value(a) * data.d_g_prime;
    if (jumps.active() && !model.jump.zero) {
        if (data.dj_g_prime.size() < jumps.mark_count()) throw ContractViolation("missing jump terminal data");
        for (std::size_t k = 0; k < jumps.mark_count(); ++k) {
            a.z = jumps.marks[k];
            h += jumps.intensity * jumps.weights[k] * model.jump.value(a) * data.dj_g_prime[k];
        }
    }
    return h;
}

MaximizeResult maximize_control(const std::function<double(double)>& objective, const Interval& U,
                                std::size_t coarse_points, double rel_tol) {
    if (!U.bounded() || !(U.hi >= U.lo)) throw ContractViolation("control maximization needs a bounded interval");
    auto eval = [&](double v) {
        double h = objective(v);
        if (!std::isfinite(h)) throw SimulationError("non-finite Hamiltonian at v = " + fmt_number(v));
        return h;
    };
    if (U.width() == 0.0) return {U.lo, eval(U.lo), true};
    std::size_t n = std::max<std::size_t>(coarse_points, 3);
    double step = U.width() / static_cast<double>(n - 1);
    auto node = [&](std::size_t k) { return k + 1 == n ? U.hi : U.lo + static_cast<double>(k) * step; };
    std::size_t best = 0;
    double best_val = eval(U.lo);
    for (std::size_t k = 1; k < n; ++k) {
        double h = eval(node(k));
        if (h > best_val) {
            best_val = h;
            best = k;
        }
    }
    double lo = node(best == 0 ? 0 : best - 1), hi = node(best + 1 == n ? n - 1 : best + 1);
    const double g = 0.5 * (std::sqrt(5.0) - 1.0);
    double c = hi - g * (hi - lo), d = lo + g * (hi - lo);
    double fc = eval(c), fd = eval(d);
    double tol = U.width() * rel_tol;
    while (hi - lo > tol) {
        if (fc >= fd) {
            hi = d;
            d = c;
            fd = fc;
            c = hi - g * (hi - lo);
            fc = eval(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + g * (hi - lo);
            fd = eval(d);
        }
    }
    double v = 0.5 * (lo + hi), fv = eval(v);
    MaximizeResult res{node(best), best_val, false};
    if (fv > best_val) res = {v, fv, false};
    res.at_boundary = std::abs(res.argmax - U.lo) <= tol || std::abs(res.argmax - U.hi) <= tol;
    return res;
}

double StationarityReport::max_interior() const {
    double s = 0.0;
    for (std::size_t i = 1; i < statistic.size(); ++i) s = std::max(s, statistic[i]);
    return s;
}

CsvTable StationarityReport::table() const {
    CsvTable tab({"t", "statistic", "threshold", "pass"});
    for (std::size_t i = 0; i < t.size(); ++i)
        tab.row({fmt_number(t[i]), fmt_number(statistic[i]), fmt_number(threshold), fmt_bool(statistic[i] <= threshold)});
    return tab;
}

namespace {

void check_adjoint(const StateEnsemble& states, const PathBundle& paths, const AdjointSolution& adj) {
    if (states.path_count() != paths.path_count() || states.steps() != paths.steps())
        throw ContractViolation("states and paths have different shapes");
    if (adj.triple.steps != paths.steps() || adj.triple.paths != paths.path_count())
        throw ContractViolation("adjoint does not match the paths");
}

} // namespace

StationarityReport check_stationarity(const CoefficientModel& model, const PerformanceSpec& spec,
                                      const StateEnsemble& states, const PathBundle& paths,
                                      const AdjointSolution& adjoint, const InfoMode& info,
                                      const RegressionBasis& basis) {
    check_adjoint(states, paths, adjoint);
    info.validate(paths.grid());
    Hamiltonian H(model, spec, paths.jump_model(), paths.grid());
    bool with_field = H.needs_field();
    std::size_t N = paths.steps(), M = paths.path_count(), T = Hamiltonian::du_term_count;
    StationarityReport rep;
    for (std::size_t i = 0; i < N; ++i) {
        std::vector<double> total(M), terms(M * T);
        parallel_for(M, [&](std::size_t lo, std::size_t hi) {
            SliceBuffer buf;
            for (std::size_t m = lo; m < hi; ++m) {
                gather_slice(adjoint.triple, adjoint.field, with_field, i, m, buf);
                std::span<double> out(terms.data() + m * T, T);
                H.du_terms(buf.view(i, adjoint.triple.q(m, i)), states.at(m, i), states.control(m, i), out);
                double s = 0.0;
                for (double e : out) s += e;
                total[m] = s;
            }
        });
        auto fitted = conditional_expectation(total, i, basis, paths, info, &states);
        double scale = 0.0;
        for (std::size_t k = 0; k < T; ++k) {
            double s = 0.0;
            for (std::size_t m = 0; m < M; ++m) s += terms[m * T + k] * terms[m * T + k];
            scale = std::max(scale, std::sqrt(s / static_cast<double>(M)));
        }
        double f = rms(fitted);
        rep.t.push_back(paths.grid().node(i));
        rep.fitted_rms.push_back(f);
        rep.scale.push_back(scale);
        rep.statistic.push_back(scale > 0.0 ? f / scale : 0.0);
    }
    return rep;
}

ArrowReport arrow_spotcheck(const CoefficientModel& model, const PerformanceSpec& spec, const StateEnsemble& states,
                            const PathBundle& paths, const AdjointSolution& adjoint, std::size_t i,
                            std::size_t x_points) {
    check_adjoint(states, paths, adjoint);
    std::size_t N = paths.steps(), M = paths.path_count(), K = adjoint.triple.marks;
    if (i >= N) throw ContractViolation("arrow check node must be below N");
    if (x_points < 16) throw ContractViolation("arrow check needs at least 16 grid points");
    Hamiltonian H(model, spec, paths.jump_model(), paths.grid());
    bool with_field = H.needs_field();

    // H is affine in the adjoint data, so the path average of H equals H at
    // the averaged slice.
    SliceBuffer mean_buf, buf;
    double q_mean = 0.0;
    for (std::size_t m = 0; m < M; ++m) {
        gather_slice(adjoint.triple, adjoint.field, with_field, i, m, buf);
        if (m == 0) {
            mean_buf.p.assign(buf.p.size(), 0.0);
            mean_buf.r.assign(buf.r.size(), 0.0);
            mean_buf.dp.assign(buf.dp.size(), 0.0);
            mean_buf.djp.assign(buf.djp.size(), 0.0);
        }
        for (std::size_t j = 0; j < buf.p.size(); ++j) mean_buf.p[j] += buf.p[j];
        for (std::size_t k = 0; k < K; ++k) mean_buf.r[k] += buf.r[k];
        for (std::size_t j = 0; j < buf.dp.size(); ++j) mean_buf.dp[j] += buf.dp[j];
        for (std::size_t j = 0; j < buf.djp.size(); ++j) mean_buf.djp[j] += buf.djp[j];
        q_mean += adjoint.triple.q(m, i);
    }
    double inv = 1.0 / static_cast<double>(M);
    for (auto* v : {&mean_buf.p, &mean_buf.r, &mean_buf.dp, &mean_buf.djp})
        for (double& e : *v) e *= inv;
    AdjointSlice s = mean_buf.view(i, q_mean * inv);

    auto col = states.column(i);
    double lo = *std::min_element(col.begin(), col.end()), hi = *std::max_element(col.begin(), col.end());
    if (hi - lo <= 0.0) {
        lo -= 1.0;
        hi += 1.0;
    }
    const Interval& U = states.control_process().admissible();
    ArrowReport rep;
    for (std::size_t k = 0; k < x_points; ++k) {
        double x = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(x_points - 1);
        auto best = maximize_control([&](double v) { return H.value(s, x, v); }, U);
        rep.x_grid.push_back(x);
        rep.kappa_hat.push_back(best.value);
    }
    double scale = 0.0;
    for (double v : rep.kappa_hat) scale = std::max(scale, std::abs(v));
    rep.tolerance = 1e-6 * std::max(scale, 1e-300);
    for (std::size_t k = 1; k + 1 < x_points; ++k) {
        double d2 = rep.kappa_hat[k + 1] - 2.0 * rep.kappa_hat[k] + rep.kappa_hat[k - 1];
        rep.max_positive_second_difference = std::max(rep.max_positive_second_difference, d2);
    }
    rep.pass = rep.max_positive_second_difference <= rep.tolerance;
    return rep;
}

MaximumConditionReport check_maximum_condition(const CoefficientModel& model, const PerformanceSpec& spec,
                                               const StateEnsemble& states, const PathBundle& paths,
                                               const AdjointSolution& adjoint, std::size_t i, const InfoMode& info,
                                               const RegressionBasis& basis, std::size_t v_points) {
    check_adjoint(states, paths, adjoint);
    std::size_t N = paths.steps(), M = paths.path_count();
    if (i >= N) throw ContractViolation("maximum-condition node must be below N");
    if (v_points < 2) throw ContractViolation("need at least two control values");
    const Interval& U = states.control_process().admissible();
    if (!U.bounded()) throw ContractViolation("maximum-condition check needs a bounded control set");
    Hamiltonian H(model, spec, paths.jump_model(), paths.grid());
    bool with_field = H.needs_field();

    std::vector<double> vs(v_points);
    for (std::size_t k = 0; k < v_points; ++k)
        vs[k] = k + 1 == v_points ? U.hi : U.lo + U.width() * static_cast<double>(k) / static_cast<double>(v_points - 1);

    // Column 0 is H at the realized control, then one column per grid value.
    Eigen::MatrixXd Hv(static_cast<Eigen::Index>(M), static_cast<Eigen::Index>(v_points + 1));
    parallel_for(M, [&](std::size_t lo, std::size_t hi) {
        SliceBuffer buf;
        for (std::size_t m = lo; m < hi; ++m) {
            gather_slice(adjoint.triple, adjoint.field, with_field, i, m, buf);
            AdjointSlice s = buf.view(i, adjoint.triple.q(m, i));
            double x = states.at(m, i);
            auto e = static_cast<Eigen::Index>(m);
            Hv(e, 0) = H.value(s, x, states.control(m, i));
            for (std::size_t k = 0; k < v_points; ++k) Hv(e, static_cast<Eigen::Index>(k + 1)) = H.value(s, x, vs[k]);
        }
    });
    NodeRegression reg(node_features(paths, info.feature_node(i, paths.grid()), &states), basis);
    Eigen::MatrixXd C = reg.fitted(Hv);

    MaximumConditionReport rep;
    double tol = 1e-12 * U.width();
    for (std::size_t m = 0; m < M; ++m) {
        auto e = static_cast<Eigen::Index>(m);
        std::size_t kc = 0, kp = 0;
        for (std::size_t k = 1; k < v_points; ++k) {
            if (C(e, static_cast<Eigen::Index>(k + 1)) > C(e, static_cast<Eigen::Index>(kc + 1))) kc = k;
            if (Hv(e, static_cast<Eigen::Index>(k + 1)) > Hv(e, static_cast<Eigen::Index>(kp + 1))) kp = k;
        }
        double u = states.control(m, i);
        rep.mean_gap_conditional += C(e, static_cast<Eigen::Index>(kc + 1)) - C(e, 0);
        rep.mean_shift_conditional += std::abs(vs[kc] - u);
        rep.mean_shift_pathwise += std::abs(vs[kp] - u);
        if (std::abs(vs[kc] - U.lo) <= tol || std::abs(vs[kc] - U.hi) <= tol) ++rep.boundary_hits;
    }
    double inv = 1.0 / static_cast<double>(M);
    rep.mean_gap_conditional *= inv;
    rep.mean_shift_conditional *= inv;
    rep.mean_shift_pathwise *= inv;
    return rep;
}

VariationEnsemble simulate_variation(const CoefficientModel& model, const StateEnsemble& states,
                                     const PathBundle& paths, const Perturbation& beta) {
    if (states.path_count() != paths.path_count() || states.steps() != paths.steps())
        throw ContractViolation("states and paths have different shapes");
    if (beta.steps != paths.steps() || (beta.paths != 1 && beta.paths != paths.path_count()))
        throw ContractViolation("perturbation does not match the grid");
    for (const KernelFamily* k : {&model.drift, &model.diffusion, &model.jump})
        if (!k->complete()) throw ConfigError("variation needs all kernel partials of model '" + model.name + "'");
    const TimeGrid& grid = paths.grid();
    const JumpModel& jm = paths.jump_model();
    std::size_t N = grid.steps(), M = paths.path_count(), K = jm.mark_count();
    bool jumps = jm.active() && !model.jump.zero;
    bool memory = !model.memoryless();
    double dt = grid.dt();

    VariationEnsemble out{N, M, std::vector<double>(M * (N + 1), 0.0)};
    parallel_for(M, [&](std::size_t lo, std::size_t hi) {
        std::vector<double> dN(N * K);
        for (std::size_t m = lo; m < hi; ++m) {
            if (K) paths.compensated_increments(m, dN);
            double* Y = out.values.data() + m * (N + 1);
            Y[0] = 0.0;
            for (std::size_t l = 0; l < N; ++l) {
                double t = grid.node(l);
                KernelArgs a{t, t, states.at(m, l), states.control(m, l), 0.0};
                double bl = beta.at(m, l), dB = paths.increment(m, l);
                double drift = 0.0;
                if (!model.drift.zero) drift += model.drift.d_x(a) * Y[l] + model.drift.d_v(a) * bl;
                if (memory) {
                    for (std::size_t j = 0; j < l; ++j) {
                        KernelArgs c{t, grid.node(j), states.at(m, j), states.control(m, j), 0.0};
                        double bj = beta.at(m, j);
                        if (!model.drift.t_invariant)
                            drift += (model.drift.d_tx(c) * Y[j] + model.drift.d_tv(c) * bj) * dt;
                        if (!model.diffusion.t_invariant)
                            drift += (model.diffusion.d_tx(c) * Y[j] + model.diffusion.d_tv(c) * bj) *
                                     paths.increment(m, j);
                        if (jumps && !model.jump.t_invariant) {
                            for (std::size_t k = 0; k < K; ++k) {
                                c.z = jm.marks[k];
                                drift += (model.jump.d_tx(c) * Y[j] + model.jump.d_tv(c) * bj) * dN[j * K + k];
                            }
                        }
                    }
                }
                double next = Y[l] + drift * dt;
                if (!model.diffusion.zero) next += (model.diffusion.d_x(a) * Y[l] + model.diffusion.d_v(a) * bl) * dB;
                if (jumps) {
                    for (std::size_t k = 0; k < K; ++k) {
                        a.z = jm.marks[k];
                        next += (model.jump.d_x(a) * Y[l] + model.jump.d_v(a) * bl) * dN[l * K + k];
                    }
                }
                if (!std::isfinite(next))
                    throw SimulationError("non-finite variation at path " + std::to_string(m) + ", node " +
                                          std::to_string(l + 1));
                Y[l + 1] = next;
            }
        }
    });
    return out;
}

Perturbation window_perturbation(const PathBundle& paths, std::size_t start, std::size_t width) {
    std::size_t N = paths.steps(), M = paths.path_count();
    if (width == 0 || start + width > N) throw ContractViolation("perturbation window leaves the grid");
    Perturbation beta{M, N, std::vector<double>(M * N, 0.0)};
    auto B = paths.brownian_at(start);
    for (std::size_t m = 0; m < M; ++m) {
        double alpha = 1.0 + 0.5 * std::tanh(B[m]);
        for (std::size_t i = start; i < start + width; ++i) beta.values[m * N + i] = alpha;
    }
    return beta;
}

GateauxReport gateaux_check(const CoefficientModel& model, const PerformanceSpec& spec,
                            const ControlProcess& control, const Perturbation& beta, const PathBundle& paths,
                            Scheme scheme, const AdjointOptions& options, double lambda) {
    if (!(lambda > 0.0)) throw ConfigError("Gateaux step must be positive");
    std::size_t N = paths.steps(), M = paths.path_count();
    double dt = paths.grid().dt();
    StateEnsemble base = simulate(model, control, paths, scheme);
    StateEnsemble up = simulate(model, control.perturbed(beta, lambda), paths, scheme);
    StateEnsemble down = simulate(model, control.perturbed(beta, -lambda), paths, scheme);
    auto Ju = performance_per_path(spec, up), Jd = performance_per_path(spec, down);
    std::vector<double> fd(M);
    for (std::size_t m = 0; m < M; ++m) fd[m] = (Ju[m] - Jd[m]) / (2.0 * lambda);

    AdjointSolution adj = solve_general(model, spec, base, paths, options);
    Hamiltonian H(model, spec, paths.jump_model(), paths.grid());
    bool with_field = H.needs_field();
    std::vector<double> ad(M, 0.0);
    parallel_for(M, [&](std::size_t lo, std::size_t hi) {
        SliceBuffer buf;
        for (std::size_t m = lo; m < hi; ++m) {
            double s = 0.0;
            for (std::size_t i = 0; i < N; ++i) {
                double b = beta.at(m, i);
                if (b == 0.0) continue;
                gather_slice(adj.triple, adj.field, with_field, i, m, buf);
                s += H.du(buf.view(i, adj.triple.q(m, i)), base.at(m, i), base.control(m, i)) * b * dt;
            }
            ad[m] = s;
        }
    });
    Estimate a = mean_estimate(fd), b = mean_estimate(ad);
    GateauxReport rep{a.value, a.se, b.value, b.se, false};
    rep.pass = within_stderr(a.value, a.se, b.value, b.se, 3.0);
    return rep;
}

} // namespace vmp
