#include "vmp/adjoint.hpp"

#include "vmp/error.hpp"
#include "vmp/hamiltonian.hpp"
#include "vmp/parallel.hpp"
#include "vmp/recompute.hpp"
#include "vmp/stats.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace vmp {

AdjointTriple::AdjointTriple(std::size_t steps_, std::size_t paths_, std::size_t marks_)
    : steps(steps_), paths(paths_), marks(marks_), p_values(paths_ * (steps_ + 1), 0.0),
      q_values(paths_ * steps_, 0.0), r_values(paths_ * steps_ * marks_, 0.0) {}

std::vector<double> AdjointTriple::p_column(std::size_t i) const {
    std::vector<double> out(paths);
    for (std::size_t m = 0; m < paths; ++m) out[m] = p(m, i);
    return out;
}

std::vector<double> AdjointTriple::q_column(std::size_t i) const {
    std::vector<double> out(paths);
    for (std::size_t m = 0; m < paths; ++m) out[m] = q(m, i);
    return out;
}

std::vector<double> AdjointTriple::r_column(std::size_t i, std::size_t k) const {
    std::vector<double> out(paths);
    for (std::size_t m = 0; m < paths; ++m) out[m] = r(m, i, k);
    return out;
}

MalliavinField::MalliavinField(std::size_t steps, std::size_t paths, std::size_t marks)
    : steps_(steps), paths_(paths), marks_(marks), offsets_(steps + 2, 0) {
    for (std::size_t i = 0; i <= steps; ++i) offsets_[i + 1] = offsets_[i] + (steps - i + 1);
    dp_.assign(offsets_[steps + 1] * paths, 0.0);
    djp_.assign(offsets_[steps + 1] * paths * marks, 0.0);
}

double MalliavinField::dp(std::size_t i, std::size_t j, std::size_t m) const {
    if (!present()) throw ContractViolation("Malliavin field was not built");
    if (j < i) return 0.0;
    if (j > steps_ || m >= paths_) throw ContractViolation("Malliavin field index out of range");
    return dp_[slot(i, j) * paths_ + m];
}

double MalliavinField::djp(std::size_t i, std::size_t j, std::size_t k, std::size_t m) const {
    if (!present()) throw ContractViolation("Malliavin field was not built");
    if (j < i) return 0.0;
    if (j > steps_ || m >= paths_ || k >= marks_) throw ContractViolation("Malliavin field index out of range");
    return djp_[(slot(i, j) * marks_ + k) * paths_ + m];
}

bool field_required(const CoefficientModel& model, const JumpModel& jumps) {
    bool diffusion = !model.diffusion.zero && !model.diffusion.t_invariant;
    bool jump = jumps.active() && !model.jump.zero && !model.jump.t_invariant;
    return diffusion || jump;
}

namespace {

// Node-wise raw features (B, X, eta) kept as dense tables so that surrogates
// can be evaluated and differentiated per path.
struct FeatureTables {
    std::size_t N = 0, M = 0;
    bool jumps = false;
    std::vector<double> B, eta; // [j * M + m]
    const StateEnsemble* states = nullptr;

    FeatureTables(const PathBundle& paths, const StateEnsemble& st)
        : N(paths.steps()), M(paths.path_count()), jumps(paths.jump_model().active()), states(&st) {
        B.assign((N + 1) * M, 0.0);
        for (std::size_t m = 0; m < M; ++m) {
            double b = 0.0;
            for (std::size_t j = 0; j < N; ++j) {
                b += paths.increment(m, j);
                B[(j + 1) * M + m] = b;
            }
        }
        if (jumps) {
            eta.resize((N + 1) * M);
            for (std::size_t j = 0; j <= N; ++j) {
                auto col = paths.eta_at(j);
                std::copy(col.begin(), col.end(), eta.begin() + static_cast<std::ptrdiff_t>(j * M));
            }
        }
    }

    std::size_t width() const { return jumps ? 3 : 2; }

    void raw(std::size_t j, std::size_t m, double* out) const {
        out[0] = B[j * M + m];
        out[1] = states->at(m, j);
        if (jumps) out[2] = eta[j * M + m];
    }

    FeatureMatrix matrix(std::size_t j) const {
        FeatureMatrix f;
        f.add("B", std::vector<double>(B.begin() + static_cast<std::ptrdiff_t>(j * M),
                                       B.begin() + static_cast<std::ptrdiff_t>((j + 1) * M)));
        f.add("X", states->column(j));
        if (jumps)
            f.add("eta", std::vector<double>(eta.begin() + static_cast<std::ptrdiff_t>(j * M),
                                             eta.begin() + static_cast<std::ptrdiff_t>((j + 1) * M)));
        return f;
    }
};

// D_i p_j (Brownian) and the add-one-jump differences of p_j for j = i+1..last
// on one path, through the chain rule on surrogate_j and the state tangent.
// db[j - i - 1], dj[(j - i - 1) * K + k].
void derivative_row(const FeatureTables& ft, const std::vector<Surrogate>& sur, const PerformanceSpec& spec,
                    const StateSensitivity& sens, const JumpModel& jm, std::size_t m, std::size_t i,
                    std::size_t last, std::span<double> db, std::span<double> dj) {
    std::size_t N = ft.N, K = ft.jumps ? jm.mark_count() : 0, n = last - i;
    thread_local std::vector<double> dX, raw, shifted, grad;
    dX.resize(n);
    raw.resize(ft.width());
    shifted.resize(ft.width());
    grad.resize(ft.width());
    sens.brownian(m, i, last, dX);
    for (std::size_t j = i + 1; j <= last; ++j) {
        double d = dX[j - i - 1];
        if (j == N) {
            db[j - i - 1] = spec.terminal_second(ft.states->at(m, N)) * d;
            continue;
        }
        ft.raw(j, m, raw.data());
        sur[j].gradient(raw, grad);
        db[j - i - 1] = grad[0] + grad[1] * d;
    }
    for (std::size_t k = 0; k < K; ++k) {
        sens.jump(m, i, k, last, dX);
        for (std::size_t j = i + 1; j <= last; ++j) {
            double d = dX[j - i - 1];
            double& out = dj[(j - i - 1) * K + k];
            if (j == N) {
                double x = ft.states->at(m, N);
                out = spec.terminal_prime(x + d) - spec.terminal_prime(x);
                continue;
            }
            ft.raw(j, m, raw.data());
            shifted = raw;
            shifted[1] += d;
            shifted[2] += jm.marks[k];
            out = sur[j].value(shifted) - sur[j].value(raw);
        }
    }
}

double sup_rms(const std::vector<double>& per_node) {
    double s = 0.0;
    for (double v : per_node) s = std::max(s, v);
    return s;
}

void check_shapes(const StateEnsemble& states, const PathBundle& paths) {
    if (states.path_count() != paths.path_count() || states.steps() != paths.steps())
        throw ContractViolation("states and paths have different shapes");
}

} // namespace

AdjointTriple solve_explicit_x_independent(const CoefficientModel& model, const PerformanceSpec& spec,
                                           const StateEnsemble& states, const PathBundle& paths,
                                           const RegressionBasis& basis) {
    if (!model.x_independent) throw ContractViolation("explicit adjoint needs an x-independent model");
    check_shapes(states, paths);
    const JumpModel& jm = paths.jump_model();
    std::size_t N = paths.steps(), M = paths.path_count(), K = jm.active() ? jm.mark_count() : 0;
    AdjointTriple tr(N, M, K);
    tr.surrogates.resize(N + 1);
    FeatureTables ft(paths, states);
    StateSensitivity sens(model, paths, states);

    std::vector<double> gp(M), gpp(M);
    for (std::size_t m = 0; m < M; ++m) {
        gp[m] = spec.terminal_prime(states.at(m, N));
        gpp[m] = spec.terminal_second(states.at(m, N));
        tr.p(m, N) = gp[m];
    }

    Eigen::MatrixXd Y(static_cast<Eigen::Index>(M), static_cast<Eigen::Index>(2 + K));
    for (std::size_t i = 0; i < N; ++i) {
        NodeRegression reg(ft.matrix(i), basis);
        parallel_for(M, [&](std::size_t lo, std::size_t hi) {
            std::vector<double> dX(N - i);
            for (std::size_t m = lo; m < hi; ++m) {
                auto e = static_cast<Eigen::Index>(m);
                Y(e, 0) = gp[m];
                sens.brownian(m, i, N, dX);
                Y(e, 1) = gpp[m] * dX[N - i - 1];
                for (std::size_t k = 0; k < K; ++k) {
                    sens.jump(m, i, k, N, dX);
                    double x = states.at(m, N);
                    Y(e, static_cast<Eigen::Index>(2 + k)) =
                        spec.terminal_prime(x + dX[N - i - 1]) - spec.terminal_prime(x);
                }
            }
        });
        Eigen::MatrixXd F = reg.fitted(Y);
        tr.surrogates[i] = reg.fit(gp);
        for (std::size_t m = 0; m < M; ++m) {
            auto e = static_cast<Eigen::Index>(m);
            tr.p(m, i) = F(e, 0);
            tr.q(m, i) = F(e, 1);
            for (std::size_t k = 0; k < K; ++k) tr.r(m, i, k) = F(e, static_cast<Eigen::Index>(2 + k));
        }
    }
    tr.passes = 1;
    tr.changes = {1.0};
    return tr;
}

AdjointSolution solve_general(const CoefficientModel& model, const PerformanceSpec& spec,
                              const StateEnsemble& states, const PathBundle& paths, const AdjointOptions& options) {
    check_shapes(states, paths);
    const JumpModel& jm = paths.jump_model();
    const TimeGrid& grid = paths.grid();
    std::size_t N = paths.steps(), M = paths.path_count(), K = jm.active() ? jm.mark_count() : 0;
    if (N > 256) throw ContractViolation("solve_general is limited to N <= 256 steps");
    if (options.max_iter < 1) throw ConfigError("picard max_iter must be >= 1");
    double dt = grid.dt();

    Hamiltonian H(model, spec, jm, grid);
    bool with_field = field_required(model, jm);
    if (with_field && !options.build_field)
        throw ContractViolation("this model needs the Malliavin field; build_field must be on");

    FeatureTables ft(paths, states);
    StateSensitivity sens(model, paths, states);
    AdjointSolution sol;
    AdjointTriple& cur = sol.triple;
    cur = AdjointTriple(N, M, K);
    cur.surrogates.resize(N + 1);
    if (with_field) sol.field = MalliavinField(N, M, K);
    MalliavinField& field = sol.field;
    std::vector<double> prev_p; // p of the previous pass

    std::vector<double> gp(M);
    for (std::size_t m = 0; m < M; ++m) gp[m] = spec.terminal_prime(states.at(m, N));

    bool surrogate_q = options.estimator == AdjointOptions::Estimator::surrogate;
    std::vector<double> changes;
    for (int pass = 1; pass <= options.max_iter; ++pass) {
        for (std::size_t m = 0; m < M; ++m) cur.p(m, N) = gp[m];

        for (std::size_t i = N; i-- > 0;) {
            NodeRegression reg(ft.matrix(i), options.basis);
            std::size_t last = with_field ? N : i + 1, n = last - i;
            // Columns: p_{i+1}; D_i p_j for j in (i, last]; jump differences.
            std::size_t cols = 1 + n + n * K;
            Eigen::MatrixXd Y(static_cast<Eigen::Index>(M), static_cast<Eigen::Index>(cols));
            parallel_for(M, [&](std::size_t lo, std::size_t hi) {
                std::vector<double> db(n), dj(n * K);
                for (std::size_t m = lo; m < hi; ++m) {
                    auto e = static_cast<Eigen::Index>(m);
                    Y(e, 0) = cur.p(m, i + 1);
                    if (!surrogate_q && !with_field) continue;
                    derivative_row(ft, cur.surrogates, spec, sens, jm, m, i, last, db, dj);
                    for (std::size_t c = 0; c < n; ++c) Y(e, static_cast<Eigen::Index>(1 + c)) = db[c];
                    for (std::size_t c = 0; c < n * K; ++c) Y(e, static_cast<Eigen::Index>(1 + n + c)) = dj[c];
                }
            });
            if (!surrogate_q && !with_field) Y.rightCols(static_cast<Eigen::Index>(cols - 1)).setZero();
            Eigen::MatrixXd F = reg.fitted(Y);

            std::vector<double> q(M), r(M * K);
            for (std::size_t m = 0; m < M; ++m) {
                auto e = static_cast<Eigen::Index>(m);
                q[m] = F(e, 1);
                for (std::size_t k = 0; k < K; ++k) r[m * K + k] = F(e, static_cast<Eigen::Index>(1 + n + k));
            }
            if (!surrogate_q) {
                Eigen::MatrixXd Z(static_cast<Eigen::Index>(M), static_cast<Eigen::Index>(1 + K));
                for (std::size_t m = 0; m < M; ++m) {
                    auto e = static_cast<Eigen::Index>(m);
                    double resid = cur.p(m, i + 1) - F(e, 0);
                    Z(e, 0) = resid * paths.increment(m, i) / dt;
                    for (std::size_t k = 0; k < K; ++k) {
                        std::size_t cnt = 0;
                        for (const auto& rec : paths.jumps(m))
                            if (rec.node == i && rec.mark == k) ++cnt;
                        double comp = jm.compensator(k, dt);
                        Z(e, static_cast<Eigen::Index>(1 + k)) = resid * (static_cast<double>(cnt) - comp) / comp;
                    }
                }
                Eigen::MatrixXd G = reg.fitted(Z);
                for (std::size_t m = 0; m < M; ++m) {
                    auto e = static_cast<Eigen::Index>(m);
                    q[m] = G(e, 0);
                    for (std::size_t k = 0; k < K; ++k) r[m * K + k] = G(e, static_cast<Eigen::Index>(1 + k));
                }
            }
            for (std::size_t m = 0; m < M; ++m) {
                cur.q(m, i) = q[m];
                for (std::size_t k = 0; k < K; ++k) cur.r(m, i, k) = r[m * K + k];
            }
            if (with_field) {
                for (std::size_t m = 0; m < M; ++m) {
                    auto e = static_cast<Eigen::Index>(m);
                    field.set_dp(i, i, m, q[m]);
                    for (std::size_t k = 0; k < K; ++k) field.set_djp(i, i, k, m, r[m * K + k]);
                    for (std::size_t j = i + 1; j <= N; ++j) {
                        field.set_dp(i, j, m, F(e, static_cast<Eigen::Index>(j - i)));
                        for (std::size_t k = 0; k < K; ++k)
                            field.set_djp(i, j, k, m, F(e, static_cast<Eigen::Index>(1 + n + (j - i - 1) * K + k)));
                    }
                }
            }

            // Driver dH/dx with p_i from the previous pass (the projection on the first).
            std::vector<double> y(M);
            parallel_for(M, [&](std::size_t lo, std::size_t hi) {
                SliceBuffer buf;
                for (std::size_t m = lo; m < hi; ++m) {
                    gather_slice(cur, field, with_field, i, m, buf);
                    buf.p[0] = prev_p.empty() ? F(static_cast<Eigen::Index>(m), 0) : prev_p[m * (N + 1) + i];
                    AdjointSlice s = buf.view(i, cur.q(m, i));
                    y[m] = cur.p(m, i + 1) + H.dx(s, states.at(m, i), states.control(m, i)) * dt;
                }
            });
            cur.surrogates[i] = reg.fit(y);
            auto fitted = reg.predict(cur.surrogates[i].coefficients());
            for (std::size_t m = 0; m < M; ++m) cur.p(m, i) = fitted[m];
        }

        std::vector<double> diff(N + 1), level(N + 1);
        for (std::size_t i = 0; i <= N; ++i) {
            double sd = 0.0, sl = 0.0;
            for (std::size_t m = 0; m < M; ++m) {
                double a = cur.p(m, i), b = prev_p.empty() ? 0.0 : prev_p[m * (N + 1) + i];
                sd += (a - b) * (a - b);
                sl += a * a;
            }
            diff[i] = std::sqrt(sd / static_cast<double>(M));
            level[i] = std::sqrt(sl / static_cast<double>(M));
        }
        double top = sup_rms(level);
        double change = top > 0.0 ? sup_rms(diff) / top : 0.0;
        changes.push_back(change);
        prev_p = cur.p_values;
        cur.passes = pass;
        cur.changes = changes;
        if (pass >= 2 && change < options.tol) return sol;
        if (pass == 1 && top == 0.0) return sol; // all-zero data
    }
    std::string msg = "Picard iteration did not converge after " + std::to_string(options.max_iter) +
                      " passes; changes:";
    for (double c : changes) msg += " " + fmt_number(c);
    throw ConvergenceError(msg, changes);
}

MalliavinField malliavin_field_from_surrogate(const AdjointTriple& triple, const CoefficientModel& model,
                                              const PerformanceSpec& spec, const StateEnsemble& states,
                                              const PathBundle& paths, const RegressionBasis& basis) {
    check_shapes(states, paths);
    const JumpModel& jm = paths.jump_model();
    std::size_t N = paths.steps(), M = paths.path_count(), K = jm.active() ? jm.mark_count() : 0;
    if (triple.steps != N || triple.paths != M) throw ContractViolation("triple does not match the paths");
    for (std::size_t j = 1; j < N; ++j)
        if (triple.surrogates.size() <= j || triple.surrogates[j].empty())
            throw ContractViolation("surrogate for node " + std::to_string(j) + " is missing");
    FeatureTables ft(paths, states);
    StateSensitivity sens(model, paths, states);
    MalliavinField field(N, M, K);
    for (std::size_t i = 0; i < N; ++i) {
        NodeRegression reg(ft.matrix(i), basis);
        std::size_t n = N - i, cols = n + n * K;
        Eigen::MatrixXd Y(static_cast<Eigen::Index>(M), static_cast<Eigen::Index>(cols));
        parallel_for(M, [&](std::size_t lo, std::size_t hi) {
            std::vector<double> db(n), dj(n * K);
            for (std::size_t m = lo; m < hi; ++m) {
                derivative_row(ft, triple.surrogates, spec, sens, jm, m, i, N, db, dj);
                auto e = static_cast<Eigen::Index>(m);
                for (std::size_t c = 0; c < n; ++c) Y(e, static_cast<Eigen::Index>(c)) = db[c];
                for (std::size_t c = 0; c < n * K; ++c) Y(e, static_cast<Eigen::Index>(n + c)) = dj[c];
            }
        });
        Eigen::MatrixXd F = reg.fitted(Y);
        for (std::size_t m = 0; m < M; ++m) {
            auto e = static_cast<Eigen::Index>(m);
            field.set_dp(i, i, m, triple.q(m, i));
            for (std::size_t k = 0; k < K; ++k) field.set_djp(i, i, k, m, triple.r(m, i, k));
            for (std::size_t j = i + 1; j <= N; ++j) {
                field.set_dp(i, j, m, F(e, static_cast<Eigen::Index>(j - i - 1)));
                for (std::size_t k = 0; k < K; ++k)
                    field.set_djp(i, j, k, m, F(e, static_cast<Eigen::Index>(n + (j - i - 1) * K + k)));
            }
        }
    }
    return field;
}

CsvTable adjoint_table(const AdjointTriple& triple, const TimeGrid& grid) {
    std::vector<std::string> header{"t", "mean_p", "mean_q"};
    for (std::size_t k = 0; k < triple.marks; ++k) header.push_back("mean_r_" + std::to_string(k));
    header.push_back("picard_iters");
    CsvTable t(header);
    std::size_t N = triple.steps;
    for (std::size_t i = 0; i <= N; ++i) {
        std::vector<std::string> row{fmt_number(grid.node(i)), fmt_number(mean(triple.p_column(i)))};
        row.push_back(i < N ? fmt_number(mean(triple.q_column(i))) : "");
        for (std::size_t k = 0; k < triple.marks; ++k)
            row.push_back(i < N ? fmt_number(mean(triple.r_column(i, k))) : "");
        row.push_back(std::to_string(triple.passes));
        t.row(row);
    }
    return t;
}

} // namespace vmp
