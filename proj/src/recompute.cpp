#include "vmp/recompute.hpp"

#include "vmp/error.hpp"

#include <cmath>
#include <vector>

namespace vmp {

StateSensitivity::StateSensitivity(const CoefficientModel& model, const PathBundle& paths,
                                   const StateEnsemble& states)
    : model_(model), paths_(paths), states_(states),
      runner_(model, paths.grid(), paths.jump_model(), states.scheme()),
      closed_form_(model.x_independent && states.scheme() == Scheme::integral) {
    if (paths.path_count() != states.path_count() || paths.steps() != states.steps())
        throw ContractViolation("states and paths have different shapes");
}

void StateSensitivity::rerun(std::size_t m, std::size_t i, std::size_t last, double dB_shift, int jump_mark,
                             std::span<double> out) const {
    std::size_t N = paths_.steps(), K = paths_.jump_model().mark_count();
    thread_local std::vector<double> X, u, dB, dN;
    X.assign(states_.path(m).begin(), states_.path(m).end());
    u.assign(states_.controls(m).begin(), states_.controls(m).end());
    auto inc = paths_.increments(m);
    dB.assign(inc.begin(), inc.end());
    dN.assign(N * K, 0.0);
    if (K) paths_.compensated_increments(m, dN);
    dB[i] += dB_shift;
    if (jump_mark >= 0) dN[i * K + static_cast<std::size_t>(jump_mark)] += 1.0;
    runner_.run(X, u, PathNoise{dB, dN}, i, last, nullptr, m);
    for (std::size_t j = i + 1; j <= last; ++j) out[j - i - 1] = X[j];
}

void StateSensitivity::brownian(std::size_t m, std::size_t i, std::size_t last, std::span<double> out) const {
    if (last <= i) return;
    if (closed_form_) {
        double s = paths_.grid().node(i);
        KernelArgs a{0.0, s, states_.at(m, i), states_.control(m, i), 0.0};
        for (std::size_t j = i + 1; j <= last; ++j) {
            a.t = paths_.grid().node(j);
            out[j - i - 1] = model_.diffusion.zero ? 0.0 : model_.diffusion.value(a);
        }
        return;
    }
    double h = 1e-4 * std::sqrt(paths_.grid().dt());
    std::size_t n = last - i;
    thread_local std::vector<double> up, down;
    up.resize(n);
    down.resize(n);
    rerun(m, i, last, h, -1, up);
    rerun(m, i, last, -h, -1, down);
    for (std::size_t r = 0; r < n; ++r) out[r] = (up[r] - down[r]) / (2.0 * h);
}

void StateSensitivity::jump(std::size_t m, std::size_t i, std::size_t k, std::size_t last,
                            std::span<double> out) const {
    if (last <= i) return;
    if (closed_form_) {
        double s = paths_.grid().node(i);
        KernelArgs a{0.0, s, states_.at(m, i), states_.control(m, i), paths_.jump_model().marks[k]};
        for (std::size_t j = i + 1; j <= last; ++j) {
            a.t = paths_.grid().node(j);
            out[j - i - 1] = model_.jump.zero ? 0.0 : model_.jump.value(a);
        }
        return;
    }
    std::size_t n = last - i;
    thread_local std::vector<double> bumped;
    bumped.resize(n);
    rerun(m, i, last, 0.0, static_cast<int>(k), bumped);
    for (std::size_t r = 0; r < n; ++r) out[r] = bumped[r] - states_.at(m, i + 1 + r);
}

} // namespace vmp
