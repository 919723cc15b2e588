#pragma once

#include "vmp/grid_noise.hpp"
#include "vmp/models.hpp"
#include "vmp/volterra.hpp"

#include <cstddef>
#include <span>

namespace vmp {

// Sensitivities of simulated states to one noise input, obtained by re-running
// the path's own recursion from the perturbed node with the realized controls
// held fixed.
class StateSensitivity {
public:
    StateSensitivity(const CoefficientModel& model, const PathBundle& paths, const StateEnsemble& states);

    // out[j - i - 1] = D_i X_j for j = i+1..last, central difference in dB_i.
    void brownian(std::size_t m, std::size_t i, std::size_t last, std::span<double> out) const;
    // out[j - i - 1] = X_j(with an extra mark-k jump at node i) - X_j.
    void jump(std::size_t m, std::size_t i, std::size_t k, std::size_t last, std::span<double> out) const;

private:
    const CoefficientModel& model_;
    const PathBundle& paths_;
    const StateEnsemble& states_;
    SchemeRunner runner_;
    bool closed_form_; // x-independent integral form: D_i X_j is the kernel itself

    void rerun(std::size_t m, std::size_t i, std::size_t last, double dB_shift, int jump_mark,
               std::span<double> out) const;
};

} // namespace vmp
