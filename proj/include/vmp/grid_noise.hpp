#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace vmp {

class TimeGrid {
public:
    TimeGrid(double horizon, long long steps);

    double horizon() const { return horizon_; }
    std::size_t steps() const { return steps_; }
    double dt() const { return dt_; }
    // t_i = i*T/N, with t_N == T exactly.
    double node(std::size_t i) const;
    std::vector<double> nodes() const;

private:
    double horizon_;
    std::size_t steps_;
    double dt_;
};

// Finite-activity compound Poisson noise: nu(dz) = intensity * sum_k w_k delta_{z_k}.
struct JumpModel {
    double intensity = 0.0;
    std::vector<double> marks;
    std::vector<double> weights;

    static JumpModel none() { return {}; }
    static JumpModel make(double intensity, std::vector<double> marks, std::vector<double> weights);

    bool active() const { return intensity > 0.0 && !marks.empty(); }
    std::size_t mark_count() const { return marks.size(); }
    // Expected number of mark-k jumps in one step.
    double compensator(std::size_t k, double dt) const { return intensity * weights[k] * dt; }
    void validate() const;
};

struct JumpRecord {
    std::uint32_t node;
    std::uint32_t mark;
};

// One realization. Cheap to copy and perturb; the jump model is shared.
class Path {
public:
    Path(TimeGrid grid, std::shared_ptr<const JumpModel> jumps, std::vector<double> increments,
         std::vector<JumpRecord> records);

    const TimeGrid& grid() const { return grid_; }
    const JumpModel& jump_model() const { return *jumps_; }
    std::span<const double> increments() const { return increments_; }
    double increment(std::size_t i) const { return increments_[i]; }
    std::span<const JumpRecord> jumps() const { return records_; }

    // B(t_i) = sum_{l<i} dB_l
    double brownian(std::size_t i) const;
    // Compensated mark sum eta(t_i) = sum of marks jumped before t_i minus intensity*E[z]*t_i.
    double eta(std::size_t i) const;
    // Compensated count increment dN_{i,k} - intensity*w_k*dt.
    double compensated_increment(std::size_t i, std::size_t k) const;
    std::size_t jump_count(std::size_t i, std::size_t k) const;

    void shift_increment(std::size_t i, double h) { increments_[i] += h; }
    // Inserts one jump of mark k at node i, keeping records sorted by node.
    void add_jump(std::size_t i, std::size_t k);

private:
    TimeGrid grid_;
    std::shared_ptr<const JumpModel> jumps_;
    std::vector<double> increments_;
    std::vector<JumpRecord> records_;
};

// Immutable ensemble of M paths. Increments are stored path-major; jump
// records per path are sorted by node.
class PathBundle {
public:
    PathBundle(TimeGrid grid, std::shared_ptr<const JumpModel> jumps, std::uint64_t seed, std::size_t paths,
               std::vector<double> increments, std::vector<std::size_t> jump_offsets,
               std::vector<JumpRecord> records);

    const TimeGrid& grid() const { return grid_; }
    const JumpModel& jump_model() const { return *jumps_; }
    std::shared_ptr<const JumpModel> jump_model_ptr() const { return jumps_; }
    std::size_t path_count() const { return paths_; }
    std::size_t steps() const { return grid_.steps(); }
    std::uint64_t seed() const { return seed_; }

    std::span<const double> increments(std::size_t m) const {
        return {increments_.data() + m * grid_.steps(), grid_.steps()};
    }
    double increment(std::size_t m, std::size_t i) const { return increments_[m * grid_.steps() + i]; }
    std::span<const JumpRecord> jumps(std::size_t m) const {
        return {records_.data() + jump_offsets_[m], jump_offsets_[m + 1] - jump_offsets_[m]};
    }
    std::size_t total_jumps(std::size_t m) const { return jump_offsets_[m + 1] - jump_offsets_[m]; }

    Path path(std::size_t m) const;

    // Column views across paths.
    std::vector<double> brownian_at(std::size_t i) const;
    std::vector<double> eta_at(std::size_t i) const;
    std::vector<double> increments_at(std::size_t i) const;

    // Dense compensated increments dN~_{i,k} for one path, laid out [i*K + k].
    void compensated_increments(std::size_t m, std::span<double> out) const;

    // Same paths on a grid with N/factor steps: increments are summed in
    // blocks and jumps move to node floor(i/factor). Used to compare schemes
    // across step sizes on coupled noise.
    PathBundle coarsened(std::size_t factor) const;

private:
    TimeGrid grid_;
    std::shared_ptr<const JumpModel> jumps_;
    std::uint64_t seed_;
    std::size_t paths_;
    std::vector<double> increments_;
    std::vector<std::size_t> jump_offsets_;
    std::vector<JumpRecord> records_;
};

// The stream of path m depends only on (seed, m).
PathBundle sample_paths(const TimeGrid& grid, const JumpModel& jumps, long long paths, std::uint64_t seed);

// sum over jumps of f(t, z) minus intensity*dt*sum_i sum_k w_k f(t_i, z_k)
double compensated_jump_integral(const Path& path, const std::function<double(double, double)>& f);

} // namespace vmp
