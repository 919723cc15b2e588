#include "vmp/grid_noise.hpp"

#include "vmp/error.hpp"
#include "vmp/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

namespace vmp {

TimeGrid::TimeGrid(double horizon, long long steps) {
    if (!(horizon > 0.0) || !std::isfinite(horizon))
        throw ConfigError("time horizon must be positive and finite, got " + std::to_string(horizon));
    if (steps < 2) throw ConfigError("step count N must be >= 2, got " + std::to_string(steps));
    horizon_ = horizon;
    steps_ = static_cast<std::size_t>(steps);
    dt_ = horizon / static_cast<double>(steps);
}

double TimeGrid::node(std::size_t i) const {
    if (i >= steps_) return i == steps_ ? horizon_ : static_cast<double>(i) * dt_;
    return static_cast<double>(i) * horizon_ / static_cast<double>(steps_);
}

std::vector<double> TimeGrid::nodes() const {
    std::vector<double> t(steps_ + 1);
    for (std::size_t i = 0; i <= steps_; ++i) t[i] = node(i);
    return t;
}

JumpModel JumpModel::make(double intensity, std::vector<double> marks, std::vector<double> weights) {
    JumpModel jm{intensity, std::move(marks), std::move(weights)};
    jm.validate();
    return jm;
}

void JumpModel::validate() const {
    if (!(intensity >= 0.0) || !std::isfinite(intensity))
        throw ConfigError("jump intensity must be >= 0, got " + std::to_string(intensity));
    if (marks.size() != weights.size())
        throw ConfigError("jump marks and weights differ in length");
    if (intensity > 0.0 && marks.empty()) throw ConfigError("positive jump intensity needs at least one mark");
    double total = 0.0;
    for (std::size_t k = 0; k < marks.size(); ++k) {
        if (!(weights[k] > 0.0)) throw ConfigError("jump weight " + std::to_string(k) + " must be > 0");
        if (marks[k] == 0.0 || !std::isfinite(marks[k]))
            throw ConfigError("jump mark " + std::to_string(k) + " must be finite and nonzero");
        total += weights[k];
    }
    if (!marks.empty() && std::abs(total - 1.0) > 1e-12)
        throw ConfigError("jump weights must sum to 1, got " + std::to_string(total));
}

Path::Path(TimeGrid grid, std::shared_ptr<const JumpModel> jumps, std::vector<double> increments,
           std::vector<JumpRecord> records)
    : grid_(grid), jumps_(std::move(jumps)), increments_(std::move(increments)), records_(std::move(records)) {}

double Path::brownian(std::size_t i) const {
    double b = 0.0;
    for (std::size_t l = 0; l < i; ++l) b += increments_[l];
    return b;
}

double Path::eta(std::size_t i) const {
    const JumpModel& jm = *jumps_;
    double s = 0.0;
    for (const auto& r : records_) {
        if (r.node >= i) break;
        s += jm.marks[r.mark];
    }
    double drift = 0.0;
    for (std::size_t k = 0; k < jm.mark_count(); ++k) drift += jm.weights[k] * jm.marks[k];
    return s - jm.intensity * drift * grid_.node(i);
}

std::size_t Path::jump_count(std::size_t i, std::size_t k) const {
    std::size_t c = 0;
    for (const auto& r : records_)
        if (r.node == i && r.mark == k) ++c;
    return c;
}

double Path::compensated_increment(std::size_t i, std::size_t k) const {
    return static_cast<double>(jump_count(i, k)) - jumps_->compensator(k, grid_.dt());
}

void Path::add_jump(std::size_t i, std::size_t k) {
    if (i >= grid_.steps() || k >= jumps_->mark_count())
        throw ContractViolation("add_jump: node or mark index out of range");
    auto pos = std::upper_bound(records_.begin(), records_.end(), i,
                                [](std::size_t node, const JumpRecord& r) { return node < r.node; });
    records_.insert(pos, JumpRecord{static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(k)});
}

PathBundle::PathBundle(TimeGrid grid, std::shared_ptr<const JumpModel> jumps, std::uint64_t seed,
                       std::size_t paths, std::vector<double> increments, std::vector<std::size_t> jump_offsets,
                       std::vector<JumpRecord> records)
    : grid_(grid), jumps_(std::move(jumps)), seed_(seed), paths_(paths), increments_(std::move(increments)),
      jump_offsets_(std::move(jump_offsets)), records_(std::move(records)) {}

Path PathBundle::path(std::size_t m) const {
    auto inc = increments(m);
    auto js = jumps(m);
    return Path(grid_, jumps_, std::vector<double>(inc.begin(), inc.end()),
                std::vector<JumpRecord>(js.begin(), js.end()));
}

std::vector<double> PathBundle::brownian_at(std::size_t i) const {
    std::vector<double> out(paths_);
    for (std::size_t m = 0; m < paths_; ++m) {
        const double* d = increments_.data() + m * grid_.steps();
        double b = 0.0;
        for (std::size_t l = 0; l < i; ++l) b += d[l];
        out[m] = b;
    }
    return out;
}

std::vector<double> PathBundle::eta_at(std::size_t i) const {
    std::vector<double> out(paths_, 0.0);
    if (!jumps_->active()) return out;
    double drift = 0.0;
    for (std::size_t k = 0; k < jumps_->mark_count(); ++k) drift += jumps_->weights[k] * jumps_->marks[k];
    double comp = jumps_->intensity * drift * grid_.node(i);
    for (std::size_t m = 0; m < paths_; ++m) {
        double s = 0.0;
        for (const auto& r : jumps(m)) {
            if (r.node >= i) break;
            s += jumps_->marks[r.mark];
        }
        out[m] = s - comp;
    }
    return out;
}

std::vector<double> PathBundle::increments_at(std::size_t i) const {
    std::vector<double> out(paths_);
    for (std::size_t m = 0; m < paths_; ++m) out[m] = increment(m, i);
    return out;
}

void PathBundle::compensated_increments(std::size_t m, std::span<double> out) const {
    std::size_t K = jumps_->mark_count();
    double dt = grid_.dt();
    for (std::size_t i = 0; i < grid_.steps(); ++i)
        for (std::size_t k = 0; k < K; ++k) out[i * K + k] = -jumps_->compensator(k, dt);
    for (const auto& r : jumps(m)) out[r.node * K + r.mark] += 1.0;
}

PathBundle PathBundle::coarsened(std::size_t factor) const {
    std::size_t N = grid_.steps();
    if (factor == 0 || N % factor != 0 || N / factor < 2)
        throw ConfigError("coarsening factor must divide N and leave at least 2 steps");
    std::size_t Nc = N / factor;
    TimeGrid coarse(grid_.horizon(), static_cast<long long>(Nc));
    std::vector<double> inc(paths_ * Nc, 0.0);
    std::vector<JumpRecord> recs;
    recs.reserve(records_.size());
    std::vector<std::size_t> offs(paths_ + 1, 0);
    for (std::size_t m = 0; m < paths_; ++m) {
        const double* d = increments_.data() + m * N;
        for (std::size_t i = 0; i < Nc; ++i) {
            double s = 0.0;
            for (std::size_t l = 0; l < factor; ++l) s += d[i * factor + l];
            inc[m * Nc + i] = s;
        }
        for (const auto& r : jumps(m))
            recs.push_back(JumpRecord{static_cast<std::uint32_t>(r.node / factor), r.mark});
        offs[m + 1] = recs.size();
    }
    return PathBundle(coarse, jumps_, seed_, paths_, std::move(inc), std::move(offs), std::move(recs));
}

PathBundle sample_paths(const TimeGrid& grid, const JumpModel& jumps, long long paths, std::uint64_t seed) {
    if (paths < 1) throw ConfigError("path count M must be >= 1, got " + std::to_string(paths));
    jumps.validate();
    auto M = static_cast<std::size_t>(paths);
    std::size_t N = grid.steps();
    double sqdt = std::sqrt(grid.dt());
    bool active = jumps.active();
    double rate = jumps.intensity * grid.dt();

    std::vector<double> inc(M * N);
    std::vector<std::vector<JumpRecord>> per_path(M);
    parallel_for(M, [&](std::size_t begin, std::size_t end) {
        for (std::size_t m = begin; m < end; ++m) {
            std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                              static_cast<std::uint32_t>(m), static_cast<std::uint32_t>(std::uint64_t(m) >> 32)};
            std::mt19937_64 rng(seq);
            std::normal_distribution<double> gauss(0.0, 1.0);
            for (std::size_t i = 0; i < N; ++i) inc[m * N + i] = sqdt * gauss(rng);
            if (!active) continue;
            std::poisson_distribution<int> count(rate);
            std::discrete_distribution<std::uint32_t> mark(jumps.weights.begin(), jumps.weights.end());
            for (std::size_t i = 0; i < N; ++i) {
                int c = count(rng);
                for (int j = 0; j < c; ++j)
                    per_path[m].push_back(JumpRecord{static_cast<std::uint32_t>(i), mark(rng)});
            }
        }
    });

    std::vector<std::size_t> offs(M + 1, 0);
    for (std::size_t m = 0; m < M; ++m) offs[m + 1] = offs[m] + per_path[m].size();
    std::vector<JumpRecord> recs;
    recs.reserve(offs[M]);
    for (auto& v : per_path) recs.insert(recs.end(), v.begin(), v.end());
    return PathBundle(grid, std::make_shared<const JumpModel>(jumps), seed, M, std::move(inc), std::move(offs),
                      std::move(recs));
}

double compensated_jump_integral(const Path& path, const std::function<double(double, double)>& f) {
    const JumpModel& jm = path.jump_model();
    if (!jm.active()) return 0.0;
    const TimeGrid& g = path.grid();
    double s = 0.0;
    for (const auto& r : path.jumps()) s += f(g.node(r.node), jm.marks[r.mark]);
    double comp = 0.0;
    for (std::size_t i = 0; i < g.steps(); ++i)
        for (std::size_t k = 0; k < jm.mark_count(); ++k) comp += jm.weights[k] * f(g.node(i), jm.marks[k]);
    return s - jm.intensity * g.dt() * comp;
}

} // namespace vmp
