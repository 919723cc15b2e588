#pragma once

#include "vmp/grid_noise.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace vmp {

// Arguments of a Volterra kernel k(t, s, x, v, z). Brownian and drift kernels ignore z.
struct KernelArgs {
    double t = 0.0;
    double s = 0.0;
    double x = 0.0;
    double v = 0.0;
    double z = 0.0;
};

using KernelFn = std::function<double(const KernelArgs&)>;

// A kernel together with the partials the solvers need. d_t is the derivative
// in the first (time) argument.
struct KernelFamily {
    KernelFn value, d_t, d_x, d_v, d_tx, d_tv;
    bool zero = false;        // identically zero; evaluation may be skipped
    bool t_invariant = false; // d_t identically zero

    static KernelFamily zeros();
    bool complete() const { return value && d_t && d_x && d_v && d_tx && d_tv; }
};

struct CoefficientModel {
    std::string name;
    std::function<double(double)> xi, xi_prime;
    KernelFamily drift, diffusion, jump;
    bool x_independent = false;

    double b(double t, double s, double x, double v) const { return drift.value({t, s, x, v, 0.0}); }
    double sigma(double t, double s, double x, double v) const { return diffusion.value({t, s, x, v, 0.0}); }
    double gamma(double t, double s, double x, double v, double z) const { return jump.value({t, s, x, v, z}); }

    // True when no kernel depends on its first argument, so the integral
    // form collapses to a running sum.
    bool memoryless() const { return drift.t_invariant && diffusion.t_invariant && jump.t_invariant; }
};

class ParamMap {
public:
    ParamMap() = default;
    ParamMap(std::initializer_list<std::pair<const std::string, double>> init) : values_(init) {}

    double get(const std::string& key, double fallback) const;
    double require(const std::string& key) const;
    void set(const std::string& key, double v) { values_[key] = v; }
    bool has(const std::string& key) const { return values_.count(key) != 0; }
    const std::map<std::string, double>& values() const { return values_; }

private:
    std::map<std::string, double> values_;
};

// Names accepted by registry_get.
std::vector<std::string> registry_names();

// constant:             b = b0 v x,  sigma = sigma0 v x,  gamma = gamma0 v x z
// exp_kernel_linear:    the same with factors exp(-lambda_* (t - s))
// x_independent_linear: b = b0 e^{-lambda_b (t-s)} v, sigma = sigma0 e^{..} v, gamma = gamma0 e^{..} v z
// All use xi(t) = xi0 + xi1 t. "custom" needs code (make_custom_model).
CoefficientModel registry_get(const std::string& name, const ParamMap& params);

// User-supplied kernels; any missing partial is filled by central
// differences with step 1e-5 (1 + |arg|). Runs the partial self-test.
struct CustomModelParts {
    std::string name = "custom";
    std::function<double(double)> xi, xi_prime;
    KernelFamily drift, diffusion, jump;
    bool x_independent = false;
};
CoefficientModel make_custom_model(CustomModelParts parts);

// Compares every declared partial against central differences at random
// arguments; throws ConfigError naming the first failing partial.
void validate_partials(const CoefficientModel& model, std::uint64_t seed = 7);

// f(t, x, v) and g(x) with derivatives.
struct PerformanceSpec {
    std::string name;
    std::function<double(double, double, double)> running, running_dx, running_dv;
    std::function<double(double)> terminal, terminal_prime, terminal_second;
    bool running_zero = false;
    // Sample points for the g' self-test; log-type g needs x > 0.
    double test_lo = -2.0, test_hi = 2.0;
};

// Terminal parts: zero, linear (g = a x), quadratic (g = a x^2),
// exp_utility (g = -exp(-a x)), log_utility, power_utility (gamma).
// Every entry also accepts running_const and running_kappa, giving
// f(t, x, v) = running_const - running_kappa v^2 / 2.
std::vector<std::string> performance_names();
PerformanceSpec performance_get(const std::string& name, const ParamMap& params);
// Fills missing derivatives by finite differences and checks g' against g.
PerformanceSpec complete_performance(PerformanceSpec spec);
void validate_performance(const PerformanceSpec& spec);

struct UtilitySpec {
    enum class Kind { log, power };
    Kind kind = Kind::log;
    double gamma = 0.5; // power exponent

    static UtilitySpec log_utility() { return {}; }
    static UtilitySpec power(double gamma);

    double u(double x) const;
    double du(double x) const;
    double d2u(double x) const;
    double inverse_du(double y) const;
    std::string name() const;
    void validate() const;
};

PerformanceSpec performance_from_utility(const UtilitySpec& utility);

struct Interval {
    double lo = -1e300;
    double hi = 1e300;
    bool contains(double v) const { return v >= lo && v <= hi; }
    double width() const { return hi - lo; }
    bool bounded() const { return lo > -1e299 && hi < 1e299; }
};

struct ControlContext {
    std::size_t node = 0;
    std::size_t path = 0;
    double t = 0.0;
    double state = 0.0;
    double brownian = 0.0;
};

// Additive perturbation lambda * beta(node, path) on top of a base control.
struct Perturbation {
    std::size_t paths = 0, steps = 0;
    std::vector<double> values; // [path * steps + node]; paths == 1 broadcasts

    double at(std::size_t m, std::size_t i) const { return values[(paths == 1 ? 0 : m) * steps + i]; }
    static Perturbation zero(std::size_t steps) { return {1, steps, std::vector<double>(steps, 0.0)}; }
};

class ControlProcess {
public:
    enum class Kind { constant, open_loop, feedback };

    static ControlProcess constant(double value, Interval admissible);
    // values laid out [path * steps + node]; paths == 1 means deterministic.
    static ControlProcess open_loop(std::size_t paths, std::size_t steps, std::vector<double> values,
                                    Interval admissible);
    static ControlProcess feedback(std::function<double(const ControlContext&)> rule, Interval admissible);

    Kind kind() const { return kind_; }
    const Interval& admissible() const { return admissible_; }

    // Throws ContractViolation when the value leaves the admissible interval.
    double value(const ControlContext& ctx) const;

    ControlProcess perturbed(const Perturbation& beta, double lambda) const;
    ControlProcess with_admissible(Interval admissible) const;

private:
    Kind kind_ = Kind::constant;
    Interval admissible_;
    double constant_ = 0.0;
    std::size_t paths_ = 0, steps_ = 0;
    std::shared_ptr<const std::vector<double>> grid_;
    std::function<double(const ControlContext&)> rule_;
    std::vector<std::pair<std::shared_ptr<const Perturbation>, double>> shifts_;
    double raw(const ControlContext& ctx) const;
};

struct InfoMode {
    enum class Kind { full, delayed };
    Kind kind = Kind::full;
    double delay = 0.0;

    static InfoMode full() { return {}; }
    static InfoMode delayed(double delta);
    // Number of grid steps the feature node lags behind: floor(delay / dt).
    std::size_t lag_steps(const TimeGrid& grid) const;
    std::size_t feature_node(std::size_t i, const TimeGrid& grid) const;
    void validate(const TimeGrid& grid) const;
};

} // namespace vmp
