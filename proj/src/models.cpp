#include "vmp/models.hpp"

#include "vmp/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

namespace vmp {

namespace {

double fd_step(double arg) { return 1e-5 * (1.0 + std::abs(arg)); }

enum class Arg { t, x, v };

double& slot(KernelArgs& a, Arg which) {
    switch (which) {
    case Arg::t: return a.t;
    case Arg::x: return a.x;
    default: return a.v;
    }
}

KernelFn central_difference(KernelFn f, Arg which) {
    return [f = std::move(f), which](const KernelArgs& a) {
        KernelArgs lo = a, hi = a;
        double h = fd_step(slot(lo, which));
        slot(lo, which) -= h;
        slot(hi, which) += h;
        return (f(hi) - f(lo)) / (2.0 * h);
    };
}

KernelFn zero_fn() {
    return [](const KernelArgs&) { return 0.0; };
}

// amp * exp(-lambda (t - s)) * v * [x] * [z]
KernelFamily linear_kernel(double amp, double lambda, bool uses_x, bool uses_z) {
    KernelFamily k;
    if (amp == 0.0) return KernelFamily::zeros();
    auto scale = [amp, lambda](const KernelArgs& a) { return amp * std::exp(-lambda * (a.t - a.s)); };
    auto xf = [uses_x](const KernelArgs& a) { return uses_x ? a.x : 1.0; };
    auto zf = [uses_z](const KernelArgs& a) { return uses_z ? a.z : 1.0; };
    k.value = [=](const KernelArgs& a) { return scale(a) * a.v * xf(a) * zf(a); };
    k.d_t = [=](const KernelArgs& a) { return -lambda * scale(a) * a.v * xf(a) * zf(a); };
    k.d_v = [=](const KernelArgs& a) { return scale(a) * xf(a) * zf(a); };
    k.d_tv = [=](const KernelArgs& a) { return -lambda * scale(a) * xf(a) * zf(a); };
    if (uses_x) {
        k.d_x = [=](const KernelArgs& a) { return scale(a) * a.v * zf(a); };
        k.d_tx = [=](const KernelArgs& a) { return -lambda * scale(a) * a.v * zf(a); };
    } else {
        k.d_x = zero_fn();
        k.d_tx = zero_fn();
    }
    k.t_invariant = lambda == 0.0;
    return k;
}

void fill_partials(KernelFamily& k, const std::string& label) {
    if (k.zero) {
        k = KernelFamily::zeros();
        return;
    }
    if (!k.value) throw ConfigError(label + " kernel has no value function");
    if (!k.d_t) k.d_t = k.t_invariant ? zero_fn() : central_difference(k.value, Arg::t);
    if (!k.d_x) k.d_x = central_difference(k.value, Arg::x);
    if (!k.d_v) k.d_v = central_difference(k.value, Arg::v);
    if (!k.d_tx) k.d_tx = k.t_invariant ? zero_fn() : central_difference(k.d_t, Arg::x);
    if (!k.d_tv) k.d_tv = k.t_invariant ? zero_fn() : central_difference(k.d_t, Arg::v);
}

bool close_enough(double analytic, double numeric) {
    return std::abs(analytic - numeric) <= 1e-4 * std::max(std::abs(analytic), std::abs(numeric)) + 1e-8;
}

void check_family(const KernelFamily& k, const std::string& label, bool x_independent, std::mt19937_64& rng) {
    if (k.zero) return;
    if (!k.complete()) throw ConfigError(label + " kernel is missing a partial derivative");
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    struct Check {
        const char* name;
        const KernelFn* analytic;
        const KernelFn* base;
        Arg arg;
    };
    const Check checks[] = {
        {"d/dt", &k.d_t, &k.value, Arg::t},    {"d/dx", &k.d_x, &k.value, Arg::x},
        {"d/dv", &k.d_v, &k.value, Arg::v},    {"d2/dtdx", &k.d_tx, &k.d_t, Arg::x},
        {"d2/dtdv", &k.d_tv, &k.d_t, Arg::v},
    };
    for (int n = 0; n < 24; ++n) {
        KernelArgs a;
        a.t = 1.5 * unit(rng);
        a.s = a.t * unit(rng);
        a.x = 0.3 + 1.7 * unit(rng);
        a.v = -1.5 + 3.0 * unit(rng);
        a.z = unit(rng) < 0.5 ? -(0.2 + unit(rng)) : 0.2 + unit(rng);
        for (const auto& c : checks) {
            double analytic = (*c.analytic)(a);
            double numeric = central_difference(*c.base, c.arg)(a);
            if (!std::isfinite(analytic) || !close_enough(analytic, numeric)) {
                std::ostringstream os;
                os << label << " kernel partial " << c.name << " fails the finite-difference self-test at (t="
                   << a.t << ", s=" << a.s << ", x=" << a.x << ", v=" << a.v << ", z=" << a.z
                   << "): declared " << analytic << ", numeric " << numeric;
                throw ConfigError(os.str());
            }
        }
        if (k.t_invariant && std::abs(k.d_t(a)) > 0.0)
            throw ConfigError(label + " kernel is flagged t-invariant but d/dt is nonzero");
        double scale = 1e-10 * (1.0 + std::abs(k.value(a)));
        if (x_independent && (std::abs(k.d_x(a)) > scale || std::abs(k.d_tx(a)) > scale))
            throw ConfigError(label + " kernel depends on x in an x-independent model");
    }
}

CoefficientModel build_linear(const std::string& name, const ParamMap& p, bool with_memory, bool uses_x) {
    double xi0 = p.get("xi0", 1.0), xi1 = p.get("xi1", 0.0);
    double lb = with_memory ? p.get("lambda_b", uses_x ? 1.0 : 0.0) : 0.0;
    double ls = with_memory ? p.get("lambda_sigma", uses_x ? 1.0 : 0.0) : 0.0;
    double lg = with_memory ? p.get("lambda_gamma", uses_x ? 1.0 : 0.0) : 0.0;
    CoefficientModel m;
    m.name = name;
    m.xi = [xi0, xi1](double t) { return xi0 + xi1 * t; };
    m.xi_prime = [xi1](double) { return xi1; };
    m.drift = linear_kernel(p.get("b0", 0.05), lb, uses_x, false);
    m.diffusion = linear_kernel(p.get("sigma0", 0.2), ls, uses_x, false);
    m.jump = linear_kernel(p.get("gamma0", 0.0), lg, uses_x, true);
    m.x_independent = !uses_x;
    return m;
}

} // namespace

KernelFamily KernelFamily::zeros() {
    KernelFamily k;
    k.value = k.d_t = k.d_x = k.d_v = k.d_tx = k.d_tv = zero_fn();
    k.zero = true;
    k.t_invariant = true;
    return k;
}

double ParamMap::get(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

double ParamMap::require(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("missing parameter '" + key + "'");
    return it->second;
}

std::vector<std::string> registry_names() { return {"constant", "exp_kernel_linear", "x_independent_linear", "custom"}; }

CoefficientModel registry_get(const std::string& name, const ParamMap& params) {
    CoefficientModel m;
    if (name == "constant")
        m = build_linear(name, params, false, true);
    else if (name == "exp_kernel_linear")
        m = build_linear(name, params, true, true);
    else if (name == "x_independent_linear")
        m = build_linear(name, params, true, false);
    else if (name == "custom")
        throw ConfigError("model 'custom' has no config form; build it in code with make_custom_model");
    else
        throw ConfigError("unknown model '" + name + "'");
    validate_partials(m);
    return m;
}

CoefficientModel make_custom_model(CustomModelParts parts) {
    if (!parts.xi) throw ConfigError("custom model needs xi(t)");
    CoefficientModel m;
    m.name = parts.name;
    m.xi = parts.xi;
    if (parts.xi_prime) {
        m.xi_prime = parts.xi_prime;
    } else {
        auto xi = parts.xi;
        m.xi_prime = [xi](double t) {
            double h = fd_step(t);
            return (xi(t + h) - xi(t - h)) / (2.0 * h);
        };
    }
    m.drift = std::move(parts.drift);
    m.diffusion = std::move(parts.diffusion);
    m.jump = std::move(parts.jump);
    if (!m.drift.value && !m.drift.zero) m.drift.zero = true;
    if (!m.diffusion.value && !m.diffusion.zero) m.diffusion.zero = true;
    if (!m.jump.value && !m.jump.zero) m.jump.zero = true;
    fill_partials(m.drift, "drift");
    fill_partials(m.diffusion, "diffusion");
    fill_partials(m.jump, "jump");
    m.x_independent = parts.x_independent;
    validate_partials(m);
    return m;
}

void validate_partials(const CoefficientModel& model, std::uint64_t seed) {
    if (!model.xi || !model.xi_prime) throw ConfigError(model.name + ": xi and xi' are required");
    std::mt19937_64 rng(seed);
    check_family(model.drift, model.name + ": drift", model.x_independent, rng);
    check_family(model.diffusion, model.name + ": diffusion", model.x_independent, rng);
    check_family(model.jump, model.name + ": jump", model.x_independent, rng);
    for (double t : {0.0, 0.3, 0.7, 1.0}) {
        double h = fd_step(t);
        double numeric = (model.xi(t + h) - model.xi(t - h)) / (2.0 * h);
        if (!close_enough(model.xi_prime(t), numeric))
            throw ConfigError(model.name + ": xi' fails the finite-difference self-test");
    }
}

std::vector<std::string> performance_names() {
    return {"zero", "linear", "quadratic", "exp_utility", "log_utility", "power_utility"};
}

PerformanceSpec performance_get(const std::string& name, const ParamMap& p) {
    PerformanceSpec s;
    s.name = name;
    double a = p.get("a", 1.0);
    if (name == "zero") {
        s.terminal = [](double) { return 0.0; };
        s.terminal_prime = [](double) { return 0.0; };
        s.terminal_second = [](double) { return 0.0; };
    } else if (name == "linear") {
        s.terminal = [a](double x) { return a * x; };
        s.terminal_prime = [a](double) { return a; };
        s.terminal_second = [](double) { return 0.0; };
    } else if (name == "quadratic") {
        s.terminal = [a](double x) { return a * x * x; };
        s.terminal_prime = [a](double x) { return 2.0 * a * x; };
        s.terminal_second = [a](double) { return 2.0 * a; };
    } else if (name == "exp_utility") {
        if (!(a > 0.0)) throw ConfigError("exp_utility needs a > 0");
        s.terminal = [a](double x) { return -std::exp(-a * x); };
        s.terminal_prime = [a](double x) { return a * std::exp(-a * x); };
        s.terminal_second = [a](double x) { return -a * a * std::exp(-a * x); };
    } else if (name == "log_utility") {
        return performance_from_utility(UtilitySpec::log_utility());
    } else if (name == "power_utility") {
        return performance_from_utility(UtilitySpec::power(p.get("gamma", 0.5)));
    } else {
        throw ConfigError("unknown performance functional '" + name + "'");
    }
    double c = p.get("running_const", 0.0), kappa = p.get("running_kappa", 0.0);
    if (c == 0.0 && kappa == 0.0) {
        s.running = [](double, double, double) { return 0.0; };
        s.running_dx = s.running;
        s.running_dv = s.running;
        s.running_zero = true;
    } else {
        s.running = [c, kappa](double, double, double v) { return c - 0.5 * kappa * v * v; };
        s.running_dx = [](double, double, double) { return 0.0; };
        s.running_dv = [kappa](double, double, double v) { return -kappa * v; };
    }
    validate_performance(s);
    return s;
}

PerformanceSpec complete_performance(PerformanceSpec s) {
    if (!s.terminal) throw ConfigError("performance functional needs g");
    if (!s.running) {
        s.running = [](double, double, double) { return 0.0; };
        s.running_zero = true;
    }
    if (!s.running_dx) {
        auto f = s.running;
        s.running_dx = [f](double t, double x, double v) {
            double h = fd_step(x);
            return (f(t, x + h, v) - f(t, x - h, v)) / (2.0 * h);
        };
    }
    if (!s.running_dv) {
        auto f = s.running;
        s.running_dv = [f](double t, double x, double v) {
            double h = fd_step(v);
            return (f(t, x, v + h) - f(t, x, v - h)) / (2.0 * h);
        };
    }
    if (!s.terminal_prime) {
        auto g = s.terminal;
        s.terminal_prime = [g](double x) {
            double h = fd_step(x);
            return (g(x + h) - g(x - h)) / (2.0 * h);
        };
    }
    if (!s.terminal_second) {
        auto gp = s.terminal_prime;
        s.terminal_second = [gp](double x) {
            double h = fd_step(x);
            return (gp(x + h) - gp(x - h)) / (2.0 * h);
        };
    }
    validate_performance(s);
    return s;
}

void validate_performance(const PerformanceSpec& s) {
    if (!s.terminal || !s.terminal_prime || !s.terminal_second || !s.running || !s.running_dx || !s.running_dv)
        throw ConfigError("performance functional '" + s.name + "' is incomplete");
    for (int n = 0; n <= 16; ++n) {
        double x = s.test_lo + (s.test_hi - s.test_lo) * n / 16.0;
        double h = fd_step(x);
        double numeric = (s.terminal(x + h) - s.terminal(x - h)) / (2.0 * h);
        if (!close_enough(s.terminal_prime(x), numeric))
            throw ConfigError("performance functional '" + s.name + "': g' disagrees with the derivative of g at x=" +
                              std::to_string(x));
    }
}

UtilitySpec UtilitySpec::power(double gamma) {
    UtilitySpec u;
    u.kind = Kind::power;
    u.gamma = gamma;
    u.validate();
    return u;
}

double UtilitySpec::u(double x) const {
    return kind == Kind::log ? std::log(x) : std::pow(x, gamma) / gamma;
}

double UtilitySpec::du(double x) const {
    return kind == Kind::log ? 1.0 / x : std::pow(x, gamma - 1.0);
}

double UtilitySpec::d2u(double x) const {
    return kind == Kind::log ? -1.0 / (x * x) : (gamma - 1.0) * std::pow(x, gamma - 2.0);
}

double UtilitySpec::inverse_du(double y) const {
    if (!(y > 0.0) || !std::isfinite(y))
        throw ContractViolation("inverse marginal utility needs a positive finite argument, got " + std::to_string(y));
    return kind == Kind::log ? 1.0 / y : std::pow(y, 1.0 / (gamma - 1.0));
}

std::string UtilitySpec::name() const { return kind == Kind::log ? "log" : "power"; }

void UtilitySpec::validate() const {
    if (kind == Kind::power && (!(gamma < 1.0) || gamma == 0.0))
        throw ConfigError("power utility needs gamma < 1 and gamma != 0, got " + std::to_string(gamma));
    double prev = std::numeric_limits<double>::infinity();
    for (int n = 0; n <= 40; ++n) {
        double x = std::pow(10.0, -3.0 + 6.0 * n / 40.0);
        double d = du(x);
        if (!(d > 0.0) || d > prev) throw ConfigError("utility '" + name() + "' is not increasing and concave");
        prev = d;
        if (std::abs(inverse_du(d) - x) > 1e-10 * x)
            throw ConfigError("utility '" + name() + "': inverse marginal utility fails the round trip");
    }
}

PerformanceSpec performance_from_utility(const UtilitySpec& utility) {
    utility.validate();
    PerformanceSpec s;
    s.name = utility.name() + "_utility";
    s.running = [](double, double, double) { return 0.0; };
    s.running_dx = s.running;
    s.running_dv = s.running;
    s.running_zero = true;
    s.terminal = [utility](double x) { return utility.u(x); };
    s.terminal_prime = [utility](double x) { return utility.du(x); };
    s.terminal_second = [utility](double x) { return utility.d2u(x); };
    s.test_lo = 0.2;
    s.test_hi = 3.0;
    validate_performance(s);
    return s;
}

ControlProcess ControlProcess::constant(double value, Interval admissible) {
    if (!admissible.contains(value))
        throw ContractViolation("constant control " + std::to_string(value) + " is outside the admissible set");
    ControlProcess c;
    c.kind_ = Kind::constant;
    c.constant_ = value;
    c.admissible_ = admissible;
    return c;
}

ControlProcess ControlProcess::open_loop(std::size_t paths, std::size_t steps, std::vector<double> values,
                                         Interval admissible) {
    if (paths == 0 || values.size() != paths * steps)
        throw ContractViolation("open-loop control grid has the wrong size");
    for (std::size_t n = 0; n < values.size(); ++n)
        if (!admissible.contains(values[n]))
            throw ContractViolation("open-loop control value " + std::to_string(values[n]) + " at path " +
                                    std::to_string(n / steps) + ", node " + std::to_string(n % steps) +
                                    " is outside the admissible set");
    ControlProcess c;
    c.kind_ = Kind::open_loop;
    c.paths_ = paths;
    c.steps_ = steps;
    c.grid_ = std::make_shared<const std::vector<double>>(std::move(values));
    c.admissible_ = admissible;
    return c;
}

ControlProcess ControlProcess::feedback(std::function<double(const ControlContext&)> rule, Interval admissible) {
    if (!rule) throw ContractViolation("feedback control needs a rule");
    ControlProcess c;
    c.kind_ = Kind::feedback;
    c.rule_ = std::move(rule);
    c.admissible_ = admissible;
    return c;
}

double ControlProcess::raw(const ControlContext& ctx) const {
    switch (kind_) {
    case Kind::constant: return constant_;
    case Kind::open_loop:
        if (ctx.node >= steps_ || (paths_ > 1 && ctx.path >= paths_))
            throw ContractViolation("open-loop control queried outside its grid");
        return (*grid_)[(paths_ == 1 ? 0 : ctx.path) * steps_ + ctx.node];
    default: return rule_(ctx);
    }
}

double ControlProcess::value(const ControlContext& ctx) const {
    double v = raw(ctx);
    for (const auto& [beta, lambda] : shifts_) v += lambda * beta->at(ctx.path, ctx.node);
    if (!admissible_.contains(v) || !std::isfinite(v))
        throw ContractViolation("control value " + std::to_string(v) + " at path " + std::to_string(ctx.path) +
                                ", node " + std::to_string(ctx.node) + " is outside the admissible set");
    return v;
}

ControlProcess ControlProcess::perturbed(const Perturbation& beta, double lambda) const {
    ControlProcess c = *this;
    c.shifts_.emplace_back(std::make_shared<const Perturbation>(beta), lambda);
    return c;
}

ControlProcess ControlProcess::with_admissible(Interval admissible) const {
    ControlProcess c = *this;
    c.admissible_ = admissible;
    return c;
}

InfoMode InfoMode::delayed(double delta) {
    if (!(delta >= 0.0)) throw ConfigError("information delay must be >= 0");
    InfoMode m;
    m.kind = Kind::delayed;
    m.delay = delta;
    return m;
}

std::size_t InfoMode::lag_steps(const TimeGrid& grid) const {
    if (kind == Kind::full) return 0;
    // Small slack so that delay = k*dt is not floored to k-1 by rounding.
    return static_cast<std::size_t>(std::floor(delay / grid.dt() + 1e-9));
}

std::size_t InfoMode::feature_node(std::size_t i, const TimeGrid& grid) const {
    std::size_t lag = lag_steps(grid);
    return i > lag ? i - lag : 0;
}

void InfoMode::validate(const TimeGrid& grid) const {
    if (kind == Kind::delayed && !(delay >= 0.0 && delay <= grid.horizon()))
        throw ConfigError("information delay must lie in [0, T]");
}

} // namespace vmp
