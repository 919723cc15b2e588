#include "vmp/config.hpp"

#include "vmp/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace vmp {

using json = nlohmann::json;

JumpModel ExperimentConfig::jumps() const {
    if (jump_intensity == 0.0 && jump_marks.empty()) return JumpModel::none();
    return JumpModel::make(jump_intensity, jump_marks, jump_weights);
}

CoefficientModel ExperimentConfig::coefficient_model() const { return registry_get(model, model_params); }

PerformanceSpec ExperimentConfig::performance_spec() const { return performance_get(performance, performance_params); }

UtilitySpec ExperimentConfig::utility_spec() const {
    if (utility == "log") return UtilitySpec::log_utility();
    if (utility == "power") return UtilitySpec::power(utility_gamma);
    throw ConfigError("utility.kind: expected \"log\" or \"power\", got \"" + utility + "\"");
}

ControlProcess ExperimentConfig::control() const {
    Interval U{control_lo, control_hi};
    if (control_kind == "constant") return ControlProcess::constant(control_value, U);
    if (control_kind == "linear_state") {
        double a = control_value, b = control_slope;
        return ControlProcess::feedback([a, b](const ControlContext& c) { return a + b * c.state; }, U);
    }
    throw ConfigError("control.kind: expected \"constant\" or \"linear_state\", got \"" + control_kind + "\"");
}

InfoMode ExperimentConfig::info_mode() const {
    if (info == "full") return InfoMode::full();
    if (info == "delayed") return InfoMode::delayed(info_delay);
    throw ConfigError("info.mode: expected \"full\" or \"delayed\", got \"" + info + "\"");
}

AdjointOptions ExperimentConfig::adjoint_options() const {
    AdjointOptions o;
    o.basis = basis();
    o.max_iter = picard_max_iter;
    o.tol = picard_tol;
    if (estimator == "surrogate")
        o.estimator = AdjointOptions::Estimator::surrogate;
    else if (estimator == "increment")
        o.estimator = AdjointOptions::Estimator::increment;
    else
        throw ConfigError("solver.estimator: expected \"surrogate\" or \"increment\", got \"" + estimator + "\"");
    return o;
}

Scheme ExperimentConfig::scheme_kind() const {
    if (scheme == "integral") return Scheme::integral;
    if (scheme == "differential") return Scheme::differential;
    if (scheme == "log_euler") return Scheme::log_euler;
    throw ConfigError("solver.scheme: expected integral, differential or log_euler, got \"" + scheme + "\"");
}

void ExperimentConfig::validate() const {
    if (!(T > 0.0)) throw ConfigError("grid.T: must be > 0");
    if (N < 2 || N > 4096) throw ConfigError("grid.N: must be in [2, 4096]");
    if (paths < 1) throw ConfigError("monte_carlo.paths: must be >= 1");
    if (degree < 0 || degree > 7) throw ConfigError("solver.degree: must be in [0, 7]");
    if (!(ridge >= 0.0)) throw ConfigError("solver.ridge: must be >= 0");
    if (picard_max_iter < 1) throw ConfigError("solver.picard_max_iter: must be >= 1");
    if (!(picard_tol > 0.0)) throw ConfigError("solver.picard_tol: must be > 0");
    if (c_lo < 0.0 || c_hi < 0.0 || (c_lo > 0.0 && c_hi > 0.0 && c_hi <= c_lo))
        throw ConfigError("solver.c_lo/c_hi: need 0 < c_lo < c_hi (or 0 for the default bracket)");
    if (!(control_hi >= control_lo)) throw ConfigError("control.lo/hi: lo must not exceed hi");
    if (gateaux_width < 1 || gateaux_start < 0) throw ConfigError("gateaux.start/width: must be >= 0 and >= 1");
    if (!(gateaux_lambda > 0.0)) throw ConfigError("gateaux.lambda: must be > 0");
    jumps().validate();
    grid();
    info_mode().validate(grid());
    utility_spec().validate();
    scheme_kind();
    adjoint_options();
    control();
    auto names = registry_names();
    if (std::find(names.begin(), names.end(), model) == names.end())
        throw ConfigError("model.name: unknown model \"" + model + "\"");
    auto perf = performance_names();
    if (std::find(perf.begin(), perf.end(), performance) == perf.end())
        throw ConfigError("performance.name: unknown performance functional \"" + performance + "\"");
    market.validate(grid());
}

namespace {

std::string describe_type(const json& j) {
    switch (j.type()) {
    case json::value_t::null: return "null";
    case json::value_t::boolean: return "boolean";
    case json::value_t::string: return "string";
    case json::value_t::array: return "array";
    case json::value_t::object: return "object";
    default: return "number";
    }
}

class Section {
public:
    Section(const json& root, const std::string& key) : path_(key) {
        auto it = root.find(key);
        if (it == root.end()) return;
        if (!it->is_object()) throw ConfigError(key + ": expected an object, got " + describe_type(*it));
        j_ = &*it;
    }

    void number(const std::string& key, double& out) {
        const json* v = find(key);
        if (!v) return;
        if (!v->is_number()) throw ConfigError(field(key) + ": expected a number, got " + describe_type(*v));
        out = v->get<double>();
    }
    void integer(const std::string& key, long long& out) {
        const json* v = find(key);
        if (!v) return;
        if (!v->is_number_integer()) throw ConfigError(field(key) + ": expected an integer, got " + describe_type(*v));
        out = v->get<long long>();
    }
    void integer(const std::string& key, int& out) {
        long long x = out;
        integer(key, x);
        if (x < -1000000 || x > 1000000) throw ConfigError(field(key) + ": out of range");
        out = static_cast<int>(x);
    }
    void unsigned_integer(const std::string& key, std::uint64_t& out) {
        const json* v = find(key);
        if (!v) return;
        if (!v->is_number_unsigned()) throw ConfigError(field(key) + ": expected a nonnegative integer");
        out = v->get<std::uint64_t>();
    }
    void string(const std::string& key, std::string& out) {
        const json* v = find(key);
        if (!v) return;
        if (!v->is_string()) throw ConfigError(field(key) + ": expected a string, got " + describe_type(*v));
        out = v->get<std::string>();
    }
    void numbers(const std::string& key, std::vector<double>& out) {
        const json* v = find(key);
        if (!v) return;
        if (!v->is_array()) throw ConfigError(field(key) + ": expected an array of numbers");
        out.clear();
        for (std::size_t k = 0; k < v->size(); ++k) {
            if (!(*v)[k].is_number())
                throw ConfigError(field(key) + "[" + std::to_string(k) + "]: expected a number");
            out.push_back((*v)[k].get<double>());
        }
    }
    void params(const std::string& key, ParamMap& out) {
        const json* v = find(key);
        if (!v) return;
        if (!v->is_object()) throw ConfigError(field(key) + ": expected an object of numbers");
        for (auto it = v->begin(); it != v->end(); ++it) {
            if (!it.value().is_number()) throw ConfigError(field(key) + "." + it.key() + ": expected a number");
            out.set(it.key(), it.value().get<double>());
        }
    }
    void finish() const {
        if (!j_) return;
        for (auto it = j_->begin(); it != j_->end(); ++it)
            if (!seen_.count(it.key())) throw ConfigError(field(it.key()) + ": unknown key");
    }

private:
    const json* j_ = nullptr;
    std::string path_;
    std::set<std::string> seen_;

    std::string field(const std::string& key) const { return path_ + "." + key; }
    const json* find(const std::string& key) {
        seen_.insert(key);
        if (!j_) return nullptr;
        auto it = j_->find(key);
        return it == j_->end() ? nullptr : &*it;
    }
};

json to_json(const ExperimentConfig& c) {
    json j;
    j["grid"] = {{"T", c.T}, {"N", c.N}};
    j["noise"] = {{"intensity", c.jump_intensity}, {"marks", c.jump_marks}, {"weights", c.jump_weights}};
    j["model"] = {{"name", c.model}, {"params", c.model_params.values()}};
    j["performance"] = {{"name", c.performance}, {"params", c.performance_params.values()}};
    j["utility"] = {{"kind", c.utility}, {"gamma", c.utility_gamma}};
    j["control"] = {{"kind", c.control_kind}, {"value", c.control_value}, {"slope", c.control_slope},
                    {"lo", c.control_lo},     {"hi", c.control_hi}};
    j["info"] = {{"mode", c.info}, {"delay", c.info_delay}};
    j["monte_carlo"] = {{"paths", c.paths}, {"seed", c.seed}};
    j["solver"] = {{"degree", c.degree},
                   {"ridge", c.ridge},
                   {"picard_max_iter", c.picard_max_iter},
                   {"picard_tol", c.picard_tol},
                   {"estimator", c.estimator},
                   {"scheme", c.scheme},
                   {"c_lo", c.c_lo},
                   {"c_hi", c.c_hi}};
    j["market"] = {{"b0", c.market.b0},
                   {"sigma0", c.market.sigma0},
                   {"lambda_b", c.market.lambda_b},
                   {"lambda_sigma", c.market.lambda_sigma},
                   {"x", c.market.x},
                   {"c0", c.market.c0}};
    j["gateaux"] = {{"start", c.gateaux_start}, {"width", c.gateaux_width}, {"lambda", c.gateaux_lambda}};
    j["output"] = {{"dir", c.out_dir}};
    return j;
}

} // namespace

ExperimentConfig parse_config(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        std::size_t line = 1, col = 1;
        std::size_t end = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
        for (std::size_t k = 0; k < end; ++k) {
            if (text[k] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        throw ConfigError("config syntax error at line " + std::to_string(line) + ", column " + std::to_string(col) +
                          ": " + e.what());
    }
    if (!root.is_object()) throw ConfigError("config: top level must be an object");
    static const std::set<std::string> sections{"grid",  "noise",       "model",  "performance", "utility", "control",
                                                "info",  "monte_carlo", "solver", "market",      "gateaux", "output"};
    for (auto it = root.begin(); it != root.end(); ++it)
        if (!sections.count(it.key())) throw ConfigError(it.key() + ": unknown section");

    ExperimentConfig c;
    Section grid(root, "grid");
    grid.number("T", c.T);
    grid.integer("N", c.N);
    grid.finish();

    Section noise(root, "noise");
    noise.number("intensity", c.jump_intensity);
    noise.numbers("marks", c.jump_marks);
    noise.numbers("weights", c.jump_weights);
    noise.finish();

    Section model(root, "model");
    model.string("name", c.model);
    model.params("params", c.model_params);
    model.finish();

    Section perf(root, "performance");
    perf.string("name", c.performance);
    perf.params("params", c.performance_params);
    perf.finish();

    Section util(root, "utility");
    util.string("kind", c.utility);
    util.number("gamma", c.utility_gamma);
    util.finish();

    Section ctrl(root, "control");
    ctrl.string("kind", c.control_kind);
    ctrl.number("value", c.control_value);
    ctrl.number("slope", c.control_slope);
    ctrl.number("lo", c.control_lo);
    ctrl.number("hi", c.control_hi);
    ctrl.finish();

    Section info(root, "info");
    info.string("mode", c.info);
    info.number("delay", c.info_delay);
    info.finish();

    Section mc(root, "monte_carlo");
    mc.integer("paths", c.paths);
    mc.unsigned_integer("seed", c.seed);
    mc.finish();

    Section solver(root, "solver");
    solver.integer("degree", c.degree);
    solver.number("ridge", c.ridge);
    solver.integer("picard_max_iter", c.picard_max_iter);
    solver.number("picard_tol", c.picard_tol);
    solver.string("estimator", c.estimator);
    solver.string("scheme", c.scheme);
    solver.number("c_lo", c.c_lo);
    solver.number("c_hi", c.c_hi);
    solver.finish();

    Section market(root, "market");
    market.number("b0", c.market.b0);
    market.number("sigma0", c.market.sigma0);
    market.number("lambda_b", c.market.lambda_b);
    market.number("lambda_sigma", c.market.lambda_sigma);
    market.number("x", c.market.x);
    market.number("c0", c.market.c0);
    market.finish();

    Section gat(root, "gateaux");
    gat.integer("start", c.gateaux_start);
    gat.integer("width", c.gateaux_width);
    gat.number("lambda", c.gateaux_lambda);
    gat.finish();

    Section out(root, "output");
    out.string("dir", c.out_dir);
    out.finish();

    c.validate();
    return c;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string config_json(const ExperimentConfig& cfg) { return to_json(cfg).dump(2) + "\n"; }

std::string config_reference_json() {
    json ref;
    ref["defaults"] = to_json(ExperimentConfig{});
    ref["fields"] = {
        {"grid.T", "horizon T > 0"},
        {"grid.N", "number of steps, 2..4096; t_i = i T / N"},
        {"noise.intensity", "jump intensity lambda_J >= 0; 0 disables jumps"},
        {"noise.marks", "finite mark set zeta_k"},
        {"noise.weights", "mark probabilities, summing to 1"},
        {"model.name", "constant | exp_kernel_linear | x_independent_linear"},
        {"model.params", "b0, sigma0, gamma0, xi0, xi1, lambda_b, lambda_sigma, lambda_gamma"},
        {"performance.name", "zero | linear | quadratic | exp_utility | log_utility | power_utility"},
        {"performance.params", "a, gamma, running_const, running_kappa (f = c - kappa v^2 / 2)"},
        {"utility.kind", "log | power (portfolio subcommands)"},
        {"utility.gamma", "power exponent in (0, 1)"},
        {"control.kind", "constant | linear_state (u = value + slope * x)"},
        {"control.value", "constant control or intercept"},
        {"control.slope", "state coefficient for linear_state"},
        {"control.lo", "lower end of the admissible interval"},
        {"control.hi", "upper end of the admissible interval"},
        {"info.mode", "full | delayed"},
        {"info.delay", "information delay delta >= 0 for delayed mode"},
        {"monte_carlo.paths", "number of paths M"},
        {"monte_carlo.seed", "base seed; path m uses (seed, m)"},
        {"solver.degree", "total degree of the polynomial regression basis"},
        {"solver.ridge", "ridge penalty on non-intercept coefficients"},
        {"solver.picard_max_iter", "cap on Picard passes of the adjoint solver"},
        {"solver.picard_tol", "stop when sup-node RMS change of p falls below this"},
        {"solver.estimator", "surrogate | increment (how q and r are estimated)"},
        {"solver.scheme", "integral | differential | log_euler"},
        {"solver.c_lo", "lower end of the c bracket; 0 = 1e-3 U'(x)"},
        {"solver.c_hi", "upper end of the c bracket; 0 = 1e3 U'(x)"},
        {"market.b0", "drift kernel level"},
        {"market.sigma0", "volatility kernel level"},
        {"market.lambda_b", "drift kernel decay in t - s"},
        {"market.lambda_sigma", "volatility kernel decay in t - s"},
        {"market.x", "initial wealth > 0"},
        {"market.c0", "lower bound for sigma0; 0 = grid minimum"},
        {"gateaux.start", "first node of the perturbation window"},
        {"gateaux.width", "window length in steps"},
        {"gateaux.lambda", "finite-difference step"},
        {"output.dir", "artifact directory (overridden by --out)"},
    };
    return ref.dump(2) + "\n";
}

} // namespace vmp
