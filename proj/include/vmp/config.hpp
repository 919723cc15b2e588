#pragma once

#include "vmp/adjoint.hpp"
#include "vmp/grid_noise.hpp"
#include "vmp/models.hpp"
#include "vmp/portfolio.hpp"
#include "vmp/regression.hpp"
#include "vmp/volterra.hpp"

#include <cstdint>
#include <string>

namespace vmp {

struct ExperimentConfig {
    double T = 1.0;
    long long N = 64;

    double jump_intensity = 0.0;
    std::vector<double> jump_marks, jump_weights;

    std::string model = "constant";
    ParamMap model_params;

    std::string performance = "quadratic";
    ParamMap performance_params;

    std::string utility = "log";
    double utility_gamma = 0.5;

    std::string control_kind = "constant"; // constant | linear_state (u = a + b x)
    double control_value = 1.0, control_slope = 0.0;
    double control_lo = -10.0, control_hi = 10.0;

    std::string info = "full"; // full | delayed
    double info_delay = 0.0;

    long long paths = 20000;
    std::uint64_t seed = 20240611;

    int degree = 3;
    double ridge = 1e-8;
    int picard_max_iter = 20;
    double picard_tol = 1e-4;
    std::string estimator = "surrogate"; // surrogate | increment
    std::string scheme = "integral";     // integral | differential | log_euler
    double c_lo = 0.0, c_hi = 0.0;       // 0 = default bracket

    MarketModel market;

    long long gateaux_start = 16, gateaux_width = 4;
    double gateaux_lambda = 1e-3;

    std::string out_dir = "out";

    TimeGrid grid() const { return TimeGrid(T, N); }
    JumpModel jumps() const;
    CoefficientModel coefficient_model() const;
    PerformanceSpec performance_spec() const;
    UtilitySpec utility_spec() const;
    ControlProcess control() const;
    InfoMode info_mode() const;
    RegressionBasis basis() const { return {degree, ridge}; }
    AdjointOptions adjoint_options() const;
    Scheme scheme_kind() const;

    // Cross-field checks; throws ConfigError naming the field.
    void validate() const;
};

// Parses JSON text. Syntax errors report line and column; field errors report
// the dotted field path. Unknown keys are rejected.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);

// Canonical JSON echo (sorted keys, full precision) of every knob.
std::string config_json(const ExperimentConfig& cfg);
// Defaults plus a one-line description per field.
std::string config_reference_json();

} // namespace vmp
