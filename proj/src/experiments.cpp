#include "vmp/experiments.hpp"

#include "vmp/adjoint.hpp"
#include "vmp/error.hpp"
#include "vmp/hamiltonian.hpp"
#include "vmp/malliavin.hpp"
#include "vmp/portfolio.hpp"

#include <Eigen/Core>
#include <json.hpp>

#include <cmath>
#include <filesystem>

namespace vmp {

namespace {

constexpr const char* kVersion = "0.1.0";

PathBundle bundle(const ExperimentConfig& cfg) { return sample_paths(cfg.grid(), cfg.jumps(), cfg.paths, cfg.seed); }

Artifact csv(std::string name, const CsvTable& t) { return {std::move(name), t.str()}; }

RunResult run_simulate(const ExperimentConfig& cfg) {
    auto paths = bundle(cfg);
    auto model = cfg.coefficient_model();
    auto states = simulate(model, cfg.control(), paths, cfg.scheme_kind());
    RunResult r;
    r.artifacts.push_back(csv("trajectory.csv", trajectory_table(states)));
    Estimate J = evaluate_performance(cfg.performance_spec(), states);
    CsvTable perf({"performance", "J_estimate", "stderr"});
    perf.row({cfg.performance, fmt_number(J.value), fmt_number(J.se)});
    r.artifacts.push_back(csv("performance.csv", perf));
    return r;
}

RunResult run_check_malliavin(const ExperimentConfig& cfg) {
    auto paths = bundle(cfg);
    auto basis = cfg.basis();
    std::size_t N = paths.steps();
    std::vector<CheckReport> reports;
    PathFunctional BT2 = [N](const Path& p) {
        double b = p.brownian(N);
        return b * b;
    };
    AdaptedProcess Bt = [](const Path& p, std::size_t i) { return p.brownian(i); };
    reports.push_back(check_duality_brownian(BT2, Bt, paths, basis));
    if (paths.jump_model().active()) {
        PathFunctional eta2 = [N](const Path& p) {
            double e = p.eta(N);
            return e * e;
        };
        AdaptedMarkProcess one = [](const Path&, std::size_t, std::size_t) { return 1.0; };
        reports.push_back(check_duality_jump(eta2, one, paths, basis));
    }
    auto co = clark_ocone_reconstruct(BT2, paths, basis);
    CheckReport c;
    c.name = "clark_ocone_relative_rms";
    c.lhs = co.relative_rms;
    c.rhs = 0.05;
    c.pass = co.relative_rms <= 0.05;
    c.degenerate = co.degenerate;
    reports.push_back(c);
    reports.push_back(check_isometry([](double, double) { return 1.0; }, paths));
    RunResult r;
    for (const auto& rep : reports) r.pass = r.pass && rep.pass;
    r.artifacts.push_back(csv("malliavin_checks.csv", check_table(reports)));
    return r;
}

CsvTable changes_table(const AdjointTriple& tr) {
    CsvTable t({"pass", "sup_rms_change"});
    for (std::size_t k = 0; k < tr.changes.size(); ++k) t.row({std::to_string(k + 1), fmt_number(tr.changes[k])});
    return t;
}

RunResult run_solve_adjoint(const ExperimentConfig& cfg) {
    auto paths = bundle(cfg);
    auto model = cfg.coefficient_model();
    auto spec = cfg.performance_spec();
    auto states = simulate(model, cfg.control(), paths, cfg.scheme_kind());
    auto sol = solve_general(model, spec, states, paths, cfg.adjoint_options());
    RunResult r;
    r.artifacts.push_back(csv("adjoint.csv", adjoint_table(sol.triple, paths.grid())));
    r.artifacts.push_back(csv("picard.csv", changes_table(sol.triple)));
    return r;
}

RunResult run_check_stationarity(const ExperimentConfig& cfg) {
    auto paths = bundle(cfg);
    auto model = cfg.coefficient_model();
    auto spec = cfg.performance_spec();
    auto states = simulate(model, cfg.control(), paths, cfg.scheme_kind());
    auto sol = solve_general(model, spec, states, paths, cfg.adjoint_options());
    auto rep = check_stationarity(model, spec, states, paths, sol, cfg.info_mode(), cfg.basis());
    RunResult r;
    r.pass = rep.max_interior() <= rep.threshold;
    r.artifacts.push_back(csv("stationarity.csv", rep.table()));
    return r;
}

RunResult run_gateaux(const ExperimentConfig& cfg) {
    // only checked here so other subcommands can run on short grids
    if (cfg.gateaux_start + cfg.gateaux_width > cfg.N)
        throw ConfigError("gateaux.start/width: window must lie inside the grid");
    auto paths = bundle(cfg);
    auto model = cfg.coefficient_model();
    auto spec = cfg.performance_spec();
    auto beta = window_perturbation(paths, static_cast<std::size_t>(cfg.gateaux_start),
                                    static_cast<std::size_t>(cfg.gateaux_width));
    auto rep = gateaux_check(model, spec, cfg.control(), beta, paths, cfg.scheme_kind(), cfg.adjoint_options(),
                             cfg.gateaux_lambda);
    CsvTable t({"window_start", "window_width", "fd_derivative", "fd_stderr", "adjoint_form", "adjoint_stderr", "pass"});
    t.row({std::to_string(cfg.gateaux_start), std::to_string(cfg.gateaux_width), fmt_number(rep.fd),
           fmt_number(rep.fd_se), fmt_number(rep.adjoint), fmt_number(rep.adjoint_se), fmt_bool(rep.pass)});
    RunResult r;
    r.pass = rep.pass;
    r.artifacts.push_back(csv("gateaux.csv", t));
    return r;
}

RunResult portfolio_run(const ExperimentConfig& cfg, const MarketModel& market, bool merton) {
    auto paths = bundle(cfg);
    auto utility = cfg.utility_spec();
    auto sc = solve_c(market, utility, paths, cfg.c_lo, cfg.c_hi, cfg.basis());
    auto sol = bsvie_solve(sc.c, market, utility, paths, cfg.basis(), true);
    auto pi = recover_pi(sol, market, paths.grid());
    auto theta = theta0(market, paths.grid());
    auto control = pi_control(pi, {cfg.control_lo, cfg.control_hi});
    auto opt = verify_optimality(market, utility, control, paths, {-0.25, -0.1, 0.1, 0.25}, false);
    RunResult r;
    r.pass = opt.pass;
    r.artifacts.push_back(csv("c_calibration.csv", sc.table()));
    r.artifacts.push_back(csv("portfolio.csv", portfolio_table(theta, pi, paths.grid())));
    r.artifacts.push_back(csv("strategies.csv", opt.table()));
    CsvTable bs({"quantity", "value"});
    bs.row({"c", fmt_number(sc.c)});
    bs.row({"xhat0_mean", fmt_number(sol.x0())});
    bs.row({"xhat0_std", fmt_number(sol.x0_std())});
    bs.row({"z_ratio_spread", fmt_number(sol.z_ratio_spread())});
    r.artifacts.push_back(csv("bsvie.csv", bs));
    if (merton) {
        std::size_t N = paths.steps();
        double pi_ref = market.b0 / (market.sigma0 * market.sigma0);
        double worst = 0.0, interior = 0.0;
        for (std::size_t j = N / 4; j <= 3 * N / 4 && j < N; ++j) {
            worst = std::max(worst, std::abs(pi.mean[j] / pi_ref - 1.0));
            interior += pi.mean[j];
        }
        interior /= static_cast<double>(3 * N / 4 - N / 4 + 1);
        CsvTable m({"quantity", "value", "reference", "relative_error", "tolerance", "pass"});
        if (utility.kind == UtilitySpec::Kind::log) {
            double c_ref = 1.0 / market.x, e = std::abs(sc.c / c_ref - 1.0);
            m.row({"c", fmt_number(sc.c), fmt_number(c_ref), fmt_number(e), fmt_number(0.02), fmt_bool(e <= 0.02)});
            r.pass = r.pass && e <= 0.02;
        }
        m.row({"pi_hat_interior_mean", fmt_number(interior), fmt_number(pi_ref), fmt_number(worst), fmt_number(0.05),
               fmt_bool(worst <= 0.05)});
        r.pass = r.pass && worst <= 0.05;
        r.artifacts.push_back(csv("merton.csv", m));
    }
    return r;
}

RunResult run_report(const ExperimentConfig& cfg) {
    RunResult r;
    r.artifacts.push_back({"config_reference.json", config_reference_json()});
    CsvTable t({"key", "value"});
    auto j = nlohmann::json::parse(config_json(cfg));
    for (auto& [section, body] : j.items())
        for (auto& [key, value] : body.items()) t.row({section + "." + key, value.dump()});
    r.artifacts.push_back(csv("summary.csv", t));
    return r;
}

} // namespace

std::vector<std::string> subcommand_names() {
    return {"simulate", "check-malliavin", "solve-adjoint", "check-stationarity",
            "gateaux",  "solve-portfolio", "merton-test",   "report"};
}

RunResult run_subcommand(const std::string& name, const ExperimentConfig& cfg) {
    cfg.validate();
    RunResult r;
    if (name == "simulate")
        r = run_simulate(cfg);
    else if (name == "check-malliavin")
        r = run_check_malliavin(cfg);
    else if (name == "solve-adjoint")
        r = run_solve_adjoint(cfg);
    else if (name == "check-stationarity")
        r = run_check_stationarity(cfg);
    else if (name == "gateaux")
        r = run_gateaux(cfg);
    else if (name == "solve-portfolio")
        r = portfolio_run(cfg, cfg.market, false);
    else if (name == "merton-test") {
        MarketModel m = cfg.market;
        m.lambda_b = m.lambda_sigma = 0.0;
        r = portfolio_run(cfg, m, true);
    } else if (name == "report")
        r = run_report(cfg);
    else
        throw ConfigError("unknown subcommand '" + name + "'");
    r.subcommand = name;
    return r;
}

std::string manifest_json(const RunResult& result, const ExperimentConfig& cfg) {
    nlohmann::json j;
    j["subcommand"] = result.subcommand;
    j["seed"] = cfg.seed;
    j["paths"] = cfg.paths;
    j["config"] = nlohmann::json::parse(config_json(cfg));
    std::vector<std::string> names;
    for (const auto& a : result.artifacts) names.push_back(a.name);
    j["artifacts"] = names;
    j["checks_passed"] = result.pass;
    j["versions"] = {{"vmp", kVersion},
                     {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                   std::to_string(EIGEN_MINOR_VERSION)},
                     {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                           std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                           std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
                     {"compiler", __VERSION__}};
    return j.dump(2) + "\n";
}

void write_artifacts(const RunResult& result, const ExperimentConfig& cfg, const std::string& dir) {
    std::filesystem::create_directories(dir);
    for (const auto& a : result.artifacts) write_file_atomic((std::filesystem::path(dir) / a.name).string(), a.content);
    write_file_atomic((std::filesystem::path(dir) / "manifest.json").string(), manifest_json(result, cfg));
}

} // namespace vmp
