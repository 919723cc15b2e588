#pragma once

#include "vmp/config.hpp"

#include <string>
#include <vector>

namespace vmp {

struct Artifact {
    std::string name;    // file name inside the output directory
    std::string content;
};

struct RunResult {
    std::string subcommand;
    std::vector<Artifact> artifacts;
    bool pass = true; // false when a check inside the run failed
};

std::vector<std::string> subcommand_names();

// simulate, check-malliavin, solve-adjoint, check-stationarity, gateaux,
// solve-portfolio, merton-test, report. Throws ConfigError for unknown names.
RunResult run_subcommand(const std::string& name, const ExperimentConfig& cfg);

// Config echo, seed, artifact list and library versions. No timestamps.
std::string manifest_json(const RunResult& result, const ExperimentConfig& cfg);

// Writes every artifact and manifest.json into dir, each atomically.
void write_artifacts(const RunResult& result, const ExperimentConfig& cfg, const std::string& dir);

} // namespace vmp
