#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    auto d = fs::temp_directory_path() / ("vmp_cli_test_" + std::to_string(::getpid()) + "_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

void put(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

// returns the exit code; stderr goes to dir/err.txt
int run(const std::string& args, const fs::path& dir) {
    std::string cmd = std::string("\"") + VMP_CLI_PATH + "\" " + args + " >\"" + (dir / "out.txt").string() +
                      "\" 2>\"" + (dir / "err.txt").string() + "\"";
    int st = std::system(cmd.c_str());
    return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

const char* small_zero = R"({
  "grid": {"T": 1.0, "N": 8},
  "model": {"name": "constant", "params": {"b0": 0.0, "sigma0": 0.0, "xi0": 1.5}},
  "monte_carlo": {"paths": 200, "seed": 3}
})";

} // namespace

TEST_CASE("report writes the reference and a manifest") {
    auto d = scratch("report");
    CHECK(run("report --out \"" + (d / "o").string() + "\"", d) == 0);
    CHECK(fs::exists(d / "o" / "config_reference.json"));
    CHECK(fs::exists(d / "o" / "summary.csv"));
    auto man = slurp(d / "o" / "manifest.json");
    CHECK(man.find("\"seed\"") != std::string::npos);
    CHECK(slurp(d / "o" / "summary.csv").find("monte_carlo.paths") != std::string::npos);
    fs::remove_all(d);
}

TEST_CASE("simulate with zero coefficients and reruns") {
    auto d = scratch("simulate");
    put(d / "c.json", small_zero);
    std::string base = "simulate --config \"" + (d / "c.json").string() + "\" --out ";
    REQUIRE(run(base + "\"" + (d / "a").string() + "\"", d) == 0);
    REQUIRE(run(base + "\"" + (d / "b").string() + "\"", d) == 0);
    auto traj = slurp(d / "a" / "trajectory.csv");
    CHECK(traj.find("1.5") != std::string::npos);
    for (const char* f : {"trajectory.csv", "performance.csv"})
        CHECK(slurp(d / "a" / f) == slurp(d / "b" / f));
    CHECK(fs::exists(d / "a" / "manifest.json"));

    REQUIRE(run(base + "\"" + (d / "s").string() + "\" --seed 4", d) == 0);
    CHECK(slurp(d / "s" / "manifest.json").find("4") != std::string::npos);
    fs::remove_all(d);
}

TEST_CASE("config errors exit with status 2") {
    auto d = scratch("errors");
    put(d / "unknown.json", R"({"grid": {"T": 1.0, "steps": 8}})");
    CHECK(run("simulate --config \"" + (d / "unknown.json").string() + "\" --out \"" + (d / "o").string() + "\"",
              d) == 2);
    CHECK(slurp(d / "err.txt").find("grid.steps") != std::string::npos);

    put(d / "broken.json", "{\n  \"grid\": {\"T\": 1.0,,\n}");
    CHECK(run("simulate --config \"" + (d / "broken.json").string() + "\" --out \"" + (d / "o").string() + "\"",
              d) == 2);
    auto err = slurp(d / "err.txt");
    CHECK(err.find("line 2") != std::string::npos);
    CHECK(err.find("column") != std::string::npos);

    put(d / "kind.json", R"({"utility": {"kind": "exp"}})");
    CHECK(run("solve-portfolio --config \"" + (d / "kind.json").string() + "\" --out \"" + (d / "o").string() + "\"",
              d) == 2);
    CHECK(!fs::exists(d / "o" / "manifest.json"));
    fs::remove_all(d);
}

TEST_CASE("subcommand is required") {
    auto d = scratch("usage");
    CHECK(run("", d) != 0);
    CHECK(run("no-such-command", d) != 0);
    CHECK(run("simulate --config \"" + (d / "missing.json").string() + "\"", d) != 0);
    fs::remove_all(d);
}
