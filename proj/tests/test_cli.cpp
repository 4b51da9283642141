#include <catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "polaron/cli.hpp"

using namespace polaron;
namespace fs = std::filesystem;

namespace {

const fs::path scratch = fs::temp_directory_path() / "polaron_cli_test";

int run_cli(const std::string& args) {
    const std::string cmd = std::string(POLARON_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

fs::path write_config(const std::string& name, const json& j) {
    fs::create_directories(scratch);
    const fs::path p = scratch / name;
    std::ofstream(p) << j.dump(2);
    return p;
}

std::string config(const std::string& name) { return std::string(POLARON_CONFIG_DIR) + "/" + name; }

}  // namespace

TEST_CASE("usage errors", "[cli]") {
    json j = load_config_file(config("flow_small.json"));
    j["grid"]["cutoff"] = json::array();
    const auto empty = write_config("empty_grid.json", j);
    CHECK(run_cli("flow --config " + empty.string() + " --out " + (scratch / "u").string()) == exit_usage);
    try {
        detail::make_plan(make_config(Study::renorm_flow, j, std::nullopt, std::nullopt, std::nullopt));
        FAIL("expected usage_error");
    } catch (const usage_error& e) {
        CHECK(std::string(e.what()).find("grid.cutoff") != std::string::npos);
    }
    CHECK(run_cli("flow --config " + config("lhy.json")) == exit_usage);
    CHECK(run_cli("flow") == exit_usage);
    CHECK(run_cli("nosuch --config " + config("lhy.json")) == exit_usage);
    CHECK(run_cli("flow --config /nonexistent.json") == exit_usage);
    j = load_config_file(config("flow_small.json"));
    j["tolerances"]["eig"] = -1.0;
    const auto bad_tol = write_config("bad_tol.json", j);
    CHECK(run_cli("flow --config " + bad_tol.string() + " --out " + (scratch / "u").string()) == exit_usage);
}

TEST_CASE("flow CSV schema", "[cli]") {
    const auto out = scratch / "flow_a";
    REQUIRE(run_cli("flow --config " + config("flow_small.json") + " --out " + out.string()) == exit_ok);
    const std::string csv = slurp(out / "renorm_flow.csv");
    CHECK(csv.rfind("Lambda,kappa,n_max,e_0,e_1,e_2,E1,E2,e_0_minus_E_total\r\n", 0) == 0);
    const json m = json::parse(slurp(out / "renorm_flow.manifest.json"));
    CHECK(m["points"].size() == 12);
    CHECK(m["config"]["seed"] == 7);
    for (const auto& p : m["points"]) CHECK(p["status"] == "ok");
}

TEST_CASE("reruns are byte-identical across worker counts", "[cli]") {
    for (const std::string sub : {"flow", "spectrum", "scatter", "logterm", "lhy", "expand", "weyl"}) {
        const std::string file = sub == "flow" ? "flow_small.json" : sub + ".json";
        if (sub == "scatter") {
            // Drop the largest n to keep the test short.
            json j = load_config_file(config(file));
            j["grid"]["n"] = {4, 8, 16};
            write_config("scatter_small.json", j);
        }
        const std::string cfg_path = sub == "scatter" ? (scratch / "scatter_small.json").string() : config(file);
        const auto a = scratch / (sub + "_w1");
        const auto b = scratch / (sub + "_w3");
        REQUIRE(run_cli(sub + " --config " + cfg_path + " --out " + a.string() + " --workers 1") == exit_ok);
        REQUIRE(run_cli(sub + " --config " + cfg_path + " --out " + b.string() + " --workers 3") == exit_ok);
        const auto name = study_info(*study_from_subcommand(sub)).name;
        const std::string csv = std::string(name) + ".csv";
        CHECK(slurp(a / csv) == slurp(b / csv));

        // From the manifest, with the same seed.
        const auto c = scratch / (sub + "_m");
        const auto manifest = a / (std::string(name) + ".manifest.json");
        REQUIRE(run_cli(sub + " --config " + manifest.string() + " --out " + c.string()) == exit_ok);
        CHECK(slurp(a / csv) == slurp(c / csv));
    }
}

TEST_CASE("a failing point does not abort the sweep", "[cli]") {
    json j = load_config_file(config("spectrum.json"));
    j["grid"]["n_max"] = {1, 3};
    j["max_dim"] = 1000;
    const auto p = write_config("capacity.json", j);
    const auto out = scratch / "cap";
    CHECK(run_cli("spectrum --config " + p.string() + " --out " + out.string()) == exit_capacity);
    const json m = json::parse(slurp(out / "spectrum_gaps.manifest.json"));
    int ok = 0, cap = 0;
    for (const auto& pt : m["points"]) {
        if (pt["status"] == "ok") ++ok;
        if (pt["status"] == "capacity") ++cap;
    }
    CHECK(ok > 0);
    CHECK(cap > 0);
    const std::string csv = slurp(out / "spectrum_gaps.csv");
    CHECK(csv.find(",,") != std::string::npos);
}

TEST_CASE("in-process evaluation", "[cli]") {
    json j = load_config_file(config("lhy.json"));
    const auto one = evaluate_study(make_config(Study::lhy, j, std::nullopt, 5, 1));
    const auto four = evaluate_study(make_config(Study::lhy, j, std::nullopt, 5, 4));
    CHECK(one.csv == four.csv);
    CHECK(one.exit_code == exit_ok);
    const auto& fits = one.manifest["summary"]["fits"];
    REQUIRE(fits.size() == 2);
    for (const auto& f : fits) CHECK(std::abs(f["increment_exponent"].get<double>() + 1.0) < 0.1);
    CHECK(fmt17(0.1) == "0.10000000000000001");
    CHECK(csv_field("a,b") == "\"a,b\"");
    CHECK(csv_field("say \"x\"") == "\"say \"\"x\"\"\"");
}
