#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "sbmr/config.hpp"
#include "sbmr/study.hpp"

using namespace sbmr;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("sbmr_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    static int counter;
};
int TempDir::counter = 0;

}  // namespace

TEST_CASE("config parsing: comments, whitespace, and echo") {
    const std::string text =
        "# rate study\n"
        "study = rate_upper\n"
        "beta = 1.0\n"
        "alpha = 1.0\n"
        "rho = 2.0   # supercritical speed\n"
        "t_grid = 4, 6, 8\n"
        "seed = 9\n";
    const auto config = ExperimentConfig::parse(text, "inline");
    CHECK(config.study == "rate_upper");
    CHECK(config.mech.beta == 1.0);
    CHECK(config.rho == 2.0);
    REQUIRE(config.t_grid.size() == 3);
    CHECK(config.t_grid[1] == 6.0);
    CHECK(config.seed == 9);
    CHECK_NOTHROW(config.validate());
    // echo contains every key once
    const std::string echo = config.echo();
    CHECK(echo.find("study = rate_upper") != std::string::npos);
    CHECK(echo.find("rho = 2") != std::string::npos);
}

TEST_CASE("unknown and duplicate keys are rejected") {
    CHECK_THROWS_AS(ExperimentConfig::parse("stdy = rate_upper\n", "inline"),
                    Error);
    CHECK_THROWS_AS(
        ExperimentConfig::parse("seed = 1\nseed = 2\n", "inline"), Error);
    CHECK_THROWS_AS(ExperimentConfig::parse("rho = 1x\n", "inline"), Error);
    CHECK_THROWS_AS(ExperimentConfig::parse("just a line\n", "inline"), Error);
}

TEST_CASE("validation failures name the problem before compute") {
    auto config = ExperimentConfig::parse(
        "study = rate_upper\nbeta = 1\nalpha = 1\nrho = 1.2\nt_grid = 4,6,8\n",
        "inline");
    // rho <= sqrt(2 beta): rejected
    CHECK_THROWS_AS(config.validate(), Error);
    try {
        config.validate();
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::config);
        CHECK(std::string(e.what()).find("sqrt(2 beta)") != std::string::npos);
    }

    auto typo = ExperimentConfig::parse(
        "study = rate_uper\nrho = 2\nt_grid = 4,6,8\n", "inline");
    try {
        typo.validate();
        CHECK(false);
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("rate_upper") != std::string::npos);
    }
}

TEST_CASE("study catalog lists every kind") {
    const auto catalog = study_catalog();
    for (const auto& kind : study_kinds()) {
        INFO(kind);
        CHECK(catalog.find(kind) != std::string::npos);
    }
}

TEST_CASE("seed report is stable, seed-sensitive, and names stream keys") {
    auto config = ExperimentConfig::parse(
        "study = mc_vs_pde\nbeta = 1\nalpha = 1\nrho = 1.5\nt_grid = 1\n"
        "N = 50\nreplicates = 64\nseed = 5\n",
        "inline");
    const auto a = seed_report(config);
    const auto b = seed_report(config);
    CHECK(a == b);
    CHECK(a.find("replicate 0 stream = 0x") != std::string::npos);
    CHECK(a.find("stream_digest = 0x") != std::string::npos);

    config.seed = 6;
    CHECK(seed_report(config) != a);
}

TEST_CASE("rate_upper study writes byte-identical artifacts on re-run") {
    TempDir tmp;
    auto config = ExperimentConfig::parse(
        "study = rate_upper\nbeta = 1\nalpha = 1\nrho = 2\n"
        "t_grid = 1, 1.5, 2\ntol = 1e-3\nh = 0.02\nseed = 3\nthreads = 2\n",
        "inline");
    config.out_dir = (tmp.path / "run").string();
    run_study(config);

    for (const char* name :
         {"manifest.txt", "pde_solves.csv", "deviations.csv", "summary.csv"}) {
        INFO(name);
        CHECK(fs::exists(tmp.path / "run" / name));
    }
    const auto manifest1 = slurp(tmp.path / "run" / "manifest.txt");
    CHECK(manifest1.find("status = ok") != std::string::npos);
    const auto solves1 = slurp(tmp.path / "run" / "pde_solves.csv");
    const auto summary1 = slurp(tmp.path / "run" / "summary.csv");

    run_study(config);
    CHECK(slurp(tmp.path / "run" / "manifest.txt") == manifest1);
    CHECK(slurp(tmp.path / "run" / "pde_solves.csv") == solves1);
    CHECK(slurp(tmp.path / "run" / "summary.csv") == summary1);

    // CSVs carry full precision, dot-decimal numbers
    CHECK(solves1.find(',') != std::string::npos);
    CHECK(solves1.find(';') == std::string::npos);
}

TEST_CASE("failed stage is recorded in the manifest") {
    TempDir tmp;
    auto config = ExperimentConfig::parse(
        "study = mc_vs_pde\nbeta = 1\nalpha = 1\nrho = 1.5\nt_grid = 1\n"
        "N = 50\npopulation_cap = 50\nreplicates = 32\n"
        "record_replicates = 8\nper_level = 8\nseed = 2\nthreads = 2\n",
        "inline");
    config.out_dir = (tmp.path / "boom").string();
    CHECK_THROWS_AS(run_study(config), Error);
    const auto manifest = slurp(tmp.path / "boom" / "manifest.txt");
    CHECK(manifest.find("status = failed") != std::string::npos);
    CHECK(manifest.find("failed_stage = mc_direct") != std::string::npos);
    CHECK_FALSE(fs::exists(tmp.path / "boom" / "summary.csv"));
}

TEST_CASE("mc_vs_pde study on a small configuration produces the full "
          "artifact set") {
    TempDir tmp;
    auto config = ExperimentConfig::parse(
        "study = mc_vs_pde\nbeta = 1\nalpha = 1\nrho = 1.5\nt_grid = 1\n"
        "N = 100\nreplicates = 400\nrecord_replicates = 40\n"
        "auto_levels = 3\nper_level = 100\ntol = 1e-3\nseed = 8\nthreads = 2\n",
        "inline");
    config.out_dir = (tmp.path / "mc").string();
    run_study(config);
    for (const char* name : {"manifest.txt", "pde_solves.csv",
                             "replicates.csv", "aggregate.csv", "summary.csv"}) {
        INFO(name);
        CHECK(fs::exists(tmp.path / "mc" / name));
    }
    const auto replicates = slurp(tmp.path / "mc" / "replicates.csv");
    CHECK(replicates.find("replicate,survived,final_mass") != std::string::npos);
    const auto summary = slurp(tmp.path / "mc" / "summary.csv");
    CHECK(summary.find("records_r_ge_h_fraction,1,") != std::string::npos);
}

TEST_CASE("bounds_suite study runs at reduced path counts") {
    TempDir tmp;
    auto config = ExperimentConfig::parse(
        "study = bounds_suite\nbeta = 1\nalpha = 1\nfk_paths = 4000\n"
        "fk_steps = 100\nseed = 4\nthreads = 2\n",
        "inline");
    config.out_dir = (tmp.path / "bounds").string();
    run_study(config);
    const auto bounds = slurp(tmp.path / "bounds" / "bounds.csv");
    CHECK(bounds.find("tail_envelope_c_d") != std::string::npos);
    CHECK(bounds.find("max_radius_bound") != std::string::npos);
    const auto summary = slurp(tmp.path / "bounds" / "summary.csv");
    CHECK(summary.find("bounds_checks_failed,0,") != std::string::npos);
}

TEST_CASE("out_dir falls back to the environment root") {
    auto config = ExperimentConfig::parse("study = rate_upper\n", "inline");
    ::setenv("SBMR_OUT_ROOT", "/tmp/sbmr_root_test", 1);
    CHECK(config.resolved_out_dir() == "/tmp/sbmr_root_test/rate_upper");
    ::unsetenv("SBMR_OUT_ROOT");
    CHECK(config.resolved_out_dir() == "./rate_upper");
    config.out_dir = "explicit";
    CHECK(config.resolved_out_dir() == "explicit");
}
