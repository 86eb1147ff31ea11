// Command-line front end. Talks to the core exclusively through the C API in
// sbmrange.h, the same surface other language bindings would use.

#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "sbmrange.h"

namespace {

int fail(sbmr_status status) {
    std::fprintf(stderr, "error: %s\n", sbmr_last_error());
    return static_cast<int>(status);
}

struct ConfigHandle {
    sbmr_config* ptr = nullptr;
    ~ConfigHandle() { sbmr_config_destroy(ptr); }
};

int apply_overrides(sbmr_config* config, const std::string& out,
                    const std::string& seed, const std::string& threads,
                    bool verbose) {
    if (!out.empty()) {
        if (auto s = sbmr_config_set(config, "out_dir", out.c_str())) return fail(s);
    }
    if (!seed.empty()) {
        if (auto s = sbmr_config_set(config, "seed", seed.c_str())) return fail(s);
    }
    if (!threads.empty()) {
        if (auto s = sbmr_config_set(config, "threads", threads.c_str())) return fail(s);
    }
    if (verbose) {
        if (auto s = sbmr_config_set(config, "verbose", "1")) return fail(s);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"sbmr: range-deviation studies for supercritical "
                 "super-Brownian motion"};
    app.set_version_flag("--version", sbmr_version());
    app.require_subcommand(1);

    std::string out_override, seed_override, threads_override;
    bool verbose = false;
    app.add_option("--out", out_override, "Output directory override");
    app.add_option("--seed", seed_override, "Seed override");
    app.add_option("--threads", threads_override, "Worker pool size override");
    app.add_flag("--verbose", verbose, "Verbose progress output");

    std::string run_config_path;
    auto* run = app.add_subcommand("run", "Run the study described by a config file");
    run->add_option("config", run_config_path, "Flat key = value config file")
        ->required();

    auto* list = app.add_subcommand("list-studies",
                                    "Print the catalog of study kinds");

    std::string seed_config_path;
    auto* seed_report = app.add_subcommand(
        "seed-report", "Print per-replicate stream keys for a config");
    seed_report->add_option("config", seed_config_path, "Config file")
        ->required();

    CLI11_PARSE(app, argc, argv);

    if (list->parsed()) {
        std::fputs(sbmr_study_catalog(), stdout);
        return 0;
    }

    if (run->parsed()) {
        ConfigHandle config;
        if (auto s = sbmr_config_load(run_config_path.c_str(), &config.ptr)) {
            return fail(s);
        }
        if (int rc = apply_overrides(config.ptr, out_override, seed_override,
                                     threads_override, verbose)) {
            return rc;
        }
        if (verbose) std::fprintf(stderr, "sbmr %s: running study\n", sbmr_version());
        if (auto s = sbmr_run_study(config.ptr)) return fail(s);
        return 0;
    }

    if (seed_report->parsed()) {
        ConfigHandle config;
        if (auto s = sbmr_config_load(seed_config_path.c_str(), &config.ptr)) {
            return fail(s);
        }
        if (int rc = apply_overrides(config.ptr, out_override, seed_override,
                                     threads_override, verbose)) {
            return rc;
        }
        char* text = nullptr;
        if (auto s = sbmr_seed_report(config.ptr, &text)) return fail(s);
        std::fputs(text, stdout);
        sbmr_string_free(text);
        return 0;
    }

    return 0;
}
