#pragma once

// Flat key = value experiment configuration. Every key is validated before
// any compute starts and unknown keys are rejected outright, so a typo fails
// the run instead of silently falling back to a default.

#include <cstdint>
#include <string>
#include <vector>

#include "sbmr/mechanism.hpp"

namespace sbmr {

extern const char* const kVersion;

struct ExperimentConfig {
    Mechanism mech{1.0, 1.0, 0.0, 1.0};
    int d = 1;
    std::string study;
    double rho = 0.0;
    std::vector<double> t_grid;

    // solver
    double h = 0.0;    // 0 = auto (target spacing M / 600 capped at 0.05)
    double dt = 0.0;   // 0 = auto (h^2)
    double tol = 5e-3; // relative sweep tolerance at the origin

    // simulator
    std::uint64_t scale = 2000;  // N
    std::size_t replicates = 10000;
    std::size_t record_replicates = 1000;  // per-replicate CSV sample
    std::vector<double> levels;  // splitting radii; empty = auto
    int auto_levels = 4;
    std::size_t per_level = 400;
    double split_t = 0.0;    // 0 = t_grid.back()
    double split_rho = 0.0;  // 0 = rho
    double bridge_dt = 0.01;
    std::size_t population_cap = 10'000'000;

    // path-integral checks
    std::size_t fk_paths = 20000;
    std::size_t fk_steps = 400;

    std::uint64_t seed = 1;
    std::string out_dir;
    unsigned threads = 0;  // 0 = hardware concurrency
    int verbose = 0;

    static ExperimentConfig parse(const std::string& text,
                                  const std::string& source_name);
    static ExperimentConfig load(const std::string& path);

    // Applies a single key = value override (used by CLI flags).
    void set(const std::string& key, const std::string& value);

    // Study-specific validation; throws ErrorCode::config before any compute.
    void validate() const;

    // Canonical echo of every key, sorted, for the manifest.
    std::string echo() const;

    // Output directory after applying the SBMR_OUT_ROOT fallback.
    std::string resolved_out_dir() const;
};

const std::vector<std::string>& study_kinds();
std::string nearest_study(const std::string& name);

}  // namespace sbmr
