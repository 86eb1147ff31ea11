#pragma once

// Experiment runner: dispatches a validated config to its study, writing a
// manifest before any compute, per-step CSVs as stages finish, and the
// summary last. Re-running a config reproduces every artifact byte for byte.

#include <string>

#include "sbmr/config.hpp"

namespace sbmr {

void run_study(const ExperimentConfig& config);

std::string study_catalog();

// Reproducibility digest: the derived per-replicate stream keys, so any
// single replicate can be re-run in isolation.
std::string seed_report(const ExperimentConfig& config);

}  // namespace sbmr
