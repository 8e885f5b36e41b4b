#pragma once

#include <cstddef>
#include <filesystem>
#include <set>

#include "subnet_walk/harness/config.hpp"
#include "subnet_walk/harness/report.hpp"

namespace subnet_walk::harness {

/// Worker cap for per-seed concurrency: SUBNET_WALK_THREADS when set to a
/// positive integer, otherwise the hardware concurrency.
std::size_t worker_threads();

/// Runs every seed of the experiment and evaluates its acceptance predicate.
/// Nothing is written to disk.
ExperimentReport run_experiment(const ExperimentConfig& cfg);

/// run_experiment followed by emit_report into `out_dir`.
ExperimentReport run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                                const std::set<Format>& formats);

}  // namespace subnet_walk::harness
