#pragma once

#include "haystack/config.hpp"
#include "haystack/experiment_plan.hpp"
#include "haystack/reporting.hpp"
#include "haystack/results_store.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace haystack {

struct RunOptions {
    // Stop cleanly after this many newly completed units; <0 runs to the end.
    // Resuming later picks up exactly where the run left off.
    long max_units = -1;
    int heartbeat_every = 25;
    bool quiet = false;
};

struct RunOutcome {
    std::size_t total_units = 0;
    std::size_t recorded_units = 0; // store size after this invocation
    std::size_t dispatched = 0;
    int network_requests = 0;
    std::vector<std::string> failures;
    bool finished = false;
};

// Executes a planned run: builds prompts, dispatches against the endpoint,
// records outcomes. Every response lands in the cache before its result is
// recorded, so an interrupted run resumes without re-querying.
RunOutcome run_manifest(const RunManifest& manifest, const HarnessConfig& config,
                        const RunOptions& options = {});

// Loads manifest + results from a run directory, computes verdicts and
// summaries, writes verdicts.json and summary.json. alpha < 0 keeps the
// manifest's value.
RunScore score_run_dir(const std::filesystem::path& run_dir, double alpha = -1.0,
                       int icl_kshot = 4);

// Emits reports/heatmap.{csv,svg}, diagnostic.{csv,svg}, histogram.csv.
void report_run_dir(const std::filesystem::path& run_dir, double alpha = -1.0);

// Ensures <run_dir>/manifest.json matches `manifest`, writing it when absent.
void persist_manifest(const RunManifest& manifest, const std::filesystem::path& run_dir);

} // namespace haystack
