#pragma once

#include "haystack/config.hpp"
#include "haystack/prompt_builder.hpp"

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace haystack {

// One experiment grid point, fully materialized: its task subset (a prefix
// of the registry order) and the permutations of that subset.
struct GridPointPlan {
    int grid_value = 0; // the swept n_shot or n_task value
    int n_task = 0;
    int n_shot = 0;
    std::vector<std::string> task_names;
    std::vector<std::vector<int>> permutations;
};

// A fully seeded experiment plan. Re-planning from the same config and seed
// reproduces it byte for byte.
struct RunManifest {
    std::string run_id;
    std::uint64_t seed = 0;
    RunMode mode = RunMode::scale_shot;
    std::vector<std::string> task_names; // registry order
    int n_task = 0;
    int n_shot = 0;
    std::vector<std::vector<int>> permutations; // of the first grid point
    int n_permutations = 0;
    int n_replicates = 0;
    std::vector<ControlledSetting> controlled_settings;
    std::string model;
    std::string endpoint_base_url;
    std::string tokenizer_id;
    double alpha = 0.05;
    std::string separator = "\n\n";
    std::size_t test_cap = 100;
    std::vector<int> grid;
    std::vector<GridPointPlan> grid_points;
    NiahConfig niah;

    nlohmann::json to_json() const;
    static RunManifest from_json(const nlohmann::json& doc);
    std::string canonical_text() const;
    std::string digest() const; // sha256 of canonical_text
};

// One (task, permutation, replicate) evaluation cell. `setting_index` points
// into manifest.controlled_settings for controlled mode, -1 otherwise.
// perm_index is -1 for single-task baseline cells.
struct CellRef {
    int grid_index = 0;
    SettingKind setting = SettingKind::single_task;
    int setting_index = -1;
    int task_index = 0;
    int perm_index = -1;
    int replicate = 0;
};

// One scored query: a cell plus a test-instance index. The prompt hash is
// filled in when the query text is materialized.
struct EvaluationUnit {
    CellRef cell;
    int instance_index = 0;
    std::string prompt_hash;
};

// P seeded Fisher-Yates permutations of [0, n_task), pairwise distinct
// whenever n_task! admits P distinct ones.
std::vector<std::vector<int>> sample_permutations(int n_task, int n_permutations,
                                                  std::uint64_t seed);

// Resolves the registry order for a config: explicit `tasks` when given,
// otherwise the sorted bundle directory names under task_registry.
std::vector<std::string> registry_task_names(const HarnessConfig& config);

RunManifest make_plan(const HarnessConfig& config);

// Deterministic cell stream, grouped so cells sharing a context prompt are
// contiguous (lifelong cells iterate tasks within a fixed (perm, replicate)).
std::vector<CellRef> enumerate_cells(const RunManifest& manifest);

// Few-shot sampling seed for (task, n_shot); shared across permutations and
// arms so single-task and lifelong cells pair by replicate.
std::uint64_t fewshot_seed(const RunManifest& manifest, const std::string& task_name,
                           int n_shot);

} // namespace haystack
