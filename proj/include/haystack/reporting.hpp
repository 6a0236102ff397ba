#pragma once

#include "haystack/experiment_plan.hpp"
#include "haystack/results_store.hpp"
#include "haystack/stats.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace haystack {

// Scored view of one grid point: the (t,p,r)/(t,r) accuracy matrices reduced
// to verdicts plus the pass-rate aggregates.
struct GridPointScore {
    int grid_index = 0;
    int grid_value = 0;
    int n_task = 0;
    int n_shot = 0;
    double mean_single_acc = 0.0;
    double mean_lifelong_acc = 0.0;
    double mean_context_tokens = 0.0;
    int no_match_count = 0; // queries where no option token surfaced in top-k
    std::vector<CellVerdict> verdicts;
    PassRateSummary summary;
};

struct ControlledSettingScore {
    int setting_index = 0;
    std::string setting;
    int repetitions = 0; // 0 = length-matched
    double mean_acc = 0.0;
    std::map<std::string, double> by_task;
};

struct NiahCellScore {
    int length_index = 0;
    int depth_index = 0;
    int context_length = 0;
    double depth = 0.0;
    double recall = 0.0;
};

struct RunScore {
    std::string manifest_digest;
    double alpha = 0.05;
    std::vector<GridPointScore> points;
    std::vector<ControlledSettingScore> controlled;
    std::vector<NiahCellScore> niah_cells;
    // ICL-effectiveness split (scale_shot runs whose grid covers 1 and k).
    std::optional<nlohmann::json> icl_effectiveness;
};

// Reduces per-unit records to per-cell accuracies and verdicts. Missing
// cells surface as MissingCellsError.
RunScore score_results(const RunManifest& manifest, const ResultsStore& store,
                       double alpha, int icl_kshot = 4);

void write_verdicts(const RunScore& score, const std::filesystem::path& run_dir);
void write_summary(const RunScore& score, const RunManifest& manifest,
                   const std::filesystem::path& run_dir);

// x-axis: context-length bins; y-axis: depth bins; NaN cells are NA. Values
// are verdict scores in [-1,1] (FAIL=-1, PASS=0, EXCEL=+1) or recall in
// [0,1] when `continuous`.
struct HeatmapGrid {
    std::vector<std::string> x_labels;
    std::vector<std::string> y_labels;
    std::vector<std::vector<double>> values; // [y][x]
    bool continuous = false;
    std::string title;
};

HeatmapGrid build_verdict_heatmap(const RunManifest& manifest, const RunScore& score);
HeatmapGrid build_niah_heatmap(const RunManifest& manifest, const RunScore& score);

void emit_heatmap(const HeatmapGrid& grid, const std::filesystem::path& csv_path,
                  const std::filesystem::path& svg_path);

// Fine-grained diagnostic report: n x n task-by-index verdict matrix,
// per-permutation strips, per-task and per-index marginals, fail/excel
// histograms. The CSV bundle covers every grid point; the SVG renders the
// last (longest-context) one.
void emit_diagnostic_report(const RunManifest& manifest, const RunScore& score,
                            const std::filesystem::path& csv_path,
                            const std::filesystem::path& svg_path);

void emit_histogram_csv(const RunScore& score, const std::filesystem::path& csv_path);

// Per grid point: mean single-task accuracy, mean lifelong accuracy, overall
// pass rate.
nlohmann::json run_summary_json(const RunScore& score, const RunManifest& manifest);

// "8k"-style label for a measured mean token count.
std::string token_count_label(double mean_tokens);

} // namespace haystack
