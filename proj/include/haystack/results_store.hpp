#pragma once

#include "haystack/experiment_plan.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace haystack {

// Outcome of one scored query. `value` is the correctness indicator for
// classification cells and the token recall for NIAH cells.
struct UnitRecord {
    int grid_index = 0;
    SettingKind setting = SettingKind::single_task;
    int setting_index = -1;
    int task_index = 0;
    int perm_index = -1;
    int replicate = 0;
    int instance_index = 0;
    std::string prompt_hash;
    std::string prediction;
    std::string gold;
    double value = 0.0;
    bool no_match = false;
    double depth = 0.0;
    int context_tokens = 0;

    // Canonical ordering key and the store's unit identity. Distinct units
    // can legitimately carry identical prompt text (a shuffled repeat copy
    // can reproduce the unshuffled order), so coordinates, not the prompt
    // hash, identify a record.
    auto order_key() const {
        return std::tuple(grid_index, setting_index, static_cast<int>(setting), perm_index,
                          replicate, task_index, instance_index);
    }

    nlohmann::json to_json() const;
    static UnitRecord from_json(const nlohmann::json& doc);
};

// Append-only per-run record set, persisted as results.jsonl in canonical
// order. Every record is tied to the manifest digest it was produced under.
class ResultsStore {
public:
    ResultsStore(std::filesystem::path run_dir, std::string manifest_digest);

    // Loads manifest digest and any existing results from `run_dir`.
    static ResultsStore open(const std::filesystem::path& run_dir);

    // Idempotent: re-recording an existing unit is a no-op. Rejects records
    // whose value lies outside [0,1] or whose digest differs.
    void record(const UnitRecord& record, const std::string& manifest_digest);
    void record(const UnitRecord& record) { record_checked(record); }

    bool has(const UnitRecord& unit) const { return by_key_.count(unit.order_key()) > 0; }
    std::size_t size() const { return records_.size(); }
    std::vector<UnitRecord> sorted_records() const;

    const std::string& manifest_digest() const { return manifest_digest_; }
    const std::filesystem::path& run_dir() const { return run_dir_; }

    // Rewrites results.jsonl atomically in canonical order.
    void save() const;

private:
    void record_checked(const UnitRecord& record);

    using UnitKey = std::tuple<int, int, int, int, int, int, int>;
    std::filesystem::path run_dir_;
    std::string manifest_digest_;
    std::map<UnitKey, std::size_t> by_key_;
    std::vector<UnitRecord> records_;
};

} // namespace haystack
