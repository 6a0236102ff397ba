#include "haystack/results_store.hpp"

#include "haystack/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>

namespace haystack {

namespace {
using nlohmann::json;
const char* kResultsFile = "results.jsonl";
} // namespace

json UnitRecord::to_json() const {
    json doc;
    doc["grid_index"] = grid_index;
    doc["setting"] = setting_name(setting);
    if (setting_index >= 0) doc["setting_index"] = setting_index;
    doc["task_index"] = task_index;
    doc["perm_index"] = perm_index;
    doc["replicate"] = replicate;
    doc["instance_index"] = instance_index;
    doc["prompt_hash"] = prompt_hash;
    doc["prediction"] = prediction;
    doc["gold"] = gold;
    doc["value"] = value;
    doc["no_match"] = no_match;
    doc["depth"] = depth;
    doc["context_tokens"] = context_tokens;
    return doc;
}

UnitRecord UnitRecord::from_json(const json& doc) {
    UnitRecord r;
    r.grid_index = doc.at("grid_index").get<int>();
    r.setting = parse_setting(doc.at("setting").get<std::string>());
    r.setting_index = doc.value("setting_index", -1);
    r.task_index = doc.at("task_index").get<int>();
    r.perm_index = doc.at("perm_index").get<int>();
    r.replicate = doc.at("replicate").get<int>();
    r.instance_index = doc.at("instance_index").get<int>();
    r.prompt_hash = doc.at("prompt_hash").get<std::string>();
    r.prediction = doc.at("prediction").get<std::string>();
    r.gold = doc.at("gold").get<std::string>();
    r.value = doc.at("value").get<double>();
    r.no_match = doc.at("no_match").get<bool>();
    r.depth = doc.at("depth").get<double>();
    r.context_tokens = doc.at("context_tokens").get<int>();
    return r;
}

ResultsStore::ResultsStore(std::filesystem::path run_dir, std::string manifest_digest)
    : run_dir_(std::move(run_dir)), manifest_digest_(std::move(manifest_digest)) {
    std::filesystem::create_directories(run_dir_);
}

ResultsStore ResultsStore::open(const std::filesystem::path& run_dir) {
    std::ifstream manifest_in(run_dir / "manifest.json");
    if (!manifest_in) throw MissingFileError((run_dir / "manifest.json").string());
    json manifest_doc;
    manifest_in >> manifest_doc;
    RunManifest manifest = RunManifest::from_json(manifest_doc);

    ResultsStore store(run_dir, manifest.digest());
    std::ifstream in(run_dir / kResultsFile);
    if (in) {
        std::string line;
        int line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            json doc;
            try {
                doc = json::parse(line);
            } catch (const json::exception& e) {
                throw MalformedRecordError((run_dir / kResultsFile).string(), line_no, e.what());
            }
            store.record_checked(UnitRecord::from_json(doc));
        }
    }
    return store;
}

void ResultsStore::record(const UnitRecord& record, const std::string& manifest_digest) {
    if (manifest_digest != manifest_digest_) {
        throw ManifestMismatchError("record produced under " + manifest_digest.substr(0, 12) +
                                    ", store expects " + manifest_digest_.substr(0, 12));
    }
    record_checked(record);
}

void ResultsStore::record_checked(const UnitRecord& record) {
    if (record.value < 0.0 || record.value > 1.0) {
        throw HaystackError("record value " + std::to_string(record.value) +
                            " outside [0,1]");
    }
    if (record.prompt_hash.empty()) throw HaystackError("record has no prompt hash");
    if (by_key_.count(record.order_key())) return; // idempotent append
    by_key_.emplace(record.order_key(), records_.size());
    records_.push_back(record);
}

std::vector<UnitRecord> ResultsStore::sorted_records() const {
    std::vector<UnitRecord> sorted = records_;
    std::sort(sorted.begin(), sorted.end(), [](const UnitRecord& a, const UnitRecord& b) {
        return a.order_key() < b.order_key();
    });
    return sorted;
}

void ResultsStore::save() const {
    auto path = run_dir_ / kResultsFile;
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        for (const auto& record : sorted_records()) {
            out << record.to_json().dump() << '\n';
        }
    }
    std::filesystem::rename(tmp, path);
}

} // namespace haystack
