#include "haystack/config.hpp"

#include "haystack/errors.hpp"

#include <nlohmann/json.hpp>

#include <fstream>

namespace haystack {

namespace {

using nlohmann::json;

template <typename T>
void read_field(const json& doc, const char* key, T& out) {
    if (doc.contains(key)) out = doc[key].get<T>();
}

void read_path(const json& doc, const char* key, std::filesystem::path& out) {
    if (doc.contains(key)) out = doc[key].get<std::string>();
}

} // namespace

std::string mode_name(RunMode mode) {
    switch (mode) {
        case RunMode::scale_shot: return "scale_shot";
        case RunMode::scale_task: return "scale_task";
        case RunMode::controlled: return "controlled";
        case RunMode::niah: return "niah";
    }
    return "?";
}

RunMode parse_mode(const std::string& name) {
    if (name == "scale_shot") return RunMode::scale_shot;
    if (name == "scale_task") return RunMode::scale_task;
    if (name == "controlled") return RunMode::controlled;
    if (name == "niah") return RunMode::niah;
    throw ConfigError("unknown mode: " + name);
}

HarnessConfig HarnessConfig::from_json(const json& doc) {
    HarnessConfig config;
    read_path(doc, "task_registry", config.task_registry);
    read_field(doc, "tasks", config.tasks);
    if (doc.contains("mode")) config.mode = parse_mode(doc["mode"].get<std::string>());
    read_field(doc, "grid", config.grid);
    read_field(doc, "n_shot", config.n_shot);
    read_field(doc, "n_task", config.n_task);
    read_field(doc, "permutations", config.n_permutations);
    read_field(doc, "replicates", config.n_replicates);
    read_field(doc, "alpha", config.alpha);
    read_field(doc, "seed", config.seed);
    read_field(doc, "test_cap", config.test_cap);
    read_field(doc, "separator", config.separator);
    read_field(doc, "tokenizer", config.tokenizer_id);
    read_field(doc, "depth_midpoint", config.depth_midpoint);
    read_field(doc, "icl_effectiveness_kshot", config.icl_effectiveness_kshot);
    read_path(doc, "filler_corpus", config.filler_corpus);
    read_path(doc, "output_dir", config.output_dir);
    read_path(doc, "cache_dir", config.cache_dir);
    read_field(doc, "controlled_settings", config.controlled_settings);
    read_field(doc, "repetitions", config.repetitions);

    if (doc.contains("endpoint")) {
        const json& ep = doc["endpoint"];
        read_field(ep, "base_url", config.endpoint.base_url);
        read_field(ep, "model", config.endpoint.model_name);
        read_field(ep, "model_name", config.endpoint.model_name);
        read_field(ep, "api_key_env", config.endpoint.api_key_env_name);
        read_field(ep, "max_parallel", config.endpoint.max_parallel);
        read_field(ep, "request_timeout_s", config.endpoint.request_timeout_s);
        read_field(ep, "max_retries", config.endpoint.max_retries);
        read_field(ep, "backoff_base_ms", config.endpoint.backoff_base_ms);
        read_field(ep, "logprob_top_k", config.endpoint.logprob_top_k);
        read_field(ep, "chat_style", config.endpoint.chat_style);
    }
    if (doc.contains("niah")) {
        const json& nh = doc["niah"];
        read_field(nh, "context_lengths", config.niah.context_lengths);
        read_field(nh, "depths", config.niah.depths);
        read_field(nh, "needle", config.niah.needle);
        read_field(nh, "question", config.niah.question);
        read_field(nh, "max_tokens", config.niah.max_tokens);
    }

    if (config.endpoint.max_parallel < 1) throw ConfigError("endpoint.max_parallel must be >= 1");
    if (config.n_permutations < 1) throw ConfigError("permutations must be >= 1");
    if (config.n_replicates < 1) throw ConfigError("replicates must be >= 1");
    if (!(config.alpha > 0.0 && config.alpha < 1.0)) throw ConfigError("alpha must be in (0,1)");
    return config;
}

HarnessConfig HarnessConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw MissingFileError(path.string());
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return from_json(doc);
}

nlohmann::json HarnessConfig::to_json() const {
    json doc;
    doc["task_registry"] = task_registry.string();
    if (!tasks.empty()) doc["tasks"] = tasks;
    doc["mode"] = mode_name(mode);
    if (!grid.empty()) doc["grid"] = grid;
    doc["n_shot"] = n_shot;
    if (n_task > 0) doc["n_task"] = n_task;
    doc["permutations"] = n_permutations;
    doc["replicates"] = n_replicates;
    doc["alpha"] = alpha;
    doc["seed"] = seed;
    doc["test_cap"] = test_cap;
    doc["separator"] = separator;
    doc["tokenizer"] = tokenizer_id;
    doc["depth_midpoint"] = depth_midpoint;
    doc["icl_effectiveness_kshot"] = icl_effectiveness_kshot;
    if (!filler_corpus.empty()) doc["filler_corpus"] = filler_corpus.string();
    doc["output_dir"] = output_dir.string();
    if (!cache_dir.empty()) doc["cache_dir"] = cache_dir.string();
    if (!controlled_settings.empty()) doc["controlled_settings"] = controlled_settings;
    if (!repetitions.empty()) doc["repetitions"] = repetitions;
    doc["endpoint"] = {
        {"base_url", endpoint.base_url},
        {"model", endpoint.model_name},
        {"api_key_env", endpoint.api_key_env_name},
        {"max_parallel", endpoint.max_parallel},
        {"request_timeout_s", endpoint.request_timeout_s},
        {"max_retries", endpoint.max_retries},
        {"backoff_base_ms", endpoint.backoff_base_ms},
        {"logprob_top_k", endpoint.logprob_top_k},
        {"chat_style", endpoint.chat_style},
    };
    doc["niah"] = {
        {"context_lengths", niah.context_lengths},
        {"depths", niah.depths},
        {"needle", niah.needle},
        {"question", niah.question},
        {"max_tokens", niah.max_tokens},
    };
    return doc;
}

} // namespace haystack
