#pragma once

#include "haystack/prompt_builder.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace haystack {

enum class RunMode { scale_shot, scale_task, controlled, niah };

std::string mode_name(RunMode mode);
RunMode parse_mode(const std::string& name);

struct EndpointConfig {
    std::string base_url = "mock:";       // http(s)://host[:port] or mock:<script path>
    std::string model_name = "mock-model";
    std::string api_key_env_name;         // environment variable holding the key
    int max_parallel = 4;
    double request_timeout_s = 120.0;
    int max_retries = 5;
    int backoff_base_ms = 250;
    int logprob_top_k = 100;
    bool chat_style = false;              // POST /v1/chat/completions instead
};

struct NiahConfig {
    std::vector<int> context_lengths = {256, 512, 1024};
    std::vector<double> depths = {0.0, 0.25, 0.5, 0.75, 1.0};
    std::string needle =
        "The best thing to do in San Francisco is eat a sandwich and sit in "
        "Dolores Park on a sunny day.";
    std::string question = "What is the best thing to do in San Francisco?";
    int max_tokens = 64;
};

// Everything a run needs; loaded from a JSON file, overridable per field
// from the command line (flag > file > default).
struct HarnessConfig {
    std::filesystem::path task_registry;
    std::vector<std::string> tasks;       // explicit registry order; empty = sorted dirs
    RunMode mode = RunMode::scale_shot;
    std::vector<int> grid;                // shot counts or task counts; empty = mode default
    int n_shot = 2;
    int n_task = 0;                       // 0 = all registry tasks
    int n_permutations = 5;
    int n_replicates = 5;
    double alpha = 0.05;
    std::uint64_t seed = 20240501;
    std::size_t test_cap = 100;
    std::string separator = "\n\n";
    std::string tokenizer_id = "whitespace";
    bool depth_midpoint = false;
    int icl_effectiveness_kshot = 4;
    std::filesystem::path filler_corpus;
    std::filesystem::path output_dir = "runs/latest";
    std::filesystem::path cache_dir;      // empty = <output_dir>/cache
    std::vector<std::string> controlled_settings; // empty = all eight
    std::vector<int> repetitions;         // extra multi-epoch repeat settings
    EndpointConfig endpoint;
    NiahConfig niah;

    static HarnessConfig from_json(const nlohmann::json& doc);
    static HarnessConfig load(const std::filesystem::path& path);
    nlohmann::json to_json() const;

    std::filesystem::path effective_cache_dir() const {
        return cache_dir.empty() ? output_dir / "cache" : cache_dir;
    }
};

} // namespace haystack
