#pragma once

#include "haystack/config.hpp"
#include "haystack/experiment_plan.hpp"
#include "haystack/tokenizer.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace haystack {

// Prediction sentinel for queries where no option's first token appears in
// the returned top-k. Scored incorrect, counted separately.
inline constexpr const char* kNoMatch = "<NO_MATCH>";

struct LogprobEntry {
    std::string token;
    double logprob = 0.0;
};

struct LmResponse {
    enum class Kind { classification, generation };
    Kind kind = Kind::classification;
    std::vector<LogprobEntry> top_tokens; // descending logprob
    std::string completion_text;
    int prompt_tokens = 0;
    int completion_tokens = 0;
    bool cache_hit = false;
    bool logprob_fallback = false; // constrained-generation fallback used
};

// Append-only content-addressed response store:
// <dir>/<2-hex prefix>/<digest>.json. Concurrent readers, serialized writes.
class ResponseCache {
public:
    explicit ResponseCache(std::filesystem::path dir);

    static std::string make_key(const std::string& model, const std::string& prompt,
                                const std::string& params_canonical);

    std::optional<std::string> lookup(const std::string& key) const;
    void store(const std::string& key, const std::string& raw_response);
    std::size_t size() const;
    const std::filesystem::path& dir() const { return dir_; }

private:
    std::filesystem::path path_for(const std::string& key) const;
    std::filesystem::path dir_;
    mutable std::mutex write_mutex_;
};

// Wire-level completion transport. complete_raw returns the raw response
// body; throws EndpointUnavailableError after retries are exhausted.
class CompletionBackend {
public:
    virtual ~CompletionBackend() = default;
    virtual std::string complete_raw(const std::string& prompt,
                                     const nlohmann::json& params) = 0;
    virtual int network_requests() const = 0;
};

// Picks the transport from the base_url scheme: http(s):// talks the
// OpenAI-compatible protocol, mock:<script path> runs the scripted mock
// in-process.
std::unique_ptr<CompletionBackend> make_backend(const EndpointConfig& endpoint);

class LmClient {
public:
    LmClient(EndpointConfig endpoint, TokenizerPtr tokenizer,
             ResponseCache* cache = nullptr);

    // Rank classification: the option whose first token scores highest among
    // the returned next-token candidates.
    std::pair<std::string, LmResponse> classify(const std::string& query_text,
                                                const std::vector<std::string>& options);

    std::pair<std::string, LmResponse> generate(const std::string& query_text,
                                                int max_tokens);

    int network_requests() const { return backend_->network_requests(); }
    const EndpointConfig& endpoint() const { return endpoint_; }

    // Decoding parameters as sent on the wire; unit prompt hashes and cache
    // keys are digests over (model, query text, these parameters).
    static nlohmann::json classification_params(int logprob_top_k);
    static nlohmann::json generation_params(int max_tokens);

private:
    std::string complete_cached(const std::string& prompt, const nlohmann::json& params,
                                bool& cache_hit);
    std::pair<std::string, LmResponse> classify_by_generation(
        const std::string& query_text, const std::vector<std::string>& options,
        LmResponse response);

    EndpointConfig endpoint_;
    TokenizerPtr tokenizer_;
    ResponseCache* cache_;
    std::unique_ptr<CompletionBackend> backend_;
};

// One query ready for dispatch. Classification when `options` is nonempty,
// generation otherwise. group_key marks queries sharing a context prompt.
struct DispatchRequest {
    EvaluationUnit unit;
    std::string query_text;
    std::vector<std::string> options;
    std::string gold;
    int max_tokens = 1;
    std::string group_key;
};

struct DispatchResult {
    EvaluationUnit unit;
    std::string predicted;
    LmResponse response;
    bool ok = true;
    std::string error;
};

// Runs requests with at most endpoint.max_parallel in flight. Requests with
// equal group_key stay contiguous (same worker) so server-side prefix caches
// see them back to back. Per-request failures are reported, not fatal.
std::vector<DispatchResult> dispatch_batch(const std::vector<DispatchRequest>& requests,
                                           LmClient& client);

} // namespace haystack
