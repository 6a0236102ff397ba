#include "haystack/lm_client.hpp"

#include "haystack/digest.hpp"
#include "haystack/errors.hpp"
#include "haystack/mock_lm.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <thread>

namespace haystack {

namespace {

using nlohmann::json;

std::string trim_left(std::string_view s) {
    std::size_t i = 0;
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\n')) ++i;
    return std::string(s.substr(i));
}

class HttpBackend final : public CompletionBackend {
public:
    explicit HttpBackend(EndpointConfig endpoint) : endpoint_(std::move(endpoint)) {}

    std::string complete_raw(const std::string& prompt, const json& params) override {
        json body = params;
        body["model"] = endpoint_.model_name;
        const bool chat = endpoint_.chat_style;
        if (chat) {
            body["messages"] = json::array({{{"role", "user"}, {"content", prompt}}});
            body.erase("echo");
            if (body.contains("logprobs") && body["logprobs"].is_number()) {
                body["top_logprobs"] = body["logprobs"];
                body["logprobs"] = true;
            }
        } else {
            body["prompt"] = prompt;
        }
        const std::string path = chat ? "/v1/chat/completions" : "/v1/completions";
        const std::string payload = body.dump();

        std::string last_error;
        for (int attempt = 0; attempt <= endpoint_.max_retries; ++attempt) {
            if (attempt > 0) {
                auto backoff = std::chrono::milliseconds(
                    endpoint_.backoff_base_ms * (1LL << (attempt - 1)));
                std::this_thread::sleep_for(backoff);
            }
            httplib::Client client(endpoint_.base_url);
            client.set_connection_timeout(std::chrono::duration<double>(endpoint_.request_timeout_s));
            client.set_read_timeout(std::chrono::duration<double>(endpoint_.request_timeout_s));
            if (!endpoint_.api_key_env_name.empty()) {
                if (const char* key = std::getenv(endpoint_.api_key_env_name.c_str())) {
                    client.set_default_headers({{"Authorization", std::string("Bearer ") + key}});
                }
            }
            ++requests_;
            auto res = client.Post(path, payload, "application/json");
            if (!res) {
                last_error = "transport: " + httplib::to_string(res.error());
                continue; // network failures are retryable
            }
            if (res->status == 200) return res->body;
            last_error = "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200);
            bool retryable = res->status == 429 || res->status >= 500;
            if (!retryable) break;
        }
        throw EndpointUnavailableError(last_error);
    }

    int network_requests() const override { return requests_.load(); }

private:
    EndpointConfig endpoint_;
    std::atomic<int> requests_{0};
};

class MockBackend final : public CompletionBackend {
public:
    explicit MockBackend(const EndpointConfig& endpoint)
        : sampler_(MockScript::load(endpoint.base_url.substr(5))) {}

    std::string complete_raw(const std::string& prompt, const json& params) override {
        json body = params;
        body["prompt"] = prompt;
        ++requests_;
        return sampler_.complete_raw(body);
    }

    int network_requests() const override { return requests_.load(); }

private:
    MockSampler sampler_;
    std::atomic<int> requests_{0};
};

// Lifts the first generated position's candidates out of either wire shape.
std::vector<LogprobEntry> parse_top_tokens(const json& doc, bool chat) {
    const json& choice = doc.at("choices").at(0);
    std::vector<LogprobEntry> out;
    if (!choice.contains("logprobs") || choice["logprobs"].is_null()) {
        throw LogprobsUnsupportedError("response carries no logprobs block");
    }
    const json& lp = choice["logprobs"];
    if (!chat) {
        if (!lp.contains("top_logprobs") || lp["top_logprobs"].empty()) {
            throw LogprobsUnsupportedError("empty top_logprobs");
        }
        for (const auto& [token, value] : lp["top_logprobs"].at(0).items()) {
            out.push_back({token, value.get<double>()});
        }
    } else {
        if (!lp.contains("content") || lp["content"].empty()) {
            throw LogprobsUnsupportedError("empty chat logprobs content");
        }
        for (const auto& entry : lp["content"].at(0).at("top_logprobs")) {
            out.push_back({entry.at("token").get<std::string>(), entry.at("logprob").get<double>()});
        }
    }
    std::stable_sort(out.begin(), out.end(), [](const LogprobEntry& a, const LogprobEntry& b) {
        if (a.logprob != b.logprob) return a.logprob > b.logprob;
        return a.token < b.token;
    });
    return out;
}

std::string parse_completion_text(const json& doc, bool chat) {
    const json& choice = doc.at("choices").at(0);
    if (chat) return choice.at("message").at("content").get<std::string>();
    return choice.at("text").get<std::string>();
}

void parse_usage(const json& doc, LmResponse& response) {
    if (doc.contains("usage")) {
        const json& u = doc["usage"];
        if (u.contains("prompt_tokens")) response.prompt_tokens = u["prompt_tokens"].get<int>();
        if (u.contains("completion_tokens")) {
            response.completion_tokens = u["completion_tokens"].get<int>();
        }
    }
}

} // namespace

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
}

std::string ResponseCache::make_key(const std::string& model, const std::string& prompt,
                                    const std::string& params_canonical) {
    std::string material;
    material.reserve(model.size() + prompt.size() + params_canonical.size() + 2);
    material += model;
    material += '\x1f';
    material += prompt;
    material += '\x1f';
    material += params_canonical;
    return sha256_hex(material);
}

std::filesystem::path ResponseCache::path_for(const std::string& key) const {
    return dir_ / key.substr(0, 2) / (key + ".json");
}

std::optional<std::string> ResponseCache::lookup(const std::string& key) const {
    std::ifstream in(path_for(key), std::ios::binary);
    if (!in) return std::nullopt;
    std::string body((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return body;
}

void ResponseCache::store(const std::string& key, const std::string& raw_response) {
    std::lock_guard<std::mutex> lock(write_mutex_);
    auto path = path_for(key);
    if (std::filesystem::exists(path)) return; // append-only, first write wins
    std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        out << raw_response;
    }
    std::filesystem::rename(tmp, path);
}

std::size_t ResponseCache::size() const {
    std::size_t n = 0;
    if (!std::filesystem::exists(dir_)) return 0;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(dir_)) {
        if (entry.is_regular_file() && entry.path().extension() == ".json") ++n;
    }
    return n;
}

std::unique_ptr<CompletionBackend> make_backend(const EndpointConfig& endpoint) {
    if (endpoint.base_url.rfind("mock:", 0) == 0) {
        return std::make_unique<MockBackend>(endpoint);
    }
    return std::make_unique<HttpBackend>(endpoint);
}

LmClient::LmClient(EndpointConfig endpoint, TokenizerPtr tokenizer, ResponseCache* cache)
    : endpoint_(std::move(endpoint)),
      tokenizer_(std::move(tokenizer)),
      cache_(cache),
      backend_(make_backend(endpoint_)) {}

std::string LmClient::complete_cached(const std::string& prompt, const json& params,
                                      bool& cache_hit) {
    const std::string key =
        ResponseCache::make_key(endpoint_.model_name, prompt, params.dump());
    if (cache_ != nullptr) {
        if (auto hit = cache_->lookup(key)) {
            cache_hit = true;
            return *hit;
        }
    }
    cache_hit = false;
    std::string raw = backend_->complete_raw(prompt, params);
    if (cache_ != nullptr) cache_->store(key, raw);
    return raw;
}

json LmClient::classification_params(int logprob_top_k) {
    return json{{"max_tokens", 1},
                {"temperature", 0},
                {"logprobs", logprob_top_k},
                {"echo", false}};
}

json LmClient::generation_params(int max_tokens) {
    return json{{"max_tokens", max_tokens}, {"temperature", 0}};
}

std::pair<std::string, LmResponse> LmClient::classify(const std::string& query_text,
                                                      const std::vector<std::string>& options) {
    json params = classification_params(endpoint_.logprob_top_k);
    LmResponse response;
    response.kind = LmResponse::Kind::classification;

    std::string raw = complete_cached(query_text, params, response.cache_hit);
    json doc = json::parse(raw);

    try {
        response.top_tokens = parse_top_tokens(doc, endpoint_.chat_style);
    } catch (const LogprobsUnsupportedError&) {
        // Endpoint cannot rank tokens: constrained short generation and a
        // longest-prefix match against the options instead.
        return classify_by_generation(query_text, options, response);
    }
    parse_usage(doc, response);

    // First token of each option under the configured tokenizer, matched
    // against the candidate list modulo leading whitespace.
    std::string best_option;
    double best_logprob = -std::numeric_limits<double>::infinity();
    for (const auto& option : options) {
        auto first = tokenizer_->first_token(option);
        if (!first) continue;
        for (const auto& entry : response.top_tokens) {
            if (entry.token == *first || trim_left(entry.token) == *first) {
                if (entry.logprob > best_logprob ||
                    (entry.logprob == best_logprob && option < best_option)) {
                    best_logprob = entry.logprob;
                    best_option = option;
                }
                break;
            }
        }
    }
    if (best_option.empty()) best_option = kNoMatch;
    return {best_option, response};
}

std::pair<std::string, LmResponse> LmClient::classify_by_generation(
    const std::string& query_text, const std::vector<std::string>& options,
    LmResponse response) {
    json params = generation_params(4);
    bool cache_hit = false;
    std::string raw = complete_cached(query_text, params, cache_hit);
    json doc = json::parse(raw);
    response.kind = LmResponse::Kind::classification;
    response.cache_hit = response.cache_hit && cache_hit;
    response.logprob_fallback = true;
    response.completion_text = parse_completion_text(doc, endpoint_.chat_style);
    parse_usage(doc, response);

    std::string completion = trim_left(response.completion_text);
    std::string best_option;
    std::size_t best_len = 0;
    for (const auto& option : options) {
        if (completion.rfind(option, 0) == 0 && option.size() > best_len) {
            best_option = option;
            best_len = option.size();
        }
    }
    if (best_option.empty()) best_option = kNoMatch;
    return {best_option, response};
}

std::pair<std::string, LmResponse> LmClient::generate(const std::string& query_text,
                                                      int max_tokens) {
    json params = generation_params(max_tokens);
    LmResponse response;
    response.kind = LmResponse::Kind::generation;
    if (max_tokens <= 0) return {"", response};
    std::string raw = complete_cached(query_text, params, response.cache_hit);
    json doc = json::parse(raw);
    response.completion_text = parse_completion_text(doc, endpoint_.chat_style);
    parse_usage(doc, response);
    return {response.completion_text, response};
}

std::vector<DispatchResult> dispatch_batch(const std::vector<DispatchRequest>& requests,
                                           LmClient& client) {
    std::vector<DispatchResult> results(requests.size());

    // Contiguous runs of equal group_key form work items; one worker owns a
    // whole run so a server-side prefix cache sees its queries back to back.
    std::vector<std::pair<std::size_t, std::size_t>> groups;
    for (std::size_t i = 0; i < requests.size();) {
        std::size_t j = i + 1;
        while (j < requests.size() && requests[j].group_key == requests[i].group_key) ++j;
        groups.emplace_back(i, j);
        i = j;
    }

    std::atomic<std::size_t> next_group{0};
    auto worker = [&] {
        while (true) {
            std::size_t g = next_group.fetch_add(1);
            if (g >= groups.size()) return;
            for (std::size_t i = groups[g].first; i < groups[g].second; ++i) {
                const DispatchRequest& req = requests[i];
                DispatchResult& res = results[i];
                res.unit = req.unit;
                try {
                    if (!req.options.empty()) {
                        auto [predicted, response] = client.classify(req.query_text, req.options);
                        res.predicted = std::move(predicted);
                        res.response = std::move(response);
                    } else {
                        auto [text, response] = client.generate(req.query_text, req.max_tokens);
                        res.predicted = std::move(text);
                        res.response = std::move(response);
                    }
                } catch (const std::exception& e) {
                    res.ok = false;
                    res.error = e.what();
                }
            }
        }
    };

    int n_workers = std::max(1, client.endpoint().max_parallel);
    if (n_workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(n_workers));
        for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    return results;
}

} // namespace haystack
