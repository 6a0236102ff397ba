#include "haystack/lm_client.hpp"

#include "haystack/errors.hpp"
#include "haystack/mock_lm.hpp"
#include "haystack/prompt_builder.hpp"
#include "support/fixtures.hpp"

#include <doctest.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <thread>

using namespace haystack;
using nlohmann::json;

namespace {

struct ClientFixture {
    fixtures::TempDir dir{"client"};
    std::filesystem::path registry;
    std::filesystem::path script_path;
    TaskBundle bundle;
    FewShotSample sample;
    WhitespaceTokenizer tokenizer;

    explicit ClientFixture(const std::string& rules = R"([{"accuracy":1.0}])",
                           const std::string& generation = "") {
        registry = fixtures::write_registry(dir.path() / "tasks", 2);
        script_path = dir.path() / "script.json";
        fixtures::write_mock_script(script_path, rules, registry, 7, generation);
        bundle = load_task_bundle(registry / "task00");
        sample = sample_fewshot_sets(bundle.spec, bundle.train_pool, 2, 1, 5)[0];
    }

    EndpointConfig endpoint() const {
        EndpointConfig ep;
        ep.base_url = "mock:" + script_path.string();
        ep.model_name = "mock-model";
        ep.max_parallel = 2;
        return ep;
    }

    std::string query(int instance) const {
        auto context = build_single_task_prompt(bundle.spec, sample, tokenizer);
        return build_query(context, bundle.spec,
                           bundle.test_set.instances[static_cast<std::size_t>(instance)].inputs);
    }
};

} // namespace

TEST_CASE("classify: argmax over option first tokens") {
    ClientFixture fx;
    LmClient client(fx.endpoint(), std::make_shared<WhitespaceTokenizer>());
    auto [predicted, response] = client.classify(fx.query(0), fx.bundle.spec.options);
    CHECK(predicted == fx.bundle.test_set.instances[0].label);
    CHECK(response.kind == LmResponse::Kind::classification);
    CHECK(!response.top_tokens.empty());
    // top_tokens sorted by descending logprob
    for (std::size_t i = 1; i < response.top_tokens.size(); ++i) {
        CHECK(response.top_tokens[i - 1].logprob >= response.top_tokens[i].logprob);
    }
    CHECK(!response.cache_hit);
}

TEST_CASE("classify is invariant to option order") {
    ClientFixture fx;
    LmClient client(fx.endpoint(), std::make_shared<WhitespaceTokenizer>());
    auto options = fx.bundle.spec.options;
    auto [a, _] = client.classify(fx.query(1), options);
    std::reverse(options.begin(), options.end());
    auto [b, __] = client.classify(fx.query(1), options);
    CHECK(a == b);
}

TEST_CASE("classify: no option token in top-k gives NO_MATCH") {
    ClientFixture fx;
    LmClient client(fx.endpoint(), std::make_shared<WhitespaceTokenizer>());
    auto [predicted, response] =
        client.classify(fx.query(0), {"Zebra", "Quartz"}); // tokens the mock never emits
    CHECK(predicted == kNoMatch);
    CHECK(!response.top_tokens.empty());
}

TEST_CASE("generate: echo rule returns the planted line; max_tokens 0 is empty") {
    ClientFixture fx(R"([{"accuracy":1.0}])",
                     R"([{"pattern":"magic phrase","mode":"echo_line"}])");
    LmClient client(fx.endpoint(), std::make_shared<WhitespaceTokenizer>());
    std::string prompt = "filler\nthe magic phrase lives here.\nmore filler\n\nquestion?";
    auto [text, response] = client.generate(prompt, 32);
    CHECK(text == "the magic phrase lives here.");
    CHECK(response.kind == LmResponse::Kind::generation);

    auto [empty, _] = client.generate(prompt, 0);
    CHECK(empty.empty());
}

TEST_CASE("response cache: layout, hit path, append-only") {
    ClientFixture fx;
    ResponseCache cache(fx.dir.path() / "cache");
    EndpointConfig ep = fx.endpoint();
    LmClient client(ep, std::make_shared<WhitespaceTokenizer>(), &cache);

    auto q = fx.query(0);
    auto [first, r1] = client.classify(q, fx.bundle.spec.options);
    CHECK(!r1.cache_hit);
    CHECK(client.network_requests() == 1);
    CHECK(cache.size() == 1);

    auto [second, r2] = client.classify(q, fx.bundle.spec.options);
    CHECK(second == first);
    CHECK(r2.cache_hit);
    CHECK(client.network_requests() == 1); // identical key never re-hits the network

    // <cache>/<2-hex>/<digest>.json layout
    auto key = ResponseCache::make_key(ep.model_name, q,
                                       LmClient::classification_params(ep.logprob_top_k).dump());
    CHECK(std::filesystem::exists(fx.dir.path() / "cache" / key.substr(0, 2) /
                                  (key + ".json")));

    // First write wins; storing again under the same key is a no-op.
    cache.store(key, "{\"overwritten\": true}");
    CHECK(cache.lookup(key)->find("overwritten") == std::string::npos);
}

TEST_CASE("cache keys separate models, prompts and decoding parameters") {
    auto params = LmClient::classification_params(100).dump();
    auto base = ResponseCache::make_key("m", "prompt", params);
    CHECK(ResponseCache::make_key("m2", "prompt", params) != base);
    CHECK(ResponseCache::make_key("m", "prompt2", params) != base);
    CHECK(ResponseCache::make_key("m", "prompt",
                                  LmClient::classification_params(50).dump()) != base);
    CHECK(ResponseCache::make_key("m", "prompt", params) == base);
}

TEST_CASE("dispatch_batch: cache arithmetic and parallel determinism") {
    ClientFixture fx;
    auto make_requests = [&] {
        std::vector<DispatchRequest> requests;
        for (int i = 0; i < 10; ++i) {
            DispatchRequest req;
            req.query_text = fx.query(i % 5);
            req.options = fx.bundle.spec.options;
            req.gold = fx.bundle.test_set.instances[static_cast<std::size_t>(i % 5)].label;
            req.group_key = "g" + std::to_string(i % 2);
            req.unit.instance_index = i;
            requests.push_back(std::move(req));
        }
        return requests;
    };

    // Warm 20% of the distinct prompts, then count network traffic.
    ResponseCache cache(fx.dir.path() / "cache2");
    {
        EndpointConfig ep = fx.endpoint();
        LmClient warm(ep, std::make_shared<WhitespaceTokenizer>(), &cache);
        warm.classify(fx.query(0), fx.bundle.spec.options);
        CHECK(warm.network_requests() == 1);
    }
    EndpointConfig ep = fx.endpoint();
    LmClient client(ep, std::make_shared<WhitespaceTokenizer>(), &cache);
    auto results = dispatch_batch(make_requests(), client);
    REQUIRE(results.size() == 10);
    // 5 distinct prompts, 1 already cached -> exactly 4 network requests.
    CHECK(client.network_requests() == 4);
    for (const auto& result : results) CHECK(result.ok);

    // Sequential run produces identical predictions.
    EndpointConfig seq = fx.endpoint();
    seq.max_parallel = 1;
    LmClient sequential(seq, std::make_shared<WhitespaceTokenizer>(), &cache);
    auto sequential_results = dispatch_batch(make_requests(), sequential);
    CHECK(sequential.network_requests() == 0); // all cached now
    for (std::size_t i = 0; i < results.size(); ++i) {
        CHECK(results[i].predicted == sequential_results[i].predicted);
    }
}

TEST_CASE("dispatch_batch: failures are reported per unit, batch completes") {
    EndpointConfig ep;
    ep.base_url = "http://127.0.0.1:9"; // nothing listens on the discard port
    ep.max_retries = 0;
    ep.request_timeout_s = 2;
    ep.max_parallel = 2;
    LmClient client(ep, std::make_shared<WhitespaceTokenizer>());

    std::vector<DispatchRequest> requests(3);
    for (int i = 0; i < 3; ++i) {
        requests[static_cast<std::size_t>(i)].query_text = "q" + std::to_string(i);
        requests[static_cast<std::size_t>(i)].options = {"A", "B"};
        requests[static_cast<std::size_t>(i)].group_key = std::to_string(i);
    }
    auto results = dispatch_batch(requests, client);
    REQUIRE(results.size() == 3);
    for (const auto& result : results) {
        CHECK(!result.ok);
        CHECK(!result.error.empty());
    }
}

TEST_CASE("http transport against the mock server, including chat shape") {
    ClientFixture fx;
    MockServer server(MockScript::load(fx.script_path), 18437);
    server.start();

    EndpointConfig ep;
    ep.base_url = server.base_url();
    ep.model_name = "mock-model";
    LmClient client(ep, std::make_shared<WhitespaceTokenizer>());
    auto [predicted, response] = client.classify(fx.query(0), fx.bundle.spec.options);
    CHECK(predicted == fx.bundle.test_set.instances[0].label);
    CHECK(response.prompt_tokens > 0);

    EndpointConfig chat = ep;
    chat.chat_style = true;
    LmClient chat_client(chat, std::make_shared<WhitespaceTokenizer>());
    auto [chat_predicted, chat_response] = chat_client.classify(fx.query(0), fx.bundle.spec.options);
    CHECK(chat_predicted == predicted);
    CHECK(!chat_response.top_tokens.empty());

    server.stop();
}

TEST_CASE("transient 5xx responses are retried, 4xx are not") {
    std::atomic<int> hits{0};
    httplib::Server server;
    server.Post("/v1/completions", [&](const httplib::Request&, httplib::Response& res) {
        if (hits.fetch_add(1) < 2) {
            res.status = 503;
            return;
        }
        json doc = {{"choices",
                     json::array({{{"index", 0},
                                   {"text", "Red"},
                                   {"finish_reason", "length"},
                                   {"logprobs",
                                    {{"top_logprobs", json::array({{{"Red", -0.1}}})}}}}})}};
        res.set_content(doc.dump(), "application/json");
    });
    REQUIRE(server.bind_to_port("127.0.0.1", 18459));
    std::thread thread([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    std::atomic<int> chat_hits{0};
    server.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
        ++chat_hits;
        res.status = 404; // terminal: must not be retried
    });

    EndpointConfig ep;
    ep.base_url = "http://127.0.0.1:18459";
    ep.max_retries = 3;
    ep.backoff_base_ms = 1;
    LmClient client(ep, std::make_shared<WhitespaceTokenizer>());
    auto [predicted, _] = client.classify("prompt", {"Red", "Blue"});
    CHECK(predicted == "Red");
    CHECK(hits.load() == 3); // two 503s then success

    EndpointConfig chat = ep;
    chat.chat_style = true;
    LmClient chat_client(chat, std::make_shared<WhitespaceTokenizer>());
    CHECK_THROWS_AS(chat_client.classify("prompt", {"Red", "Blue"}), EndpointUnavailableError);
    CHECK(chat_hits.load() == 1);

    server.stop();
    thread.join();
}

TEST_CASE("logprob-less endpoint falls back to constrained generation") {
    // A minimal completions server that ignores the logprobs request field.
    httplib::Server server;
    server.Post("/v1/completions", [](const httplib::Request& req, httplib::Response& res) {
        auto body = json::parse(req.body);
        std::string text = body["prompt"].get<std::string>().find("alpha") != std::string::npos
                               ? " RedMorning and more"
                               : " nothing useful";
        json doc = {{"choices", json::array({{{"index", 0},
                                              {"text", text},
                                              {"finish_reason", "length"}}})},
                    {"usage", {{"prompt_tokens", 3}, {"completion_tokens", 4}}}};
        res.set_content(doc.dump(), "application/json");
    });
    server.set_socket_options([](socket_t sock) {
        int yes = 1;
        setsockopt(sock, SOL_SOCKET, SO_REUSEADDR,
                   reinterpret_cast<const void*>(&yes), sizeof(yes));
    });
    REQUIRE(server.bind_to_port("127.0.0.1", 18457));
    std::thread thread([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    EndpointConfig ep;
    ep.base_url = "http://127.0.0.1:18457";
    LmClient client(ep, std::make_shared<WhitespaceTokenizer>());

    // Longest-prefix match: both "Red" and "RedMorning" prefix the
    // completion; the longer option wins.
    auto [predicted, response] = client.classify("alpha", {"Red", "RedMorning", "Blue"});
    CHECK(predicted == "RedMorning");
    CHECK(response.logprob_fallback);
    CHECK(response.kind == LmResponse::Kind::classification);

    auto [none, r2] = client.classify("beta", {"Red", "Blue"});
    CHECK(none == kNoMatch);
    CHECK(r2.logprob_fallback);

    server.stop();
    thread.join();
}

TEST_CASE("unreachable endpoint raises EndpointUnavailable after retries") {
    EndpointConfig ep;
    ep.base_url = "http://127.0.0.1:9";
    ep.max_retries = 1;
    ep.backoff_base_ms = 1;
    ep.request_timeout_s = 1;
    LmClient client(ep, std::make_shared<WhitespaceTokenizer>());
    CHECK_THROWS_AS(client.classify("prompt", {"A", "B"}), EndpointUnavailableError);
}
