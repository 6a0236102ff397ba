#include "haystack/mock_lm.hpp"

#include "haystack/errors.hpp"
#include "haystack/experiment_plan.hpp"
#include "haystack/prompt_builder.hpp"
#include "haystack/rng.hpp"
#include "support/fixtures.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <cmath>

using namespace haystack;
using nlohmann::json;

namespace {

struct MockFixture {
    fixtures::TempDir dir{"mock"};
    std::filesystem::path registry;
    std::vector<TaskBundle> bundles;
    std::vector<std::vector<FewShotSample>> samples;
    WhitespaceTokenizer tokenizer;

    explicit MockFixture(int n_tasks = 3) {
        registry = fixtures::write_registry(dir.path() / "tasks", n_tasks);
        for (int t = 0; t < n_tasks; ++t) {
            char name[16];
            std::snprintf(name, sizeof(name), "task%02d", t);
            bundles.push_back(load_task_bundle(registry / name));
            samples.push_back(sample_fewshot_sets(bundles.back().spec,
                                                  bundles.back().train_pool, 2, 2, 50 + t));
        }
    }

    MockSampler sampler(const std::string& rules,
                        const std::string& generation = "") const {
        auto script_path = dir.path() / "script.json";
        fixtures::write_mock_script(script_path, rules, registry, 7, generation);
        return MockSampler(MockScript::load(script_path));
    }

    std::vector<TaskContext> contexts() const {
        std::vector<TaskContext> out;
        for (std::size_t t = 0; t < bundles.size(); ++t) {
            out.push_back({&bundles[t].spec, &samples[t][0]});
        }
        return out;
    }

    std::string query(const PromptRecord& context, int task, int instance,
                      bool paraphrase = false) const {
        return build_query(context, bundles[static_cast<std::size_t>(task)].spec,
                           bundles[static_cast<std::size_t>(task)]
                               .test_set.instances[static_cast<std::size_t>(instance)]
                               .inputs,
                           paraphrase);
    }
};

json classify_request(const std::string& prompt) {
    return json{{"model", "mock-model"}, {"prompt", prompt},    {"max_tokens", 1},
                {"temperature", 0},      {"logprobs", 100},     {"echo", false}};
}

std::string top1(const json& response) {
    const auto& top = response.at("choices").at(0).at("logprobs").at("top_logprobs").at(0);
    std::string best;
    double best_lp = -1e300;
    for (const auto& [token, lp] : top.items()) {
        if (lp.get<double>() > best_lp) {
            best_lp = lp.get<double>();
            best = token;
        }
    }
    return best;
}

} // namespace

TEST_CASE("mock script loading validates rules") {
    fixtures::TempDir dir("mock-script");
    auto registry = fixtures::write_registry(dir.path() / "tasks", 1);

    auto path = dir.path() / "bad.json";
    fixtures::write_mock_script(path, R"([{"task":"task00","accuracy":1.0}])", registry);
    CHECK_THROWS_AS(MockScript::load(path), ConfigError); // no catch-all

    fixtures::write_mock_script(path, R"([{"accuracy":1.5}])", registry);
    CHECK_THROWS_AS(MockScript::load(path), ConfigError); // accuracy out of range

    fixtures::write_mock_script(path, R"([{"accuracy":1.0}])", registry);
    CHECK_NOTHROW(MockScript::load(path));
}

TEST_CASE("mock analysis identifies task, context shape, depth and shots") {
    MockFixture fx(3);
    auto sampler = fx.sampler(R"([{"accuracy":1.0}])");
    auto tasks = fx.contexts();

    SUBCASE("zero-shot") {
        PromptRecord empty;
        empty.separator = "\n\n";
        auto a = sampler.analyze(fx.query(empty, 1, 0));
        REQUIRE(a.task != nullptr);
        CHECK(a.task->name == "task01");
        CHECK(a.context == "zero_shot");
        CHECK(a.gold_known);
        CHECK(a.gold == fx.bundles[1].test_set.instances[0].label);
    }
    SUBCASE("single-task") {
        auto context = build_single_task_prompt(*tasks[1].spec, *tasks[1].sample, fx.tokenizer);
        auto a = sampler.analyze(fx.query(context, 1, 2));
        CHECK(a.task->name == "task01");
        CHECK(a.context == "single");
        CHECK(a.depth == 0.0);
        CHECK(a.shots == 2);
    }
    SUBCASE("lifelong with ordinal depth") {
        auto context = build_lifelong_prompt({tasks[2], tasks[0], tasks[1]}, fx.tokenizer);
        auto a0 = sampler.analyze(fx.query(context, 2, 0));
        CHECK(a0.context == "lifelong");
        CHECK(a0.depth == 0.0);
        auto a1 = sampler.analyze(fx.query(context, 0, 0));
        CHECK(a1.depth == doctest::Approx(1.0 / 3.0));
        auto a2 = sampler.analyze(fx.query(context, 1, 0));
        CHECK(a2.depth == doctest::Approx(2.0 / 3.0));
    }
    SUBCASE("paraphrased header still resolves the task") {
        auto context = build_lifelong_prompt(tasks, fx.tokenizer);
        auto a = sampler.analyze(fx.query(context, 1, 1, true));
        CHECK(a.task->name == "task01");
        CHECK(a.context == "lifelong");
        CHECK(a.gold_known);
    }
    SUBCASE("removed task yields depth -1") {
        auto context = build_lifelong_prompt({tasks[1], tasks[2]}, fx.tokenizer);
        auto a = sampler.analyze(fx.query(context, 0, 0));
        CHECK(a.task->name == "task00");
        CHECK(a.depth == -1.0);
    }
}

TEST_CASE("mock classification: accuracy 1.0 always top-ranks gold") {
    MockFixture fx(2);
    auto sampler = fx.sampler(R"([{"accuracy":1.0}])");
    auto tasks = fx.contexts();
    auto context = build_single_task_prompt(*tasks[0].spec, *tasks[0].sample, fx.tokenizer);
    for (int i = 0; i < 4; ++i) {
        auto response = json::parse(
            sampler.complete_raw(classify_request(fx.query(context, 0, i))));
        CHECK(top1(response) ==
              fx.bundles[0].test_set.instances[static_cast<std::size_t>(i)].label);
    }
}

TEST_CASE("mock classification: accuracy 0.0 never top-ranks gold") {
    MockFixture fx(2);
    auto sampler = fx.sampler(R"([{"accuracy":0.0}])");
    auto tasks = fx.contexts();
    auto context = build_single_task_prompt(*tasks[0].spec, *tasks[0].sample, fx.tokenizer);
    for (int i = 0; i < 4; ++i) {
        auto response = json::parse(
            sampler.complete_raw(classify_request(fx.query(context, 0, i))));
        CHECK(top1(response) !=
              fx.bundles[0].test_set.instances[static_cast<std::size_t>(i)].label);
    }
}

TEST_CASE("mock determinism: same script and prompt give identical bytes") {
    MockFixture fx(2);
    auto sampler_a = fx.sampler(R"([{"accuracy":0.6,"noise":"full"}])");
    auto sampler_b = fx.sampler(R"([{"accuracy":0.6,"noise":"full"}])");
    auto tasks = fx.contexts();
    auto context = build_lifelong_prompt(tasks, fx.tokenizer);
    auto q = fx.query(context, 0, 0);
    CHECK(sampler_a.complete_raw(classify_request(q)) ==
          sampler_b.complete_raw(classify_request(q)));
}

TEST_CASE("mock scripted rate: 0.7 holds empirically over many draws") {
    MockFixture fx(1);
    auto sampler = fx.sampler(R"([{"accuracy":0.7,"noise":"full"}])");
    MockRule rule;
    rule.accuracy = 0.7;
    rule.noise = MockRule::Noise::full;
    int correct = 0;
    const int trials = 4000;
    for (int i = 0; i < trials; ++i) {
        std::string prompt = "synthetic prompt variant " + std::to_string(i);
        correct += sampler.draw_correct(rule, prompt, prompt, "task00") ? 1 : 0;
    }
    double rate = static_cast<double>(correct) / trials;
    CHECK(rate > 0.67);
    CHECK(rate < 0.73);
}

TEST_CASE("mock rules: instance noise pins the draw to the test instance") {
    MockFixture fx(2);
    auto sampler = fx.sampler(R"([{"accuracy":0.5,"noise":"instance"}])");
    auto tasks = fx.contexts();
    auto single = build_single_task_prompt(*tasks[0].spec, *tasks[0].sample, fx.tokenizer);
    auto lifelong = build_lifelong_prompt(tasks, fx.tokenizer);
    for (int i = 0; i < 6; ++i) {
        auto r_single = json::parse(
            sampler.complete_raw(classify_request(fx.query(single, 0, i))));
        auto r_lifelong = json::parse(
            sampler.complete_raw(classify_request(fx.query(lifelong, 0, i))));
        CHECK(top1(r_single) == top1(r_lifelong));
    }
}

TEST_CASE("mock rules: shot bounds select by demonstrations per class") {
    MockFixture fx(1);
    auto sampler = fx.sampler(
        R"([{"max_shots":1,"accuracy":0.0},{"accuracy":1.0}])");
    const auto& spec = fx.bundles[0].spec;
    auto one_shot = sample_fewshot_sets(spec, fx.bundles[0].train_pool, 1, 1, 9)[0];
    auto four_shot = sample_fewshot_sets(spec, fx.bundles[0].train_pool, 4, 1, 9)[0];
    auto ctx1 = build_single_task_prompt(spec, one_shot, fx.tokenizer);
    auto ctx4 = build_single_task_prompt(spec, four_shot, fx.tokenizer);

    auto gold = fx.bundles[0].test_set.instances[0].label;
    auto r1 = json::parse(sampler.complete_raw(classify_request(fx.query(ctx1, 0, 0))));
    auto r4 = json::parse(sampler.complete_raw(classify_request(fx.query(ctx4, 0, 0))));
    CHECK(top1(r1) != gold);
    CHECK(top1(r4) == gold);
}

TEST_CASE("mock generation rules") {
    MockFixture fx(1);
    std::string haystack_text =
        "Some filler sentence one.\nThe special fact is planted right here.\nMore filler.";

    SUBCASE("echo_line returns the sentence containing the pattern") {
        auto sampler = fx.sampler(R"([{"accuracy":1.0}])",
                                  R"([{"pattern":"special fact","mode":"echo_line"}])");
        json req = {{"prompt", haystack_text + "\n\nWhat is the special fact?"},
                    {"max_tokens", 32}, {"temperature", 0}};
        auto response = json::parse(sampler.complete_raw(req));
        CHECK(response["choices"][0]["text"] ==
              "The special fact is planted right here.");
    }
    SUBCASE("silent and fixed modes") {
        auto sampler = fx.sampler(
            R"([{"accuracy":1.0}])",
            R"([{"pattern":"nonexistent","mode":"fixed","text":"never"},{"mode":"silent"}])");
        json req = {{"prompt", haystack_text}, {"max_tokens", 32}, {"temperature", 0}};
        auto response = json::parse(sampler.complete_raw(req));
        CHECK(response["choices"][0]["text"] == "");
    }
    SUBCASE("max_tokens 0 silences even a matching rule") {
        auto sampler = fx.sampler(R"([{"accuracy":1.0}])",
                                  R"([{"pattern":"special","mode":"echo_line"}])");
        json req = {{"prompt", haystack_text}, {"max_tokens", 0}, {"temperature", 0}};
        auto response = json::parse(sampler.complete_raw(req));
        CHECK(response["choices"][0]["text"] == "");
    }
}

TEST_CASE("mock server speaks the wire protocol") {
    MockFixture fx(2);
    auto script_path = fx.dir.path() / "server-script.json";
    fixtures::write_mock_script(script_path, R"([{"accuracy":1.0}])", fx.registry);

    MockServer server(MockScript::load(script_path), 18411);
    server.start();
    CHECK_THROWS_AS(
        [&] {
            MockServer twin(MockScript::load(script_path), 18411);
            twin.start();
        }(),
        PortInUseError);
    server.stop();
}
