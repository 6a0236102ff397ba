#include "haystack/mock_lm.hpp"

#include "haystack/errors.hpp"
#include "haystack/rng.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <thread>

namespace haystack {

namespace {

using nlohmann::json;

MockRule rule_from_json(const json& doc) {
    MockRule rule;
    if (doc.contains("task")) rule.task = doc["task"].get<std::string>();
    if (doc.contains("context")) rule.context = doc["context"].get<std::string>();
    if (doc.contains("depth_lo")) rule.depth_lo = doc["depth_lo"].get<double>();
    if (doc.contains("depth_hi")) rule.depth_hi = doc["depth_hi"].get<double>();
    if (doc.contains("min_shots")) rule.min_shots = doc["min_shots"].get<int>();
    if (doc.contains("max_shots")) rule.max_shots = doc["max_shots"].get<int>();
    if (doc.contains("accuracy")) rule.accuracy = doc["accuracy"].get<double>();
    if (rule.accuracy < 0.0 || rule.accuracy > 1.0) {
        throw ConfigError("mock rule accuracy must be in [0,1]");
    }
    if (doc.contains("noise")) {
        std::string noise = doc["noise"].get<std::string>();
        if (noise == "instance") rule.noise = MockRule::Noise::instance;
        else if (noise == "full") rule.noise = MockRule::Noise::full;
        else throw ConfigError("mock rule noise must be \"instance\" or \"full\"");
    }
    return rule;
}

bool is_catch_all(const MockRule& r) {
    return r.task == "*" && r.context == "any" && r.depth_lo <= -1.0 && r.depth_hi >= 1.0 &&
           r.min_shots <= 0;
}

MockGenerationRule generation_rule_from_json(const json& doc) {
    MockGenerationRule rule;
    if (doc.contains("pattern")) rule.pattern = doc["pattern"].get<std::string>();
    std::string mode = doc.value("mode", "silent");
    if (mode == "echo_line") rule.mode = MockGenerationRule::Mode::echo_line;
    else if (mode == "fixed") rule.mode = MockGenerationRule::Mode::fixed;
    else if (mode == "silent") rule.mode = MockGenerationRule::Mode::silent;
    else throw ConfigError("mock generation mode must be echo_line, fixed or silent");
    if (doc.contains("text")) rule.text = doc["text"].get<std::string>();
    return rule;
}

// All occurrence positions of `pat` in `text` (non-overlapping scan).
std::vector<std::size_t> find_all(const std::string& text, const std::string& pat) {
    std::vector<std::size_t> positions;
    if (pat.empty()) return positions;
    std::size_t at = 0;
    while ((at = text.find(pat, at)) != std::string::npos) {
        positions.push_back(at);
        at += pat.size();
    }
    return positions;
}

} // namespace

MockScript MockScript::from_json(const json& doc, const std::filesystem::path& base_dir) {
    MockScript script;
    if (doc.contains("seed")) script.seed = doc["seed"].get<std::uint64_t>();
    if (doc.contains("tokenizer")) script.tokenizer_id = doc["tokenizer"].get<std::string>();
    if (doc.contains("task_registry")) {
        std::filesystem::path p = doc["task_registry"].get<std::string>();
        script.task_registry = p.is_absolute() ? p : base_dir / p;
    }
    if (doc.contains("rules")) {
        for (const auto& r : doc["rules"]) script.rules.push_back(rule_from_json(r));
    }
    if (script.rules.empty() || !is_catch_all(script.rules.back())) {
        throw ConfigError("mock script needs a trailing catch-all rule");
    }
    if (doc.contains("generation")) {
        for (const auto& r : doc["generation"]) {
            script.generation_rules.push_back(generation_rule_from_json(r));
        }
    }
    return script;
}

MockScript MockScript::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw MissingFileError(path.string());
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return from_json(doc, path.parent_path());
}

MockSampler::MockSampler(MockScript script) : script_(std::move(script)) {
    tokenizer_ = make_tokenizer(script_.tokenizer_id);
    if (script_.task_registry.empty()) return;
    namespace fs = std::filesystem;
    std::vector<std::string> names;
    for (const auto& entry : fs::directory_iterator(script_.task_registry)) {
        if (entry.is_directory() && fs::exists(entry.path() / "task.json")) {
            names.push_back(entry.path().filename().string());
        }
    }
    std::sort(names.begin(), names.end());
    for (const auto& name : names) {
        TaskBundle bundle = load_task_bundle(script_.task_registry / name, SIZE_MAX);
        TaskEntry entry;
        entry.spec = bundle.spec;
        std::size_t brace = entry.spec.demonstration_template.find('{');
        entry.demo_prefix = entry.spec.demonstration_template.substr(0, brace);
        for (const auto& instance : bundle.test_set.instances) {
            entry.inference_to_gold.emplace_back(render_inference(entry.spec, instance.inputs),
                                                 instance.label);
        }
        tasks_.push_back(std::move(entry));
    }
}

MockSampler::Analysis MockSampler::analyze(const std::string& prompt) const {
    Analysis analysis;

    // The queried task is the one whose rendered test input the prompt ends
    // with; its gold label comes along for free.
    for (const auto& entry : tasks_) {
        for (const auto& [inference, gold] : entry.inference_to_gold) {
            if (prompt.size() >= inference.size() &&
                prompt.compare(prompt.size() - inference.size(), inference.size(), inference) == 0) {
                analysis.task = &entry.spec;
                analysis.gold = gold;
                analysis.gold_known = true;
                analysis.instance_tail = inference;
                break;
            }
        }
        if (analysis.task != nullptr) break;
    }
    if (analysis.task == nullptr) {
        // Fall back to whichever task's instruction appears last.
        std::size_t best = std::string::npos;
        for (const auto& entry : tasks_) {
            for (const auto* instr : {&entry.spec.instruction, &entry.spec.instruction_paraphrase}) {
                auto positions = find_all(prompt, *instr);
                if (!positions.empty() && (best == std::string::npos || positions.back() > best)) {
                    best = positions.back();
                    analysis.task = &entry.spec;
                }
            }
        }
        if (analysis.task == nullptr) return analysis;
    }

    // A task's demo block shows up as an instruction occurrence; the queried
    // task's final occurrence is the test header, not a block.
    const std::string& name = analysis.task->name;
    std::vector<std::pair<std::size_t, const TaskEntry*>> blocks;
    for (const auto& entry : tasks_) {
        auto positions = find_all(prompt, entry.spec.instruction);
        if (entry.spec.name == name) {
            auto paraphrase_positions = find_all(prompt, entry.spec.instruction_paraphrase);
            std::size_t last_instruction = positions.empty() ? 0 : positions.back();
            std::size_t last_paraphrase =
                paraphrase_positions.empty() ? 0 : paraphrase_positions.back();
            if (!paraphrase_positions.empty() && last_paraphrase > last_instruction) {
                // Paraphrased test header; every instruction occurrence is a block.
            } else if (!positions.empty()) {
                positions.pop_back(); // drop the test header
            }
        }
        for (std::size_t p : positions) blocks.emplace_back(p, &entry);
    }
    std::sort(blocks.begin(), blocks.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });

    std::size_t distinct = 0;
    std::size_t test_block_rank = std::string::npos;
    std::vector<const TaskEntry*> seen;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        if (std::find(seen.begin(), seen.end(), blocks[i].second) == seen.end()) {
            seen.push_back(blocks[i].second);
            ++distinct;
        }
        if (blocks[i].second->spec.name == name && test_block_rank == std::string::npos) {
            test_block_rank = i;
        }
    }
    if (blocks.empty()) analysis.context = "zero_shot";
    else if (distinct == 1) analysis.context = "single";
    else analysis.context = "lifelong";
    analysis.depth = test_block_rank == std::string::npos
                         ? -1.0
                         : static_cast<double>(test_block_rank) /
                               static_cast<double>(blocks.size());

    // Shots per class, inferred from demonstration-prefix occurrences (the
    // trailing test input contributes one occurrence itself).
    for (const auto& entry : tasks_) {
        if (entry.spec.name != name) continue;
        if (!entry.demo_prefix.empty()) {
            auto occurrences = find_all(prompt, entry.demo_prefix).size();
            if (occurrences >= 1) {
                analysis.shots = static_cast<int>((occurrences - 1) / entry.spec.options.size());
            }
        }
        break;
    }
    return analysis;
}

const MockRule* MockSampler::match_rule(const Analysis& a) const {
    for (const auto& rule : script_.rules) {
        if (rule.task != "*" && (a.task == nullptr || a.task->name != rule.task)) continue;
        if (rule.context != "any" && rule.context != a.context) continue;
        if (a.depth < rule.depth_lo || a.depth > rule.depth_hi) continue;
        if (a.shots >= 0 && (a.shots < rule.min_shots || a.shots > rule.max_shots)) continue;
        return &rule;
    }
    return nullptr;
}

bool MockSampler::draw_correct(const MockRule& rule, const std::string& prompt,
                               const std::string& instance_tail,
                               const std::string& task_name) const {
    const std::string& material =
        rule.noise == MockRule::Noise::instance ? instance_tail : prompt;
    double u = hash_unit(script_.seed ^ fnv1a64(task_name), material);
    return u < rule.accuracy;
}

std::string MockSampler::classification_response(const std::string& prompt,
                                                 const json& request_body) const {
    Analysis analysis = analyze(prompt);
    int top_k = 100;
    if (request_body.contains("logprobs") && request_body["logprobs"].is_number()) {
        top_k = request_body["logprobs"].get<int>();
    }

    std::vector<std::string> option_tokens;
    std::string chosen;
    if (analysis.task != nullptr && analysis.gold_known) {
        const MockRule* rule = match_rule(analysis);
        bool correct =
            rule != nullptr &&
            draw_correct(*rule, prompt, analysis.instance_tail, analysis.task->name);
        const auto& options = analysis.task->options;
        std::string wrong;
        if (options.size() > 1) {
            std::uint64_t pick = splitmix64(fnv1a64(prompt) ^ script_.seed ^ 0x517cc1b7ull) %
                                 (options.size() - 1);
            std::size_t idx = 0;
            for (const auto& opt : options) {
                if (opt == analysis.gold) continue;
                if (idx == pick) {
                    wrong = opt;
                    break;
                }
                ++idx;
            }
        } else {
            wrong = options.front();
        }
        chosen = correct ? analysis.gold : wrong;
        for (const auto& opt : options) {
            if (auto tok = tokenizer_->first_token(opt)) option_tokens.push_back(*tok);
        }
    } else {
        chosen = "unknown";
        option_tokens.push_back("unknown");
    }

    std::string chosen_token = chosen;
    if (auto tok = tokenizer_->first_token(chosen)) chosen_token = *tok;

    json top = json::object();
    top[chosen_token] = -0.05;
    double lp = -2.0;
    for (const auto& tok : option_tokens) {
        if (static_cast<int>(top.size()) >= top_k) break;
        if (top.contains(tok)) continue;
        top[tok] = lp;
        lp -= 0.5;
    }

    json response = {
        {"id", "cmpl-mock-" + std::to_string(fnv1a64(prompt) & 0xffffffull)},
        {"object", "text_completion"},
        {"model", request_body.value("model", "mock-model")},
        {"choices",
         json::array({{{"index", 0},
                       {"text", chosen_token},
                       {"finish_reason", "length"},
                       {"logprobs",
                        {{"tokens", json::array({chosen_token})},
                         {"token_logprobs", json::array({-0.05})},
                         {"top_logprobs", json::array({top})}}}}})},
        {"usage",
         {{"prompt_tokens", static_cast<int>(tokenizer_->count(prompt))},
          {"completion_tokens", 1},
          {"total_tokens", static_cast<int>(tokenizer_->count(prompt)) + 1}}}};
    return response.dump();
}

std::string MockSampler::generation_response(const std::string& prompt, int max_tokens,
                                             const json& request_body) const {
    std::string text;
    for (const auto& rule : script_.generation_rules) {
        if (!rule.pattern.empty() && prompt.find(rule.pattern) == std::string::npos) continue;
        switch (rule.mode) {
            case MockGenerationRule::Mode::silent:
                text.clear();
                break;
            case MockGenerationRule::Mode::fixed:
                text = rule.text;
                break;
            case MockGenerationRule::Mode::echo_line: {
                // First occurrence: the planted line, not a trailing question
                // that happens to mention the pattern.
                std::size_t at = prompt.find(rule.pattern);
                if (at == std::string::npos) break;
                std::size_t begin = prompt.find_last_of('\n', at);
                begin = begin == std::string::npos ? 0 : begin + 1;
                std::size_t end = prompt.find('.', at);
                end = end == std::string::npos ? prompt.size() : end + 1;
                text = prompt.substr(begin, end - begin);
                break;
            }
        }
        break; // first matching rule wins
    }
    if (max_tokens <= 0) text.clear();

    json response = {
        {"id", "cmpl-mock-" + std::to_string(fnv1a64(prompt) & 0xffffffull)},
        {"object", "text_completion"},
        {"model", request_body.value("model", "mock-model")},
        {"choices",
         json::array({{{"index", 0},
                       {"text", text},
                       {"finish_reason", "stop"},
                       {"logprobs", nullptr}}})},
        {"usage",
         {{"prompt_tokens", static_cast<int>(tokenizer_->count(prompt))},
          {"completion_tokens", static_cast<int>(tokenizer_->count(text))},
          {"total_tokens",
           static_cast<int>(tokenizer_->count(prompt) + tokenizer_->count(text))}}}};
    return response.dump();
}

std::string MockSampler::complete_raw(const json& request_body) const {
    std::string prompt;
    if (request_body.contains("prompt")) {
        prompt = request_body["prompt"].get<std::string>();
    } else if (request_body.contains("messages")) {
        for (const auto& msg : request_body["messages"]) {
            prompt += msg.value("content", "");
        }
    }
    const bool wants_logprobs =
        request_body.contains("logprobs") && !request_body["logprobs"].is_null() &&
        (!request_body["logprobs"].is_boolean() || request_body["logprobs"].get<bool>());
    if (wants_logprobs) return classification_response(prompt, request_body);
    return generation_response(prompt, request_body.value("max_tokens", 16), request_body);
}

struct MockServer::Impl {
    explicit Impl(MockScript script) : sampler(std::move(script)) {}
    MockSampler sampler;
    httplib::Server server;
    std::thread thread;
};

MockServer::MockServer(MockScript script, int port)
    : impl_(std::make_unique<Impl>(std::move(script))), port_(port) {
    impl_->server.Post("/v1/completions", [this](const httplib::Request& req,
                                                 httplib::Response& res) {
        try {
            json body = json::parse(req.body);
            res.set_content(impl_->sampler.complete_raw(body), "application/json");
        } catch (const std::exception& e) {
            res.status = 400;
            res.set_content(json({{"error", e.what()}}).dump(), "application/json");
        }
    });
    impl_->server.Post("/v1/chat/completions", [this](const httplib::Request& req,
                                                      httplib::Response& res) {
        try {
            json body = json::parse(req.body);
            json completion = json::parse(impl_->sampler.complete_raw(body));
            // Reshape to the chat wire form.
            json chat = completion;
            chat["object"] = "chat.completion";
            json& choice = chat["choices"][0];
            choice["message"] = {{"role", "assistant"}, {"content", choice["text"]}};
            if (!choice["logprobs"].is_null() && choice["logprobs"].contains("top_logprobs")) {
                json entries = json::array();
                for (const auto& [token, lp] : choice["logprobs"]["top_logprobs"][0].items()) {
                    entries.push_back({{"token", token}, {"logprob", lp}});
                }
                choice["logprobs"] = {
                    {"content",
                     json::array({{{"token", choice["text"]}, {"top_logprobs", entries}}})}};
            }
            choice.erase("text");
            res.set_content(chat.dump(), "application/json");
        } catch (const std::exception& e) {
            res.status = 400;
            res.set_content(json({{"error", e.what()}}).dump(), "application/json");
        }
    });
    impl_->server.Get("/health", [](const httplib::Request&, httplib::Response& res) {
        res.set_content("ok", "text/plain");
    });
    // Default httplib options include SO_REUSEPORT, which would let two mock
    // servers share a port instead of failing loudly.
    impl_->server.set_socket_options([](socket_t sock) {
        int yes = 1;
        setsockopt(sock, SOL_SOCKET, SO_REUSEADDR,
                   reinterpret_cast<const void*>(&yes), sizeof(yes));
    });
}

MockServer::~MockServer() { stop(); }

void MockServer::start() {
    if (!impl_->server.bind_to_port("127.0.0.1", port_)) throw PortInUseError(port_);
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
}

void MockServer::stop() {
    if (impl_ && impl_->server.is_running()) impl_->server.stop();
    if (impl_ && impl_->thread.joinable()) impl_->thread.join();
}

} // namespace haystack
