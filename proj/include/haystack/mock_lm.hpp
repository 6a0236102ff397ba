#pragma once

#include "haystack/task_model.hpp"
#include "haystack/tokenizer.hpp"

#include <cstdint>
#include <filesystem>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace haystack {

// One scripted behavior rule. Rules are matched in order against what the
// mock infers from the prompt text alone (test task, context shape, ordinal
// depth of the task's demo block, shots per class); the first match wins.
struct MockRule {
    std::string task = "*";          // task name or "*"
    std::string context = "any";     // any | zero_shot | single | lifelong
    double depth_lo = -2.0;          // ordinal block depth; absent block = -1
    double depth_hi = 2.0;
    int min_shots = 0;
    int max_shots = std::numeric_limits<int>::max();
    double accuracy = 1.0;
    // instance: the draw depends only on the test instance, so identical
    // instances agree across contexts and replicates (zero paired variance).
    // full: the draw depends on the whole prompt (independent everywhere).
    enum class Noise { instance, full } noise = Noise::instance;
};

struct MockGenerationRule {
    std::string pattern;             // substring trigger; empty matches all
    enum class Mode { echo_line, fixed, silent } mode = Mode::silent;
    std::string text;                // fixed mode payload
};

// Deterministic scripted behavior for offline verification. The task
// registry gives the mock the instructions and test instances it needs to
// parse prompts and look up gold labels.
struct MockScript {
    std::uint64_t seed = 0;
    std::filesystem::path task_registry;
    std::string tokenizer_id = "whitespace";
    std::vector<MockRule> rules;
    std::vector<MockGenerationRule> generation_rules;

    static MockScript load(const std::filesystem::path& path);
    static MockScript from_json(const nlohmann::json& doc,
                                const std::filesystem::path& base_dir);
};

// Pure scripted responder: (script, prompt) -> response bytes. Shared by the
// in-process backend and the HTTP server.
class MockSampler {
public:
    explicit MockSampler(MockScript script);

    // Full wire response for an OpenAI-style completion request body.
    std::string complete_raw(const nlohmann::json& request_body) const;

    struct Analysis {
        const TaskSpec* task = nullptr;
        std::string context;  // zero_shot | single | lifelong
        double depth = -1.0;  // ordinal fraction of the test task's block
        int shots = -1;
        std::string gold;
        bool gold_known = false;
        std::string instance_tail; // rendered test input the prompt ends with
    };
    Analysis analyze(const std::string& prompt) const;

    const MockRule* match_rule(const Analysis& a) const;

    // Bernoulli draw for a rule; exposed so calibration tests can sample the
    // scripted behavior without HTTP in the loop.
    bool draw_correct(const MockRule& rule, const std::string& prompt,
                      const std::string& instance_tail, const std::string& task_name) const;

    const MockScript& script() const { return script_; }

private:
    std::string classification_response(const std::string& prompt,
                                        const nlohmann::json& request_body) const;
    std::string generation_response(const std::string& prompt, int max_tokens,
                                    const nlohmann::json& request_body) const;

    MockScript script_;
    TokenizerPtr tokenizer_;
    struct TaskEntry {
        TaskSpec spec;
        std::string demo_prefix; // demonstration template before the first placeholder
        std::vector<std::pair<std::string, std::string>> inference_to_gold;
    };
    std::vector<TaskEntry> tasks_;
};

// HTTP front end serving the same wire protocol as a real endpoint.
class MockServer {
public:
    MockServer(MockScript script, int port);
    ~MockServer();

    void start(); // throws PortInUseError
    void stop();
    int port() const { return port_; }
    std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_); }

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    int port_;
};

} // namespace haystack
