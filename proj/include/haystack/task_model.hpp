#pragma once

#include "haystack/tokenizer.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace haystack {

enum class TaskType { classification };

// One classification task: label options, the two instructions, and the
// demonstration / inference templates.
struct TaskSpec {
    std::string name;
    TaskType task_type = TaskType::classification;
    std::vector<std::string> options;
    std::string instruction;
    std::string instruction_paraphrase;
    std::string demonstration_template;
    std::string inference_template;
};

struct LabeledExample {
    std::map<std::string, std::string> inputs;
    std::string label;
};

// One class-balanced replicate of training demonstrations.
struct FewShotSample {
    std::string task_name;
    int replicate_index = 0;
    std::vector<LabeledExample> examples;
};

struct TestSet {
    std::string task_name;
    std::vector<LabeledExample> instances;
};

struct TaskBundle {
    TaskSpec spec;
    std::vector<LabeledExample> train_pool;
    TestSet test_set;
    std::vector<std::string> load_warnings; // unknown fields, dropped test rows
};

struct ValidationIssue {
    std::string code;   // e.g. "duplicate-option", "first-token-collision"
    std::string detail;
};

struct ValidationReport {
    std::string task_name;
    std::vector<ValidationIssue> issues;
    bool ok() const { return issues.empty(); }
};

// Extracts the {placeholder} names appearing in a template, in order.
std::vector<std::string> template_placeholders(const std::string& tmpl);

// Verbatim single-brace substitution; no escaping. Throws
// PlaceholderMismatchError when a placeholder has no value.
std::string render_template(const std::string& tmpl,
                            const std::map<std::string, std::string>& values);

std::string render_demonstration(const TaskSpec& spec, const LabeledExample& example);
std::string render_inference(const TaskSpec& spec,
                             const std::map<std::string, std::string>& inputs);

// Reads task.json / train.jsonl / test.jsonl from `dir`. Test instances whose
// rendered text duplicates a training example are dropped (warned), then the
// test set is capped at `test_cap`.
TaskBundle load_task_bundle(const std::filesystem::path& dir, std::size_t test_cap = 100);

ValidationReport validate_task(const TaskSpec& spec, const Tokenizer& tokenizer);

// R class-balanced few-shot replicates, n_shot examples per option, drawn
// without replacement within a replicate. Deterministic in (pool order, seed).
std::vector<FewShotSample> sample_fewshot_sets(const TaskSpec& spec,
                                               const std::vector<LabeledExample>& pool,
                                               int n_shot, int n_replicates,
                                               std::uint64_t seed);

} // namespace haystack
