#pragma once

#include "haystack/task_model.hpp"
#include "haystack/tokenizer.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace haystack {

enum class BlockKind { instruction_demos, filler, test_header };

struct PromptBlock {
    std::string task_name; // empty for filler
    std::size_t char_start = 0;
    std::size_t char_end = 0;
    std::size_t token_start = 0;
    std::size_t token_end = 0;
    BlockKind kind = BlockKind::instruction_demos;
};

// Assembled prompt text with exact per-block character and token spans.
// Joining the block texts with `separator` reproduces `text`; token offsets
// are taken from one full tokenization of `text`.
struct PromptRecord {
    std::string text;
    std::vector<PromptBlock> blocks;
    std::size_t total_tokens = 0;
    std::string separator;

    std::string block_text(std::size_t i) const {
        const auto& b = blocks.at(i);
        return text.substr(b.char_start, b.char_end - b.char_start);
    }
    const PromptBlock* find_block(const std::string& task_name) const;
};

// The prompt-construction regimes. single_task doubles as the controlled
// Baseline and lifelong as the controlled Recall; config files accept
// "baseline" and "recall" as aliases.
enum class SettingKind {
    single_task,
    lifelong,
    random,
    repeat,
    repeat_shuffle,
    replay,
    remove,
    paraphrase,
    niah, // generation units in needle-recall runs; not a prompt frame
};

std::string setting_name(SettingKind kind);
SettingKind parse_setting(const std::string& name);
bool setting_uses_paraphrase(SettingKind kind);

struct ControlledSetting {
    SettingKind kind = SettingKind::single_task;
    // Copies for repeat/repeat_shuffle. Unset means "match the Recall prompt
    // length", rounded to whole blocks.
    std::optional<int> repetitions;
    std::string filler_source; // corpus path, random only
};

struct TaskContext {
    const TaskSpec* spec = nullptr;
    const FewShotSample* sample = nullptr;
};

// instruction + sep + demo_1 + sep + ... + demo_m, one block spanning the
// whole record.
PromptRecord build_single_task_prompt(const TaskSpec& spec, const FewShotSample& sample,
                                      const Tokenizer& tokenizer,
                                      const std::string& separator = "\n\n");

// Concatenates the tasks' single-task prompts in the given order, one block
// per task. Callers pass the tasks already permuted.
PromptRecord build_lifelong_prompt(const std::vector<TaskContext>& ordered_tasks,
                                   const Tokenizer& tokenizer,
                                   const std::string& separator = "\n\n");

// context + sep + instruction (or paraphrase) + sep + rendered test input.
// An empty context yields the zero-shot form without a leading separator.
std::string build_query(const PromptRecord& context, const TaskSpec& spec,
                        const std::map<std::string, std::string>& test_inputs,
                        bool paraphrase = false);

// Builds the prompt for one controlled setting. `tasks` is the full task
// list in registry order, `permutation` the stream order over its indices,
// `test_index` the registry index of the test task. `filler_corpus` backs
// the random setting and is tokenized/truncated to match the Recall length.
PromptRecord build_controlled_prompt(const ControlledSetting& setting,
                                     const std::vector<TaskContext>& tasks,
                                     std::size_t test_index,
                                     const std::vector<int>& permutation,
                                     std::uint64_t seed,
                                     const Tokenizer& tokenizer,
                                     const std::string& separator = "\n\n",
                                     const std::string* filler_corpus = nullptr);

// Fractional token offset of the task's block. Start-anchored by default;
// midpoint behind the flag.
double measure_depth(const PromptRecord& context, const std::string& task_name,
                     bool midpoint = false);

} // namespace haystack
