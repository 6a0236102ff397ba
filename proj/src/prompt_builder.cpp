#include "haystack/prompt_builder.hpp"

#include "haystack/errors.hpp"
#include "haystack/rng.hpp"

#include <algorithm>
#include <cmath>

namespace haystack {

namespace {

// Accumulates block texts, then computes token spans from one tokenization
// of the joined text.
class PromptAssembler {
public:
    PromptAssembler(const Tokenizer& tokenizer, std::string separator)
        : tokenizer_(tokenizer), separator_(std::move(separator)) {}

    void add_block(const std::string& task_name, BlockKind kind, const std::string& text) {
        PromptBlock block;
        block.task_name = task_name;
        block.kind = kind;
        if (!text_.empty()) text_ += separator_;
        block.char_start = text_.size();
        text_ += text;
        block.char_end = text_.size();
        blocks_.push_back(std::move(block));
    }

    PromptRecord finish() {
        PromptRecord record;
        record.text = std::move(text_);
        record.blocks = std::move(blocks_);
        record.separator = separator_;
        auto tokens = tokenizer_.encode(record.text);
        record.total_tokens = tokens.size();
        std::size_t t = 0;
        for (auto& block : record.blocks) {
            while (t < tokens.size() && tokens[t].byte_start < block.char_start) ++t;
            block.token_start = t;
            std::size_t e = t;
            while (e < tokens.size() && tokens[e].byte_start < block.char_end) ++e;
            block.token_end = e;
        }
        return record;
    }

private:
    const Tokenizer& tokenizer_;
    std::string separator_;
    std::string text_;
    std::vector<PromptBlock> blocks_;
};

std::string join_nonempty(const std::vector<std::string>& parts, const std::string& sep) {
    std::string out;
    for (const auto& p : parts) {
        if (p.empty()) continue;
        if (!out.empty()) out += sep;
        out += p;
    }
    return out;
}

std::string single_task_text(const TaskSpec& spec, const FewShotSample& sample,
                             const std::string& separator) {
    std::vector<std::string> parts;
    parts.push_back(spec.instruction);
    for (const auto& ex : sample.examples) parts.push_back(render_demonstration(spec, ex));
    return join_nonempty(parts, separator);
}

std::vector<TaskContext> permute(const std::vector<TaskContext>& tasks,
                                 const std::vector<int>& permutation) {
    std::vector<TaskContext> ordered;
    ordered.reserve(permutation.size());
    for (int idx : permutation) ordered.push_back(tasks.at(static_cast<std::size_t>(idx)));
    return ordered;
}

PromptRecord lifelong_over(const std::vector<TaskContext>& tasks,
                           const std::vector<int>& permutation,
                           const Tokenizer& tokenizer, const std::string& separator) {
    return build_lifelong_prompt(permute(tasks, permutation), tokenizer, separator);
}

} // namespace

const PromptBlock* PromptRecord::find_block(const std::string& task_name) const {
    for (const auto& b : blocks) {
        if (b.kind != BlockKind::filler && b.task_name == task_name) return &b;
    }
    return nullptr;
}

std::string setting_name(SettingKind kind) {
    switch (kind) {
        case SettingKind::single_task: return "single_task";
        case SettingKind::lifelong: return "lifelong";
        case SettingKind::random: return "random";
        case SettingKind::repeat: return "repeat";
        case SettingKind::repeat_shuffle: return "repeat_shuffle";
        case SettingKind::replay: return "replay";
        case SettingKind::remove: return "remove";
        case SettingKind::paraphrase: return "paraphrase";
        case SettingKind::niah: return "niah";
    }
    return "?";
}

SettingKind parse_setting(const std::string& name) {
    if (name == "single_task" || name == "baseline" || name == "single") return SettingKind::single_task;
    if (name == "lifelong" || name == "recall") return SettingKind::lifelong;
    if (name == "random") return SettingKind::random;
    if (name == "repeat") return SettingKind::repeat;
    if (name == "repeat_shuffle" || name == "repeat+shuffle") return SettingKind::repeat_shuffle;
    if (name == "replay") return SettingKind::replay;
    if (name == "remove") return SettingKind::remove;
    if (name == "paraphrase") return SettingKind::paraphrase;
    if (name == "niah") return SettingKind::niah;
    throw ConfigError("unknown setting: " + name);
}

bool setting_uses_paraphrase(SettingKind kind) { return kind == SettingKind::paraphrase; }

PromptRecord build_single_task_prompt(const TaskSpec& spec, const FewShotSample& sample,
                                      const Tokenizer& tokenizer, const std::string& separator) {
    PromptAssembler assembler(tokenizer, separator);
    assembler.add_block(spec.name, BlockKind::instruction_demos,
                        single_task_text(spec, sample, separator));
    return assembler.finish();
}

PromptRecord build_lifelong_prompt(const std::vector<TaskContext>& ordered_tasks,
                                   const Tokenizer& tokenizer, const std::string& separator) {
    PromptAssembler assembler(tokenizer, separator);
    for (const auto& task : ordered_tasks) {
        assembler.add_block(task.spec->name, BlockKind::instruction_demos,
                            single_task_text(*task.spec, *task.sample, separator));
    }
    return assembler.finish();
}

std::string build_query(const PromptRecord& context, const TaskSpec& spec,
                        const std::map<std::string, std::string>& test_inputs,
                        bool paraphrase) {
    const std::string& instruction =
        paraphrase ? spec.instruction_paraphrase : spec.instruction;
    std::vector<std::string> parts;
    parts.push_back(context.text);
    parts.push_back(instruction);
    parts.push_back(render_inference(spec, test_inputs));
    return join_nonempty(parts, context.separator.empty() ? std::string("\n\n") : context.separator);
}

PromptRecord build_controlled_prompt(const ControlledSetting& setting,
                                     const std::vector<TaskContext>& tasks,
                                     std::size_t test_index,
                                     const std::vector<int>& permutation,
                                     std::uint64_t seed,
                                     const Tokenizer& tokenizer,
                                     const std::string& separator,
                                     const std::string* filler_corpus) {
    if (test_index >= tasks.size()) throw SettingInputMissingError("test_index out of range");
    const TaskSpec& spec = *tasks[test_index].spec;
    const FewShotSample& sample = *tasks[test_index].sample;

    auto single = [&] { return build_single_task_prompt(spec, sample, tokenizer, separator); };
    auto recall = [&] { return lifelong_over(tasks, permutation, tokenizer, separator); };

    // Copies for the repeat variants: explicit when configured, otherwise
    // the count that best matches the Recall prompt length.
    auto repeat_count = [&]() -> int {
        if (setting.repetitions) {
            if (*setting.repetitions < 1) throw SettingInputMissingError("repetitions must be >= 1");
            return *setting.repetitions;
        }
        double single_len = static_cast<double>(single().total_tokens);
        double recall_len = static_cast<double>(recall().total_tokens);
        if (single_len <= 0) return 1;
        return std::max(1, static_cast<int>(std::llround(recall_len / single_len)));
    };

    switch (setting.kind) {
        case SettingKind::single_task:
            return single();

        case SettingKind::lifelong:
        case SettingKind::paraphrase:
            // Paraphrase changes the test-time instruction, not the context.
            return recall();

        case SettingKind::replay: {
            PromptAssembler assembler(tokenizer, separator);
            for (int idx : permutation) {
                const auto& task = tasks.at(static_cast<std::size_t>(idx));
                assembler.add_block(task.spec->name, BlockKind::instruction_demos,
                                    single_task_text(*task.spec, *task.sample, separator));
            }
            assembler.add_block(spec.name, BlockKind::instruction_demos,
                                single_task_text(spec, sample, separator));
            return assembler.finish();
        }

        case SettingKind::remove: {
            PromptAssembler assembler(tokenizer, separator);
            for (int idx : permutation) {
                if (static_cast<std::size_t>(idx) == test_index) continue;
                const auto& task = tasks.at(static_cast<std::size_t>(idx));
                assembler.add_block(task.spec->name, BlockKind::instruction_demos,
                                    single_task_text(*task.spec, *task.sample, separator));
            }
            return assembler.finish();
        }

        case SettingKind::repeat:
        case SettingKind::repeat_shuffle: {
            int copies = repeat_count();
            PromptAssembler assembler(tokenizer, separator);
            for (int i = 0; i < copies; ++i) {
                if (setting.kind == SettingKind::repeat || i == 0) {
                    assembler.add_block(spec.name, BlockKind::instruction_demos,
                                        single_task_text(spec, sample, separator));
                } else {
                    FewShotSample shuffled = sample;
                    Rng rng(derive_seed(seed, "repeat-shuffle", {static_cast<std::uint64_t>(i)}));
                    rng.shuffle(shuffled.examples);
                    assembler.add_block(spec.name, BlockKind::instruction_demos,
                                        single_task_text(spec, shuffled, separator));
                }
            }
            return assembler.finish();
        }

        case SettingKind::random: {
            if (filler_corpus == nullptr) {
                throw SettingInputMissingError("random setting needs a filler corpus");
            }
            PromptRecord single_prompt = single();
            PromptRecord recall_prompt = recall();
            std::size_t needed = recall_prompt.total_tokens > single_prompt.total_tokens
                                     ? recall_prompt.total_tokens - single_prompt.total_tokens
                                     : 0;
            auto corpus_tokens = tokenizer.encode(*filler_corpus);
            if (corpus_tokens.size() < needed) {
                throw FillerTooShortError(corpus_tokens.size(), needed);
            }
            PromptAssembler assembler(tokenizer, separator);
            if (needed > 0) {
                std::string filler =
                    filler_corpus->substr(0, corpus_tokens[needed - 1].byte_end);
                assembler.add_block("", BlockKind::filler, filler);
            }
            assembler.add_block(spec.name, BlockKind::instruction_demos,
                                single_task_text(spec, sample, separator));
            return assembler.finish();
        }

        case SettingKind::niah:
            break;
    }
    throw SettingInputMissingError("unhandled setting");
}

double measure_depth(const PromptRecord& context, const std::string& task_name, bool midpoint) {
    const PromptBlock* block = context.find_block(task_name);
    if (block == nullptr) throw TaskNotInPromptError(task_name);
    if (context.total_tokens == 0) return 0.0;
    double anchor = midpoint
                        ? (static_cast<double>(block->token_start) +
                           static_cast<double>(block->token_end)) / 2.0
                        : static_cast<double>(block->token_start);
    return anchor / static_cast<double>(context.total_tokens);
}

} // namespace haystack
