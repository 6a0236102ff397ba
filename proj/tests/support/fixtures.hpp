#pragma once

#include "haystack/config.hpp"
#include "haystack/task_model.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace fixtures {

// Self-deleting scratch directory for one test.
class TempDir {
public:
    explicit TempDir(const std::string& hint);
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

// A synthetic classification task. `field` names the single input
// placeholder and doubles as the template prefix ("Object: ..."), kept
// distinct across tasks so prompts are unambiguous.
haystack::TaskSpec toy_spec(const std::string& name, std::vector<std::string> options,
                            const std::string& field);

// Writes task.json / train.jsonl / test.jsonl with deterministic content:
// `per_class_train` examples per option and `n_test` test instances.
void write_bundle(const std::filesystem::path& dir, const haystack::TaskSpec& spec,
                  int per_class_train, int n_test);

// Registry of n generated tasks (task00, task01, ...), two options each.
std::filesystem::path write_registry(const std::filesystem::path& root, int n_tasks,
                                     int per_class_train = 20, int n_test = 12);

// Deterministic pseudo-essay filler text with roughly `n_words` words.
void write_filler(const std::filesystem::path& file, int n_words);

// Serialized mock script (JSON text) pointing at `registry`.
void write_mock_script(const std::filesystem::path& file, const std::string& rules_json,
                       const std::filesystem::path& registry, std::uint64_t seed = 7,
                       const std::string& generation_json = "");

haystack::HarnessConfig base_config(const std::filesystem::path& registry,
                                    const std::filesystem::path& out_dir);

} // namespace fixtures
