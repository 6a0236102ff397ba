#include "fixtures.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <fstream>

namespace fixtures {

namespace {
using nlohmann::json;
std::atomic<int> temp_counter{0};

const char* kNouns[] = {"lamp",  "river", "stone", "cloud",  "ledger", "violin",
                        "orchard", "signal", "kettle", "harbor", "meadow", "circuit"};
const char* kAdjectives[] = {"quiet", "amber", "broad", "hollow", "brisk", "pale",
                             "sturdy", "faint", "mossy", "level"};
const char* kVerbs[] = {"hums", "drifts", "settles", "turns", "glows", "waits"};

std::string sentence(unsigned seed_word) {
    std::string s = "The ";
    s += kAdjectives[seed_word % 10];
    s += ' ';
    s += kNouns[seed_word % 12];
    s += ' ';
    s += kVerbs[seed_word % 6];
    s += " near the ";
    s += kNouns[(seed_word / 3) % 12];
    s += '.';
    return s;
}

} // namespace

TempDir::TempDir(const std::string& hint) {
    path_ = std::filesystem::temp_directory_path() /
            ("haystack-test-" + hint + "-" + std::to_string(::getpid()) + "-" +
             std::to_string(temp_counter.fetch_add(1)));
    std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
}

haystack::TaskSpec toy_spec(const std::string& name, std::vector<std::string> options,
                            const std::string& field) {
    haystack::TaskSpec spec;
    spec.name = name;
    spec.options = std::move(options);
    std::string choices;
    for (std::size_t i = 0; i < spec.options.size(); ++i) {
        if (i > 0) choices += i + 1 == spec.options.size() ? " or " : ", ";
        choices += spec.options[i];
    }
    spec.instruction = "Label each " + field + " entry as " + choices + ".";
    spec.instruction_paraphrase =
        "Decide which of " + choices + " best describes the " + field + " entry.";
    std::string title = field;
    title[0] = static_cast<char>(::toupper(static_cast<unsigned char>(title[0])));
    spec.demonstration_template = title + ": {" + field + "}\nAnswer: {label}";
    spec.inference_template = title + ": {" + field + "}\nAnswer:";
    return spec;
}

void write_bundle(const std::filesystem::path& dir, const haystack::TaskSpec& spec,
                  int per_class_train, int n_test) {
    std::filesystem::create_directories(dir);
    const std::string field =
        haystack::template_placeholders(spec.inference_template).front();

    json task;
    task["name"] = spec.name;
    task["task_type"] = "classification";
    task["options"] = spec.options;
    task["instruction"] = spec.instruction;
    task["instruction_2"] = spec.instruction_paraphrase;
    task["demonstration_prompt"] = spec.demonstration_template;
    task["inference_prompt"] = spec.inference_template;
    std::ofstream(dir / "task.json") << task.dump(2) << '\n';

    std::ofstream train(dir / "train.jsonl");
    int word = 0;
    for (int i = 0; i < per_class_train; ++i) {
        for (const auto& option : spec.options) {
            json rec;
            rec[field] = spec.name + " train " + std::to_string(i) + " " + sentence(word++);
            rec["label"] = option;
            train << rec.dump() << '\n';
        }
    }
    std::ofstream test(dir / "test.jsonl");
    for (int i = 0; i < n_test; ++i) {
        json rec;
        rec[field] = spec.name + " test " + std::to_string(i) + " " + sentence(word++);
        rec["label"] = spec.options[static_cast<std::size_t>(i) % spec.options.size()];
        test << rec.dump() << '\n';
    }
}

std::filesystem::path write_registry(const std::filesystem::path& root, int n_tasks,
                                     int per_class_train, int n_test) {
    static const std::vector<std::vector<std::string>> option_sets = {
        {"Red", "Blue"},     {"Even", "Odd"},      {"Hot", "Cold"},   {"Open", "Closed"},
        {"North", "South"},  {"Solid", "Liquid"},  {"Major", "Minor"}, {"Left", "Right"},
        {"Up", "Down"},      {"Fast", "Slow"},     {"Hard", "Soft"},  {"Near", "Far"},
        {"Light", "Dark"},   {"Sweet", "Sour"},    {"Loud", "Calm"},  {"Wet", "Dry"}};
    static const std::vector<std::string> fields = {
        "object", "number", "sample", "gate",  "compass", "matter", "chord", "arrow",
        "lift",   "pace",   "texture", "range", "shade",  "flavor", "noise", "surface"};
    std::filesystem::create_directories(root);
    for (int t = 0; t < n_tasks; ++t) {
        char name[16];
        std::snprintf(name, sizeof(name), "task%02d", t);
        auto spec = toy_spec(name, option_sets[static_cast<std::size_t>(t) % option_sets.size()],
                             fields[static_cast<std::size_t>(t) % fields.size()] +
                                 (t >= 16 ? std::to_string(t / 16) : ""));
        write_bundle(root / name, spec, per_class_train, n_test);
    }
    return root;
}

void write_filler(const std::filesystem::path& file, int n_words) {
    std::ofstream out(file);
    int words = 0;
    unsigned w = 0;
    while (words < n_words) {
        std::string s = sentence(w++);
        words += 7;
        out << s;
        out << ((w % 9 == 0) ? "\n" : " ");
    }
    out << '\n';
}

void write_mock_script(const std::filesystem::path& file, const std::string& rules_json,
                       const std::filesystem::path& registry, std::uint64_t seed,
                       const std::string& generation_json) {
    json doc;
    doc["seed"] = seed;
    doc["task_registry"] = registry.string();
    doc["rules"] = json::parse(rules_json);
    if (!generation_json.empty()) doc["generation"] = json::parse(generation_json);
    std::ofstream(file) << doc.dump(2) << '\n';
}

haystack::HarnessConfig base_config(const std::filesystem::path& registry,
                                    const std::filesystem::path& out_dir) {
    haystack::HarnessConfig config;
    config.task_registry = registry;
    config.output_dir = out_dir;
    config.endpoint.max_parallel = 2;
    config.seed = 411;
    return config;
}

} // namespace fixtures
