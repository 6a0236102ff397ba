#include "haystack/task_model.hpp"

#include "haystack/errors.hpp"
#include "haystack/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace haystack {

namespace {

using nlohmann::json;

const char* kSpecFile = "task.json";
const char* kTrainFile = "train.jsonl";
const char* kTestFile = "test.jsonl";

json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw MissingFileError(path.string());
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw MalformedRecordError(path.string(), 0, e.what());
    }
    return doc;
}

std::string require_string(const json& doc, const char* key,
                           const std::string& file) {
    if (!doc.contains(key) || !doc[key].is_string()) {
        throw MalformedRecordError(file, 0, std::string("missing string field \"") + key + '"');
    }
    return doc[key].get<std::string>();
}

LabeledExample parse_record(const json& rec, const std::string& file, int line) {
    if (!rec.is_object()) throw MalformedRecordError(file, line, "record is not an object");
    LabeledExample ex;
    for (const auto& [key, value] : rec.items()) {
        if (!value.is_string()) {
            throw MalformedRecordError(file, line, "field \"" + key + "\" is not a string");
        }
        if (key == "label") {
            ex.label = value.get<std::string>();
        } else {
            ex.inputs[key] = value.get<std::string>();
        }
    }
    if (ex.label.empty()) throw MalformedRecordError(file, line, "record has no \"label\"");
    return ex;
}

std::vector<LabeledExample> load_records(const std::filesystem::path& path,
                                         const TaskSpec& spec,
                                         const std::vector<std::string>& required) {
    std::ifstream in(path);
    if (!in) throw MissingFileError(path.string());
    std::vector<LabeledExample> out;
    std::string line;
    int line_no = 0;
    std::set<std::string> option_set(spec.options.begin(), spec.options.end());
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::exception& e) {
            throw MalformedRecordError(path.string(), line_no, e.what());
        }
        LabeledExample ex = parse_record(rec, path.string(), line_no);
        if (!option_set.count(ex.label)) {
            throw MalformedRecordError(path.string(), line_no,
                                       "label \"" + ex.label + "\" is not one of the task options");
        }
        for (const auto& name : required) {
            if (!ex.inputs.count(name)) {
                throw MalformedRecordError(path.string(), line_no,
                                           "missing template field \"" + name + "\"");
            }
        }
        out.push_back(std::move(ex));
    }
    return out;
}

} // namespace

std::vector<std::string> template_placeholders(const std::string& tmpl) {
    std::vector<std::string> names;
    std::size_t i = 0;
    while (i < tmpl.size()) {
        if (tmpl[i] == '{') {
            std::size_t close = tmpl.find('}', i + 1);
            if (close == std::string::npos) break;
            names.push_back(tmpl.substr(i + 1, close - i - 1));
            i = close + 1;
        } else {
            ++i;
        }
    }
    return names;
}

std::string render_template(const std::string& tmpl,
                            const std::map<std::string, std::string>& values) {
    std::string out;
    out.reserve(tmpl.size());
    std::size_t i = 0;
    while (i < tmpl.size()) {
        if (tmpl[i] == '{') {
            std::size_t close = tmpl.find('}', i + 1);
            if (close == std::string::npos) {
                out.append(tmpl, i, std::string::npos);
                break;
            }
            std::string name = tmpl.substr(i + 1, close - i - 1);
            auto it = values.find(name);
            if (it == values.end()) throw PlaceholderMismatchError(name);
            out += it->second;
            i = close + 1;
        } else {
            out.push_back(tmpl[i]);
            ++i;
        }
    }
    return out;
}

std::string render_demonstration(const TaskSpec& spec, const LabeledExample& example) {
    std::map<std::string, std::string> values = example.inputs;
    values["label"] = example.label;
    return render_template(spec.demonstration_template, values);
}

std::string render_inference(const TaskSpec& spec,
                             const std::map<std::string, std::string>& inputs) {
    return render_template(spec.inference_template, inputs);
}

TaskBundle load_task_bundle(const std::filesystem::path& dir, std::size_t test_cap) {
    TaskBundle bundle;
    const auto spec_path = dir / kSpecFile;
    json doc = read_json_file(spec_path);
    const std::string file = spec_path.string();

    TaskSpec& spec = bundle.spec;
    spec.name = require_string(doc, "name", file);
    std::string type = require_string(doc, "task_type", file);
    if (type != "classification") {
        throw MalformedRecordError(file, 0, "unsupported task_type \"" + type + '"');
    }
    spec.task_type = TaskType::classification;
    if (!doc.contains("options") || !doc["options"].is_array() || doc["options"].size() < 2) {
        throw MalformedRecordError(file, 0, "\"options\" must list at least two labels");
    }
    for (const auto& opt : doc["options"]) {
        if (!opt.is_string()) throw MalformedRecordError(file, 0, "options must be strings");
        spec.options.push_back(opt.get<std::string>());
    }
    spec.instruction = require_string(doc, "instruction", file);
    spec.instruction_paraphrase = require_string(doc, "instruction_2", file);
    spec.demonstration_template = require_string(doc, "demonstration_prompt", file);
    spec.inference_template = require_string(doc, "inference_prompt", file);

    static const std::set<std::string> known = {
        "name", "task_type", "options", "instruction", "instruction_2",
        "demonstration_prompt", "inference_prompt"};
    for (const auto& [key, _] : doc.items()) {
        if (!known.count(key)) {
            bundle.load_warnings.push_back(file + ": ignoring unknown field \"" + key + '"');
        }
    }

    std::vector<std::string> required = template_placeholders(spec.inference_template);
    bundle.train_pool = load_records(dir / kTrainFile, spec, required);
    std::vector<LabeledExample> test = load_records(dir / kTestFile, spec, required);

    // Train/test overlap is deduplicated on rendered demonstration text.
    std::set<std::string> train_rendered;
    for (const auto& ex : bundle.train_pool) train_rendered.insert(render_demonstration(spec, ex));
    bundle.test_set.task_name = spec.name;
    for (auto& ex : test) {
        if (bundle.test_set.instances.size() >= test_cap) break;
        if (train_rendered.count(render_demonstration(spec, ex))) {
            bundle.load_warnings.push_back((dir / kTestFile).string() +
                                           ": dropped test instance overlapping the train pool");
            continue;
        }
        bundle.test_set.instances.push_back(std::move(ex));
    }
    return bundle;
}

ValidationReport validate_task(const TaskSpec& spec, const Tokenizer& tokenizer) {
    ValidationReport report;
    report.task_name = spec.name;
    auto add = [&](const std::string& code, const std::string& detail) {
        report.issues.push_back({code, detail});
    };

    std::set<std::string> seen;
    for (const auto& opt : spec.options) {
        if (opt.empty()) add("empty-option", "option list contains an empty string");
        if (!seen.insert(opt).second) add("duplicate-option", "option \"" + opt + "\" listed twice");
    }
    if (spec.options.size() < 2) add("too-few-options", "need at least two options");

    // All options must start with distinct tokens under the configured
    // tokenizer, otherwise rank classification cannot tell them apart.
    std::map<std::string, std::string> first_tokens;
    for (const auto& opt : spec.options) {
        auto ft = tokenizer.first_token(opt);
        if (!ft) {
            add("untokenizable-option", "option \"" + opt + "\" yields no tokens");
            continue;
        }
        auto [it, inserted] = first_tokens.emplace(*ft, opt);
        if (!inserted && it->second != opt) {
            add("first-token-collision",
                "options \"" + it->second + "\" and \"" + opt + "\" share first token \"" + *ft + '"');
        }
    }

    if (spec.instruction_paraphrase == spec.instruction) {
        add("paraphrase-equals-instruction", "instruction_2 must differ from instruction");
    }

    // Rendering the demonstration template and truncating just before the
    // label must reproduce the inference rendering.
    std::map<std::string, std::string> probe;
    for (const auto& name : template_placeholders(spec.demonstration_template)) {
        if (name != "label") probe[name] = "<" + name + ">";
    }
    try {
        LabeledExample ex;
        ex.inputs = probe;
        ex.label = "\x1dLABEL\x1d";
        std::string demo = render_demonstration(spec, ex);
        std::string inference = render_inference(spec, probe);
        std::size_t pos = demo.find(ex.label);
        if (pos == std::string::npos) {
            add("no-label-placeholder", "demonstration_prompt has no {label} placeholder");
        } else {
            // Tolerate a single separator character (usually a space) between
            // the inference prefix and the label.
            std::string prefix = demo.substr(0, pos);
            while (!prefix.empty() && (prefix.back() == ' ')) prefix.pop_back();
            std::string want = inference;
            while (!want.empty() && (want.back() == ' ')) want.pop_back();
            if (prefix != want) {
                add("template-prefix-mismatch",
                    "inference_prompt is not the demonstration_prompt truncated before {label}");
            }
        }
    } catch (const PlaceholderMismatchError& e) {
        add("placeholder-mismatch", e.what());
    }
    return report;
}

std::vector<FewShotSample> sample_fewshot_sets(const TaskSpec& spec,
                                               const std::vector<LabeledExample>& pool,
                                               int n_shot, int n_replicates,
                                               std::uint64_t seed) {
    std::map<std::string, std::vector<std::size_t>> by_label;
    for (const auto& opt : spec.options) by_label[opt];
    for (std::size_t i = 0; i < pool.size(); ++i) by_label[pool[i].label].push_back(i);
    for (const auto& opt : spec.options) {
        int have = static_cast<int>(by_label[opt].size());
        if (have < n_shot) throw InsufficientExamplesError(opt, have, n_shot);
    }

    std::vector<FewShotSample> samples;
    samples.reserve(static_cast<std::size_t>(n_replicates));
    for (int r = 0; r < n_replicates; ++r) {
        Rng rng(derive_seed(seed, "fewshot-replicate", {static_cast<std::uint64_t>(r)}));
        std::vector<std::size_t> chosen;
        for (const auto& opt : spec.options) {
            std::vector<std::size_t> candidates = by_label[opt];
            // Partial Fisher-Yates: draw n_shot without replacement.
            for (int k = 0; k < n_shot; ++k) {
                std::size_t j = k + static_cast<std::size_t>(rng.below(candidates.size() - k));
                std::swap(candidates[k], candidates[j]);
                chosen.push_back(candidates[k]);
            }
        }
        // Interleave classes with one seeded shuffle so label blocks are not
        // trivially grouped.
        rng.shuffle(chosen);
        FewShotSample sample;
        sample.task_name = spec.name;
        sample.replicate_index = r;
        for (std::size_t idx : chosen) sample.examples.push_back(pool[idx]);
        samples.push_back(std::move(sample));
    }
    return samples;
}

} // namespace haystack
