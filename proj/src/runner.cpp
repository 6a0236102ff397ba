#include "haystack/runner.hpp"

#include "haystack/digest.hpp"
#include "haystack/errors.hpp"
#include "haystack/lm_client.hpp"
#include "haystack/niah.hpp"
#include "haystack/prompt_builder.hpp"
#include "haystack/rng.hpp"
#include "haystack/stats.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

namespace haystack {

namespace {

using nlohmann::json;

struct LoadedTask {
    TaskBundle bundle;
    // replicates keyed by n_shot
    std::map<int, std::vector<FewShotSample>> samples;
};

struct PreparedUnit {
    DispatchRequest request;
    double depth = 0.0;
    int context_tokens = 0;
    std::string instance_gold;
};

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingFileError(path.string());
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_progress(const std::filesystem::path& run_dir, std::size_t done,
                    std::size_t total, std::size_t dispatched) {
    json doc = {{"recorded_units", done}, {"total_units", total}, {"dispatched", dispatched}};
    std::ofstream out(run_dir / "progress.json", std::ios::binary);
    out << doc.dump() << '\n';
}

// Builds the context prompt for a cell, memoizing on a structural key since
// lifelong contexts are shared by every task and instance of a (perm,
// replicate) pair.
class ContextBuilder {
public:
    ContextBuilder(const RunManifest& manifest, const std::vector<LoadedTask>& tasks,
                   const Tokenizer& tokenizer, const std::string* filler)
        : manifest_(manifest), tasks_(tasks), tokenizer_(tokenizer), filler_(filler) {}

    const PromptRecord& context_for(const CellRef& cell) {
        std::string key = std::to_string(cell.grid_index) + '|' +
                          std::to_string(static_cast<int>(cell.setting)) + '|' +
                          std::to_string(cell.setting_index) + '|' +
                          std::to_string(cell.perm_index) + '|' +
                          std::to_string(cell.replicate);
        // Per-task contexts differ per task as well.
        if (cell.setting != SettingKind::lifelong) {
            key += '|' + std::to_string(cell.task_index);
        }
        auto it = cache_.find(key);
        if (it != cache_.end()) return it->second;
        return cache_.emplace(key, build(cell)).first->second;
    }

private:
    PromptRecord build(const CellRef& cell) {
        const auto& point = manifest_.grid_points.at(static_cast<std::size_t>(cell.grid_index));
        std::vector<TaskContext> contexts;
        contexts.reserve(static_cast<std::size_t>(point.n_task));
        for (int t = 0; t < point.n_task; ++t) {
            const LoadedTask& task = tasks_.at(static_cast<std::size_t>(t));
            contexts.push_back({&task.bundle.spec,
                                &task.samples.at(point.n_shot)
                                     .at(static_cast<std::size_t>(cell.replicate))});
        }
        const auto test_index = static_cast<std::size_t>(cell.task_index);

        if (cell.setting == SettingKind::single_task) {
            return build_single_task_prompt(*contexts[test_index].spec,
                                            *contexts[test_index].sample, tokenizer_,
                                            manifest_.separator);
        }
        const auto& permutation =
            point.permutations.at(static_cast<std::size_t>(std::max(cell.perm_index, 0)));
        if (cell.setting == SettingKind::lifelong) {
            std::vector<TaskContext> ordered;
            for (int idx : permutation) ordered.push_back(contexts.at(static_cast<std::size_t>(idx)));
            return build_lifelong_prompt(ordered, tokenizer_, manifest_.separator);
        }
        ControlledSetting setting;
        if (cell.setting_index >= 0) {
            setting = manifest_.controlled_settings.at(static_cast<std::size_t>(cell.setting_index));
        } else {
            setting.kind = cell.setting;
        }
        std::uint64_t seed = derive_seed(manifest_.seed, "controlled",
                                         {static_cast<std::uint64_t>(cell.setting_index),
                                          static_cast<std::uint64_t>(cell.task_index),
                                          static_cast<std::uint64_t>(cell.replicate)});
        return build_controlled_prompt(setting, contexts, test_index, permutation, seed,
                                       tokenizer_, manifest_.separator, filler_);
    }

    const RunManifest& manifest_;
    const std::vector<LoadedTask>& tasks_;
    const Tokenizer& tokenizer_;
    const std::string* filler_;
    std::map<std::string, PromptRecord> cache_;
};

std::vector<PreparedUnit> prepare_units(const RunManifest& manifest,
                                        const HarnessConfig& config,
                                        const std::vector<LoadedTask>& tasks,
                                        const Tokenizer& tokenizer,
                                        const std::string* filler) {
    std::vector<PreparedUnit> units;
    if (manifest.mode == RunMode::niah) {
        if (filler == nullptr) throw SettingInputMissingError("niah mode needs a filler corpus");
        const auto& plan = manifest.niah;
        for (std::size_t li = 0; li < plan.context_lengths.size(); ++li) {
            for (std::size_t di = 0; di < plan.depths.size(); ++di) {
                std::string context = plant_needle(*filler, plan.needle,
                                                   plan.context_lengths[li], plan.depths[di],
                                                   tokenizer);
                PreparedUnit unit;
                unit.request.unit.cell.grid_index = static_cast<int>(li);
                unit.request.unit.cell.setting = SettingKind::niah;
                unit.request.unit.cell.task_index = static_cast<int>(di);
                unit.request.unit.cell.perm_index = -1;
                unit.request.unit.cell.replicate = 0;
                unit.request.unit.instance_index = 0;
                unit.request.query_text = context + manifest.separator + plan.question;
                unit.request.max_tokens = plan.max_tokens;
                unit.request.group_key = "niah-" + std::to_string(li) + "-" + std::to_string(di);
                unit.request.gold = plan.needle;
                unit.depth = plan.depths[di];
                unit.context_tokens = static_cast<int>(tokenizer.count(context));
                unit.instance_gold = plan.needle;
                unit.request.unit.prompt_hash = ResponseCache::make_key(
                    manifest.model, unit.request.query_text,
                    LmClient::generation_params(plan.max_tokens).dump());
                units.push_back(std::move(unit));
            }
        }
        return units;
    }

    ContextBuilder contexts(manifest, tasks, tokenizer, filler);
    for (const CellRef& cell : enumerate_cells(manifest)) {
        const LoadedTask& task = tasks.at(static_cast<std::size_t>(cell.task_index));
        const TaskSpec& spec = task.bundle.spec;
        const PromptRecord& context = contexts.context_for(cell);
        const bool paraphrase = setting_uses_paraphrase(cell.setting);

        double depth = 0.0;
        if (context.find_block(spec.name) != nullptr) {
            depth = measure_depth(context, spec.name, config.depth_midpoint);
        } else {
            depth = -1.0; // remove setting: the needle block is absent
        }

        std::string group = std::to_string(cell.grid_index) + '|' +
                            std::to_string(static_cast<int>(cell.setting)) + '|' +
                            std::to_string(cell.setting_index) + '|' +
                            std::to_string(cell.perm_index) + '|' +
                            std::to_string(cell.replicate);
        if (cell.setting != SettingKind::lifelong) group += '|' + std::to_string(cell.task_index);

        for (std::size_t i = 0; i < task.bundle.test_set.instances.size(); ++i) {
            const LabeledExample& instance = task.bundle.test_set.instances[i];
            PreparedUnit unit;
            unit.request.unit.cell = cell;
            unit.request.unit.instance_index = static_cast<int>(i);
            unit.request.query_text = build_query(context, spec, instance.inputs, paraphrase);
            unit.request.options = spec.options;
            unit.request.gold = instance.label;
            unit.request.group_key = group;
            unit.depth = depth;
            unit.context_tokens = static_cast<int>(context.total_tokens);
            unit.instance_gold = instance.label;
            unit.request.unit.prompt_hash = ResponseCache::make_key(
                manifest.model, unit.request.query_text,
                LmClient::classification_params(config.endpoint.logprob_top_k).dump());
            units.push_back(std::move(unit));
        }
    }
    return units;
}

} // namespace

void persist_manifest(const RunManifest& manifest, const std::filesystem::path& run_dir) {
    std::filesystem::create_directories(run_dir);
    auto path = run_dir / "manifest.json";
    std::string text = manifest.canonical_text() + "\n";
    if (std::filesystem::exists(path)) {
        std::string existing = read_text_file(path);
        if (existing != text) {
            throw ManifestMismatchError("existing " + path.string() +
                                        " differs from the planned manifest");
        }
        return;
    }
    std::ofstream out(path, std::ios::binary);
    out << text;
}

RunOutcome run_manifest(const RunManifest& manifest, const HarnessConfig& config,
                        const RunOptions& options) {
    const auto run_dir = config.output_dir;
    persist_manifest(manifest, run_dir);

    TokenizerPtr tokenizer = make_tokenizer(manifest.tokenizer_id);

    std::vector<LoadedTask> tasks;
    std::string filler_text;
    const std::string* filler = nullptr;
    if (!config.filler_corpus.empty()) {
        filler_text = read_text_file(config.filler_corpus);
        filler = &filler_text;
    }

    if (manifest.mode != RunMode::niah) {
        std::set<int> shot_counts;
        for (const auto& point : manifest.grid_points) shot_counts.insert(point.n_shot);
        int max_tasks = 0;
        for (const auto& point : manifest.grid_points) max_tasks = std::max(max_tasks, point.n_task);
        for (int t = 0; t < max_tasks; ++t) {
            const std::string& name = manifest.task_names.at(static_cast<std::size_t>(t));
            LoadedTask task;
            task.bundle = load_task_bundle(config.task_registry / name, manifest.test_cap);
            if (static_cast<int>(task.bundle.spec.options.size()) >
                config.endpoint.logprob_top_k) {
                throw ConfigError("endpoint.logprob_top_k (" +
                                  std::to_string(config.endpoint.logprob_top_k) +
                                  ") is below the option count of task " + name);
            }
            for (int n_shot : shot_counts) {
                task.samples[n_shot] = sample_fewshot_sets(
                    task.bundle.spec, task.bundle.train_pool, n_shot, manifest.n_replicates,
                    fewshot_seed(manifest, name, n_shot));
            }
            tasks.push_back(std::move(task));
        }
    }

    std::vector<PreparedUnit> all_units =
        prepare_units(manifest, config, tasks, *tokenizer, filler);

    RunOutcome outcome;
    outcome.total_units = all_units.size();

    ResultsStore store = std::filesystem::exists(run_dir / "results.jsonl")
                             ? ResultsStore::open(run_dir)
                             : ResultsStore(run_dir, manifest.digest());
    if (store.manifest_digest() != manifest.digest()) {
        throw ManifestMismatchError("run directory belongs to a different manifest");
    }

    auto unit_key_record = [](const PreparedUnit& unit) {
        UnitRecord key;
        key.grid_index = unit.request.unit.cell.grid_index;
        key.setting = unit.request.unit.cell.setting;
        key.setting_index = unit.request.unit.cell.setting_index;
        key.task_index = unit.request.unit.cell.task_index;
        key.perm_index = unit.request.unit.cell.perm_index;
        key.replicate = unit.request.unit.cell.replicate;
        key.instance_index = unit.request.unit.instance_index;
        return key;
    };
    std::vector<const PreparedUnit*> pending;
    for (const auto& unit : all_units) {
        if (!store.has(unit_key_record(unit))) pending.push_back(&unit);
    }
    if (options.max_units >= 0 && pending.size() > static_cast<std::size_t>(options.max_units)) {
        pending.resize(static_cast<std::size_t>(options.max_units));
    }

    ResponseCache cache(config.effective_cache_dir());
    LmClient client(config.endpoint, tokenizer, &cache);

    const std::string digest = manifest.digest();
    const std::size_t chunk =
        std::max<std::size_t>(static_cast<std::size_t>(std::max(options.heartbeat_every, 1)),
                              static_cast<std::size_t>(config.endpoint.max_parallel));
    for (std::size_t begin = 0; begin < pending.size(); begin += chunk) {
        std::size_t end = std::min(pending.size(), begin + chunk);
        std::vector<DispatchRequest> requests;
        requests.reserve(end - begin);
        for (std::size_t i = begin; i < end; ++i) requests.push_back(pending[i]->request);

        std::vector<DispatchResult> results = dispatch_batch(requests, client);
        for (std::size_t i = 0; i < results.size(); ++i) {
            const DispatchResult& result = results[i];
            const PreparedUnit& unit = *pending[begin + i];
            ++outcome.dispatched;
            if (!result.ok) {
                outcome.failures.push_back(setting_name(unit.request.unit.cell.setting) + " unit " +
                                           unit.request.unit.prompt_hash.substr(0, 12) + ": " +
                                           result.error);
                continue;
            }
            UnitRecord record;
            record.grid_index = unit.request.unit.cell.grid_index;
            record.setting = unit.request.unit.cell.setting;
            record.setting_index = unit.request.unit.cell.setting_index;
            record.task_index = unit.request.unit.cell.task_index;
            record.perm_index = unit.request.unit.cell.perm_index;
            record.replicate = unit.request.unit.cell.replicate;
            record.instance_index = unit.request.unit.instance_index;
            record.prompt_hash = unit.request.unit.prompt_hash;
            record.gold = unit.instance_gold;
            record.depth = unit.depth;
            record.context_tokens = unit.context_tokens;
            if (unit.request.unit.cell.setting == SettingKind::niah) {
                record.prediction = result.predicted;
                record.value = token_recall(result.predicted, unit.instance_gold);
            } else {
                record.prediction = result.predicted;
                record.no_match = result.predicted == kNoMatch;
                record.value = result.predicted == unit.instance_gold ? 1.0 : 0.0;
            }
            store.record(record, digest);
        }
        store.save();
        write_progress(run_dir, store.size(), outcome.total_units, outcome.dispatched);
        if (!options.quiet) {
            std::cerr << "[run] " << store.size() << "/" << outcome.total_units
                      << " units recorded\n";
        }
    }

    store.save();
    write_progress(run_dir, store.size(), outcome.total_units, outcome.dispatched);
    outcome.recorded_units = store.size();
    outcome.network_requests = client.network_requests();
    outcome.finished = outcome.recorded_units == outcome.total_units;
    return outcome;
}

RunScore score_run_dir(const std::filesystem::path& run_dir, double alpha, int icl_kshot) {
    std::ifstream manifest_in(run_dir / "manifest.json");
    if (!manifest_in) throw MissingFileError((run_dir / "manifest.json").string());
    json manifest_doc;
    manifest_in >> manifest_doc;
    RunManifest manifest = RunManifest::from_json(manifest_doc);
    ResultsStore store = ResultsStore::open(run_dir);
    if (store.size() == 0) throw MissingCellsError("results store is empty");
    RunScore score = score_results(manifest, store, alpha > 0 ? alpha : manifest.alpha, icl_kshot);
    write_verdicts(score, run_dir);
    write_summary(score, manifest, run_dir);
    return score;
}

void report_run_dir(const std::filesystem::path& run_dir, double alpha) {
    std::ifstream manifest_in(run_dir / "manifest.json");
    if (!manifest_in) throw MissingFileError((run_dir / "manifest.json").string());
    json manifest_doc;
    manifest_in >> manifest_doc;
    RunManifest manifest = RunManifest::from_json(manifest_doc);
    ResultsStore store = ResultsStore::open(run_dir);
    RunScore score = score_results(manifest, store, alpha > 0 ? alpha : manifest.alpha);

    auto reports = run_dir / "reports";
    if (manifest.mode == RunMode::niah) {
        emit_heatmap(build_niah_heatmap(manifest, score), reports / "heatmap.csv",
                     reports / "heatmap.svg");
        return;
    }
    if (manifest.mode == RunMode::controlled) {
        // Controlled runs have no verdict grid; the summary carries the
        // per-setting accuracies.
        write_summary(score, manifest, run_dir);
        return;
    }
    emit_heatmap(build_verdict_heatmap(manifest, score), reports / "heatmap.csv",
                 reports / "heatmap.svg");
    emit_diagnostic_report(manifest, score, reports / "diagnostic.csv",
                           reports / "diagnostic.svg");
    emit_histogram_csv(score, reports / "histogram.csv");
}

} // namespace haystack
