#include "haystack/experiment_plan.hpp"

#include "haystack/digest.hpp"
#include "haystack/errors.hpp"
#include "haystack/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <set>

namespace haystack {

namespace {

using nlohmann::json;

// n! saturated at 2^63-1, to decide whether P distinct permutations exist.
std::uint64_t saturating_factorial(int n) {
    std::uint64_t f = 1;
    for (int i = 2; i <= n; ++i) {
        if (f > UINT64_MAX / static_cast<std::uint64_t>(i) / 2) return UINT64_MAX;
        f *= static_cast<std::uint64_t>(i);
    }
    return f;
}

json setting_to_json(const ControlledSetting& s) {
    json doc;
    doc["kind"] = setting_name(s.kind);
    if (s.repetitions) doc["repetitions"] = *s.repetitions;
    if (!s.filler_source.empty()) doc["filler_source"] = s.filler_source;
    return doc;
}

ControlledSetting setting_from_json(const json& doc) {
    ControlledSetting s;
    s.kind = parse_setting(doc.at("kind").get<std::string>());
    if (doc.contains("repetitions")) s.repetitions = doc["repetitions"].get<int>();
    if (doc.contains("filler_source")) s.filler_source = doc["filler_source"].get<std::string>();
    return s;
}

std::vector<int> default_grid(RunMode mode, int n_available, int n_shot) {
    switch (mode) {
        case RunMode::scale_shot: return {1, 2, 4, 8};
        case RunMode::scale_task: {
            std::vector<int> grid;
            for (int v : {8, 16, 32, 64}) {
                if (v <= n_available) grid.push_back(v);
            }
            if (grid.empty()) grid.push_back(n_available);
            return grid;
        }
        case RunMode::controlled: return {n_shot};
        case RunMode::niah: return {0};
    }
    return {};
}

std::vector<ControlledSetting> resolve_controlled_settings(const HarnessConfig& config) {
    std::vector<std::string> names = config.controlled_settings;
    if (names.empty()) {
        names = {"baseline", "random",  "repeat", "repeat_shuffle",
                 "recall",   "replay",  "remove", "paraphrase"};
    }
    std::vector<ControlledSetting> settings;
    for (const auto& name : names) {
        ControlledSetting s;
        s.kind = parse_setting(name);
        if (s.kind == SettingKind::random) s.filler_source = config.filler_corpus.string();
        settings.push_back(std::move(s));
    }
    // Multi-epoch sweep: explicit repetition counts add repeat variants.
    for (int k : config.repetitions) {
        if (k < 1) throw ConfigError("repetitions entries must be >= 1");
        for (SettingKind kind : {SettingKind::repeat, SettingKind::repeat_shuffle}) {
            ControlledSetting s;
            s.kind = kind;
            s.repetitions = k;
            settings.push_back(std::move(s));
        }
    }
    return settings;
}

} // namespace

std::vector<std::vector<int>> sample_permutations(int n_task, int n_permutations,
                                                  std::uint64_t seed) {
    if (n_task < 1) throw ConfigError("n_task must be >= 1");
    const bool want_distinct =
        saturating_factorial(n_task) >= static_cast<std::uint64_t>(n_permutations);
    Rng rng(derive_seed(seed, "permutations"));
    std::vector<std::vector<int>> result;
    std::set<std::vector<int>> seen;
    while (static_cast<int>(result.size()) < n_permutations) {
        std::vector<int> perm(static_cast<std::size_t>(n_task));
        for (int i = 0; i < n_task; ++i) perm[static_cast<std::size_t>(i)] = i;
        rng.shuffle(perm);
        if (want_distinct && !seen.insert(perm).second) continue;
        result.push_back(std::move(perm));
    }
    return result;
}

std::vector<std::string> registry_task_names(const HarnessConfig& config) {
    namespace fs = std::filesystem;
    if (!config.tasks.empty()) {
        for (const auto& name : config.tasks) {
            if (!fs::exists(config.task_registry / name / "task.json")) {
                throw UnknownTaskError(name);
            }
        }
        return config.tasks;
    }
    if (!fs::is_directory(config.task_registry)) {
        throw MissingFileError(config.task_registry.string());
    }
    std::vector<std::string> names;
    for (const auto& entry : fs::directory_iterator(config.task_registry)) {
        if (entry.is_directory() && fs::exists(entry.path() / "task.json")) {
            names.push_back(entry.path().filename().string());
        }
    }
    std::sort(names.begin(), names.end());
    return names;
}

RunManifest make_plan(const HarnessConfig& config) {
    RunManifest manifest;
    manifest.seed = config.seed;
    manifest.mode = config.mode;
    manifest.task_names = registry_task_names(config);
    if (manifest.task_names.empty()) throw ConfigError("task registry has no bundles");
    const int n_available = static_cast<int>(manifest.task_names.size());

    manifest.n_task = config.n_task > 0 ? config.n_task : n_available;
    if (manifest.n_task > n_available) {
        throw ConfigError("n_task exceeds the " + std::to_string(n_available) +
                          " tasks in the registry");
    }
    manifest.n_shot = config.n_shot;
    manifest.n_permutations = config.n_permutations;
    manifest.n_replicates = config.n_replicates;
    manifest.model = config.endpoint.model_name;
    manifest.endpoint_base_url = config.endpoint.base_url;
    manifest.tokenizer_id = config.tokenizer_id;
    manifest.alpha = config.alpha;
    manifest.separator = config.separator;
    manifest.test_cap = config.test_cap;

    manifest.grid = config.grid.empty()
                        ? default_grid(config.mode, n_available, config.n_shot)
                        : config.grid;
    if (manifest.grid.empty()) throw GridEmptyError();
    for (std::size_t i = 1; i < manifest.grid.size(); ++i) {
        if (manifest.grid[i] <= manifest.grid[i - 1]) {
            throw ConfigError("grid values must be strictly increasing");
        }
    }

    if (config.mode == RunMode::controlled) {
        manifest.controlled_settings = resolve_controlled_settings(config);
    }
    if (config.mode == RunMode::niah) {
        manifest.niah = config.niah;
        if (manifest.niah.context_lengths.empty() || manifest.niah.depths.empty()) {
            throw GridEmptyError();
        }
    }

    for (std::size_t gi = 0; gi < manifest.grid.size(); ++gi) {
        GridPointPlan point;
        point.grid_value = manifest.grid[gi];
        switch (config.mode) {
            case RunMode::scale_shot:
                point.n_task = manifest.n_task;
                point.n_shot = manifest.grid[gi];
                break;
            case RunMode::scale_task:
                point.n_task = manifest.grid[gi];
                point.n_shot = manifest.n_shot;
                break;
            case RunMode::controlled:
            case RunMode::niah:
                point.n_task = manifest.n_task;
                point.n_shot = manifest.n_shot;
                break;
        }
        if (point.n_task > n_available) {
            throw ConfigError("grid asks for " + std::to_string(point.n_task) +
                              " tasks but the registry has " + std::to_string(n_available));
        }
        point.task_names.assign(manifest.task_names.begin(),
                                manifest.task_names.begin() + point.n_task);
        // Permutations are keyed by the subset size, so Scale-Shot grid
        // points share one set and task positions stay fixed across shots.
        point.permutations = sample_permutations(
            point.n_task, manifest.n_permutations,
            derive_seed(manifest.seed, "grid-permutations",
                        {static_cast<std::uint64_t>(point.n_task)}));
        manifest.grid_points.push_back(std::move(point));
    }
    manifest.permutations = manifest.grid_points.front().permutations;

    RunManifest unnamed = manifest;
    unnamed.run_id.clear();
    manifest.run_id = "run-" + sha256_hex(unnamed.canonical_text()).substr(0, 12);
    return manifest;
}

nlohmann::json RunManifest::to_json() const {
    json doc;
    doc["run_id"] = run_id;
    doc["seed"] = seed;
    doc["mode"] = mode_name(mode);
    doc["task_names"] = task_names;
    doc["n_task"] = n_task;
    doc["n_shot"] = n_shot;
    doc["permutations"] = permutations;
    doc["n_permutations"] = n_permutations;
    doc["n_replicates"] = n_replicates;
    json settings = json::array();
    for (const auto& s : controlled_settings) settings.push_back(setting_to_json(s));
    doc["controlled_settings"] = settings;
    doc["model"] = model;
    doc["endpoint_base_url"] = endpoint_base_url;
    doc["tokenizer_id"] = tokenizer_id;
    doc["alpha"] = alpha;
    doc["separator"] = separator;
    doc["test_cap"] = test_cap;
    doc["grid"] = grid;
    json points = json::array();
    for (const auto& p : grid_points) {
        points.push_back({{"grid_value", p.grid_value},
                          {"n_task", p.n_task},
                          {"n_shot", p.n_shot},
                          {"task_names", p.task_names},
                          {"permutations", p.permutations}});
    }
    doc["grid_points"] = points;
    if (mode == RunMode::niah) {
        doc["niah"] = {{"context_lengths", niah.context_lengths},
                       {"depths", niah.depths},
                       {"needle", niah.needle},
                       {"question", niah.question},
                       {"max_tokens", niah.max_tokens}};
    }
    return doc;
}

RunManifest RunManifest::from_json(const json& doc) {
    RunManifest m;
    m.run_id = doc.at("run_id").get<std::string>();
    m.seed = doc.at("seed").get<std::uint64_t>();
    m.mode = parse_mode(doc.at("mode").get<std::string>());
    m.task_names = doc.at("task_names").get<std::vector<std::string>>();
    m.n_task = doc.at("n_task").get<int>();
    m.n_shot = doc.at("n_shot").get<int>();
    m.permutations = doc.at("permutations").get<std::vector<std::vector<int>>>();
    m.n_permutations = doc.at("n_permutations").get<int>();
    m.n_replicates = doc.at("n_replicates").get<int>();
    for (const auto& s : doc.at("controlled_settings")) {
        m.controlled_settings.push_back(setting_from_json(s));
    }
    m.model = doc.at("model").get<std::string>();
    m.endpoint_base_url = doc.at("endpoint_base_url").get<std::string>();
    m.tokenizer_id = doc.at("tokenizer_id").get<std::string>();
    m.alpha = doc.at("alpha").get<double>();
    m.separator = doc.at("separator").get<std::string>();
    m.test_cap = doc.at("test_cap").get<std::size_t>();
    m.grid = doc.at("grid").get<std::vector<int>>();
    for (const auto& p : doc.at("grid_points")) {
        GridPointPlan point;
        point.grid_value = p.at("grid_value").get<int>();
        point.n_task = p.at("n_task").get<int>();
        point.n_shot = p.at("n_shot").get<int>();
        point.task_names = p.at("task_names").get<std::vector<std::string>>();
        point.permutations = p.at("permutations").get<std::vector<std::vector<int>>>();
        m.grid_points.push_back(std::move(point));
    }
    if (doc.contains("niah")) {
        const json& nh = doc["niah"];
        m.niah.context_lengths = nh.at("context_lengths").get<std::vector<int>>();
        m.niah.depths = nh.at("depths").get<std::vector<double>>();
        m.niah.needle = nh.at("needle").get<std::string>();
        m.niah.question = nh.at("question").get<std::string>();
        m.niah.max_tokens = nh.at("max_tokens").get<int>();
    }
    return m;
}

std::string RunManifest::canonical_text() const { return to_json().dump(2); }

std::string RunManifest::digest() const { return sha256_hex(canonical_text()); }

std::vector<CellRef> enumerate_cells(const RunManifest& manifest) {
    std::vector<CellRef> cells;
    if (manifest.mode == RunMode::niah) return cells; // planned by the niah driver

    for (std::size_t gi = 0; gi < manifest.grid_points.size(); ++gi) {
        const GridPointPlan& point = manifest.grid_points[gi];
        const int g = static_cast<int>(gi);

        if (manifest.mode == RunMode::controlled) {
            for (std::size_t si = 0; si < manifest.controlled_settings.size(); ++si) {
                const auto& setting = manifest.controlled_settings[si];
                for (int r = 0; r < manifest.n_replicates; ++r) {
                    for (int t = 0; t < point.n_task; ++t) {
                        CellRef cell;
                        cell.grid_index = g;
                        cell.setting = setting.kind;
                        cell.setting_index = static_cast<int>(si);
                        cell.task_index = t;
                        cell.perm_index = setting.kind == SettingKind::single_task ? -1 : 0;
                        cell.replicate = r;
                        cells.push_back(cell);
                    }
                }
            }
            continue;
        }

        // Baseline arm: one cell per (task, replicate), shared across
        // permutations.
        for (int r = 0; r < manifest.n_replicates; ++r) {
            for (int t = 0; t < point.n_task; ++t) {
                CellRef cell;
                cell.grid_index = g;
                cell.setting = SettingKind::single_task;
                cell.task_index = t;
                cell.perm_index = -1;
                cell.replicate = r;
                cells.push_back(cell);
            }
        }
        // Lifelong arm: tasks innermost so cells sharing the (p, r) context
        // stay contiguous for prefix-cache-friendly dispatch.
        for (int p = 0; p < manifest.n_permutations; ++p) {
            for (int r = 0; r < manifest.n_replicates; ++r) {
                for (int t = 0; t < point.n_task; ++t) {
                    CellRef cell;
                    cell.grid_index = g;
                    cell.setting = SettingKind::lifelong;
                    cell.task_index = t;
                    cell.perm_index = p;
                    cell.replicate = r;
                    cells.push_back(cell);
                }
            }
        }
    }
    return cells;
}

std::uint64_t fewshot_seed(const RunManifest& manifest, const std::string& task_name,
                           int n_shot) {
    return derive_seed(manifest.seed, "fewshot",
                       {fnv1a64(task_name), static_cast<std::uint64_t>(n_shot)});
}

} // namespace haystack
