#include "haystack/config.hpp"
#include "haystack/errors.hpp"
#include "haystack/experiment_plan.hpp"
#include "haystack/mock_lm.hpp"
#include "haystack/runner.hpp"
#include "haystack/task_model.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <csignal>
#include <fstream>
#include <iostream>
#include <optional>
#include <thread>

namespace {

using haystack::HarnessConfig;
using haystack::RunManifest;

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitConfig = 2;
constexpr int kExitEndpoint = 3;

struct CommonArgs {
    std::string config_path;
    std::optional<std::string> output_dir;
    std::optional<std::string> base_url;
    std::optional<std::string> model;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> tokenizer;
};

HarnessConfig load_config(const CommonArgs& args) {
    HarnessConfig config = HarnessConfig::load(args.config_path);
    // Precedence: command-line flag > config file > default.
    if (args.output_dir) config.output_dir = *args.output_dir;
    if (args.base_url) config.endpoint.base_url = *args.base_url;
    if (args.model) config.endpoint.model_name = *args.model;
    if (args.seed) config.seed = *args.seed;
    if (args.tokenizer) config.tokenizer_id = *args.tokenizer;
    return config;
}

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "Harness config file (JSON)")->required();
    cmd->add_option("--out", args.output_dir, "Run directory override");
    cmd->add_option("--base-url", args.base_url, "Endpoint base URL override");
    cmd->add_option("--model", args.model, "Model name override");
    cmd->add_option("--seed", args.seed, "Seed override");
    cmd->add_option("--tokenizer", args.tokenizer, "Tokenizer id override");
}

int cmd_validate(const HarnessConfig& config) {
    auto names = haystack::registry_task_names(config);
    auto tokenizer = haystack::make_tokenizer(config.tokenizer_id);
    int violations = 0;
    for (const auto& name : names) {
        auto bundle = haystack::load_task_bundle(config.task_registry / name, config.test_cap);
        for (const auto& warning : bundle.load_warnings) std::cerr << "warning: " << warning << '\n';
        auto report = haystack::validate_task(bundle.spec, *tokenizer);
        if (report.ok()) {
            std::cout << name << ": ok\n";
        } else {
            for (const auto& issue : report.issues) {
                std::cout << name << ": " << issue.code << ": " << issue.detail << '\n';
                ++violations;
            }
        }
    }
    return violations == 0 ? kExitOk : kExitValidation;
}

int cmd_plan(const HarnessConfig& config, const std::string& manifest_out) {
    RunManifest manifest = haystack::make_plan(config);
    std::filesystem::path path = manifest_out.empty()
                                     ? config.output_dir / "manifest.json"
                                     : std::filesystem::path(manifest_out);
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    out << manifest.canonical_text() << '\n';
    std::cout << "wrote " << path.string() << " (" << manifest.run_id << ")\n";
    return kExitOk;
}

RunManifest load_or_plan_manifest(const HarnessConfig& config, const std::string& manifest_path) {
    std::filesystem::path path = manifest_path.empty()
                                     ? config.output_dir / "manifest.json"
                                     : std::filesystem::path(manifest_path);
    if (std::filesystem::exists(path)) {
        std::ifstream in(path);
        nlohmann::json doc;
        in >> doc;
        return RunManifest::from_json(doc);
    }
    return haystack::make_plan(config);
}

int cmd_run(const HarnessConfig& config, const std::string& manifest_path, long max_units) {
    RunManifest manifest = load_or_plan_manifest(config, manifest_path);
    haystack::RunOptions options;
    options.max_units = max_units;
    haystack::RunOutcome outcome = haystack::run_manifest(manifest, config, options);
    std::cout << "recorded " << outcome.recorded_units << "/" << outcome.total_units
              << " units, " << outcome.network_requests << " network requests\n";
    if (!outcome.failures.empty()) {
        std::cerr << outcome.failures.size() << " units failed:\n";
        for (const auto& failure : outcome.failures) std::cerr << "  " << failure << '\n';
        return kExitEndpoint;
    }
    return kExitOk;
}

int cmd_score(const std::string& run_dir, double alpha, int icl_kshot) {
    auto score = haystack::score_run_dir(run_dir, alpha, icl_kshot);
    for (const auto& gp : score.points) {
        std::cout << "grid " << gp.grid_value << ": s-acc " << gp.mean_single_acc << ", l-acc "
                  << gp.mean_lifelong_acc << ", pass " << gp.summary.overall << '\n';
    }
    for (const auto& cs : score.controlled) {
        std::cout << cs.setting;
        if (cs.repetitions > 0) std::cout << " x" << cs.repetitions;
        std::cout << ": acc " << cs.mean_acc << '\n';
    }
    return kExitOk;
}

int cmd_report(const std::string& run_dir, double alpha) {
    haystack::report_run_dir(run_dir, alpha);
    std::cout << "reports written under " << run_dir << "/reports\n";
    return kExitOk;
}

int cmd_niah(HarnessConfig config, const std::string& manifest_path, long max_units) {
    config.mode = haystack::RunMode::niah;
    RunManifest manifest = load_or_plan_manifest(config, manifest_path);
    haystack::RunOptions options;
    options.max_units = max_units;
    haystack::RunOutcome outcome = haystack::run_manifest(manifest, config, options);
    if (!outcome.failures.empty()) {
        std::cerr << outcome.failures.size() << " units failed\n";
        return kExitEndpoint;
    }
    haystack::report_run_dir(config.output_dir);
    std::cout << "recall heatmap written under " << config.output_dir.string() << "/reports\n";
    return kExitOk;
}

int cmd_mock_serve(const std::string& script_path, int port) {
    haystack::MockServer server(haystack::MockScript::load(script_path), port);
    server.start();
    std::cout << "mock endpoint listening on " << server.base_url() << " (ctrl-c to stop)\n";
    static std::atomic<bool> stop_flag{false};
    std::signal(SIGINT, [](int) { stop_flag.store(true); });
    std::signal(SIGTERM, [](int) { stop_flag.store(true); });
    while (!stop_flag.load()) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    server.stop();
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Lifelong ICL / Task Haystack evaluation harness"};
    app.require_subcommand(1);

    CommonArgs args;
    std::string manifest_path;
    std::string run_dir;
    std::string script_path;
    double alpha = -1.0;
    int icl_kshot = 4;
    long max_units = -1;
    int port = 8900;

    auto* validate = app.add_subcommand("validate", "Check every task bundle in the registry");
    add_common(validate, args);

    auto* plan = app.add_subcommand("plan", "Write a seeded run manifest");
    add_common(plan, args);
    plan->add_option("--manifest", manifest_path, "Manifest output path");

    auto* run = app.add_subcommand("run", "Execute a planned run (resumable)");
    add_common(run, args);
    run->add_option("--manifest", manifest_path, "Manifest to execute");
    run->add_option("--max-units", max_units, "Stop after N new units (testing/ops)");

    auto* score = app.add_subcommand("score", "Compute verdicts and summaries for a run");
    score->add_option("--run", run_dir, "Run directory")->required();
    score->add_option("--alpha", alpha, "Significance level override");
    score->add_option("--icl-k", icl_kshot, "k for the ICL-effectiveness split");

    auto* report = app.add_subcommand("report", "Emit heatmap/diagnostic reports for a run");
    report->add_option("--run", run_dir, "Run directory")->required();
    report->add_option("--alpha", alpha, "Significance level override");

    auto* niah = app.add_subcommand("niah", "Classic needle-recall sweep with generation scoring");
    add_common(niah, args);
    niah->add_option("--manifest", manifest_path, "Manifest to execute");
    niah->add_option("--max-units", max_units, "Stop after N new units");

    auto* mock = app.add_subcommand("mock-serve", "Serve the scripted mock endpoint over HTTP");
    mock->add_option("--script", script_path, "Mock script (JSON)")->required();
    mock->add_option("--port", port, "Port to bind");

    CLI11_PARSE(app, argc, argv);

    try {
        if (validate->parsed()) return cmd_validate(load_config(args));
        if (plan->parsed()) return cmd_plan(load_config(args), manifest_path);
        if (run->parsed()) return cmd_run(load_config(args), manifest_path, max_units);
        if (score->parsed()) return cmd_score(run_dir, alpha, icl_kshot);
        if (report->parsed()) return cmd_report(run_dir, alpha);
        if (niah->parsed()) return cmd_niah(load_config(args), manifest_path, max_units);
        if (mock->parsed()) return cmd_mock_serve(script_path, port);
    } catch (const haystack::EndpointUnavailableError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitEndpoint;
    } catch (const haystack::PortInUseError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitEndpoint;
    } catch (const haystack::HaystackError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    }
    return kExitConfig;
}
