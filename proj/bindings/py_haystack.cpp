#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "haystack/config.hpp"
#include "haystack/experiment_plan.hpp"
#include "haystack/prompt_builder.hpp"
#include "haystack/runner.hpp"
#include "haystack/stats.hpp"
#include "haystack/task_model.hpp"
#include "haystack/tokenizer.hpp"

#include <nlohmann/json.hpp>

#include <fstream>

namespace py = pybind11;
using namespace haystack;

namespace {

HarnessConfig config_from_json_text(const std::string& text) {
    return HarnessConfig::from_json(nlohmann::json::parse(text));
}

// Python-side handle around the (const) tokenizer pointer.
struct PyTokenizer {
    TokenizerPtr ptr;
    const Tokenizer& get() const { return *ptr; }
};

} // namespace

PYBIND11_MODULE(_taskhaystack, m) {
    m.doc() = "Lifelong ICL / Task Haystack evaluation harness (C++ core)";

    py::class_<PyTokenizer>(m, "Tokenizer")
        .def("count",
             [](const PyTokenizer& self, const std::string& text) { return self.get().count(text); })
        .def("encode",
             [](const PyTokenizer& self, const std::string& text) {
                 std::vector<std::string> pieces;
                 for (const auto& token : self.get().encode(text)) pieces.push_back(token.text);
                 return pieces;
             })
        .def("first_token",
             [](const PyTokenizer& self, const std::string& text) {
                 return self.get().first_token(text);
             })
        .def_property_readonly("id", [](const PyTokenizer& self) { return self.get().id(); });
    m.def(
        "make_tokenizer",
        [](const std::string& tokenizer_id) { return PyTokenizer{make_tokenizer(tokenizer_id)}; },
        py::arg("tokenizer_id") = "whitespace");

    py::class_<TaskSpec>(m, "TaskSpec")
        .def_readonly("name", &TaskSpec::name)
        .def_readonly("options", &TaskSpec::options)
        .def_readonly("instruction", &TaskSpec::instruction)
        .def_readonly("instruction_paraphrase", &TaskSpec::instruction_paraphrase)
        .def_readonly("demonstration_template", &TaskSpec::demonstration_template)
        .def_readonly("inference_template", &TaskSpec::inference_template);

    py::class_<LabeledExample>(m, "LabeledExample")
        .def_readonly("inputs", &LabeledExample::inputs)
        .def_readonly("label", &LabeledExample::label);

    py::class_<FewShotSample>(m, "FewShotSample")
        .def_readonly("task_name", &FewShotSample::task_name)
        .def_readonly("replicate_index", &FewShotSample::replicate_index)
        .def_readonly("examples", &FewShotSample::examples);

    py::class_<TestSet>(m, "TestSet")
        .def_readonly("task_name", &TestSet::task_name)
        .def_readonly("instances", &TestSet::instances);

    py::class_<TaskBundle>(m, "TaskBundle")
        .def_readonly("spec", &TaskBundle::spec)
        .def_readonly("train_pool", &TaskBundle::train_pool)
        .def_readonly("test_set", &TaskBundle::test_set)
        .def_readonly("load_warnings", &TaskBundle::load_warnings);

    m.def("load_task_bundle", &load_task_bundle, py::arg("path"), py::arg("test_cap") = 100);
    m.def(
        "validate_task",
        [](const TaskSpec& spec, const PyTokenizer& tokenizer) {
            std::vector<std::pair<std::string, std::string>> issues;
            for (const auto& issue : validate_task(spec, tokenizer.get()).issues) {
                issues.emplace_back(issue.code, issue.detail);
            }
            return issues;
        },
        py::arg("spec"), py::arg("tokenizer"));
    m.def("sample_fewshot_sets", &sample_fewshot_sets, py::arg("spec"), py::arg("pool"),
          py::arg("n_shot"), py::arg("n_replicates"), py::arg("seed"));
    m.def("render_demonstration", &render_demonstration);
    m.def("render_inference", &render_inference);

    py::class_<PromptBlock>(m, "PromptBlock")
        .def_readonly("task_name", &PromptBlock::task_name)
        .def_readonly("char_start", &PromptBlock::char_start)
        .def_readonly("char_end", &PromptBlock::char_end)
        .def_readonly("token_start", &PromptBlock::token_start)
        .def_readonly("token_end", &PromptBlock::token_end);

    py::class_<PromptRecord>(m, "PromptRecord")
        .def_readonly("text", &PromptRecord::text)
        .def_readonly("blocks", &PromptRecord::blocks)
        .def_readonly("total_tokens", &PromptRecord::total_tokens)
        .def_readonly("separator", &PromptRecord::separator);

    m.def(
        "build_single_task_prompt",
        [](const TaskSpec& spec, const FewShotSample& sample, const PyTokenizer& tokenizer,
           const std::string& separator) {
            return build_single_task_prompt(spec, sample, tokenizer.get(), separator);
        },
        py::arg("spec"), py::arg("sample"), py::arg("tokenizer"),
        py::arg("separator") = "\n\n");
    m.def(
        "build_lifelong_prompt",
        [](const std::vector<std::pair<TaskSpec, FewShotSample>>& tasks,
           const PyTokenizer& tokenizer, const std::string& separator) {
            std::vector<TaskContext> contexts;
            contexts.reserve(tasks.size());
            for (const auto& [spec, sample] : tasks) contexts.push_back({&spec, &sample});
            return build_lifelong_prompt(contexts, tokenizer.get(), separator);
        },
        py::arg("tasks"), py::arg("tokenizer"), py::arg("separator") = "\n\n");
    m.def("build_query", &build_query, py::arg("context"), py::arg("spec"),
          py::arg("test_inputs"), py::arg("paraphrase") = false);
    m.def("measure_depth", &measure_depth, py::arg("context"), py::arg("task_name"),
          py::arg("midpoint") = false);

    m.def("sample_permutations", &sample_permutations, py::arg("n_task"),
          py::arg("n_permutations"), py::arg("seed"));
    m.def(
        "make_plan",
        [](const std::string& config_json) {
            return make_plan(config_from_json_text(config_json)).canonical_text();
        },
        py::arg("config_json"), "Plan from a config JSON string; returns the manifest JSON");
    m.def(
        "cell_counts",
        [](const std::string& manifest_json) {
            auto manifest = RunManifest::from_json(nlohmann::json::parse(manifest_json));
            std::map<std::string, int> counts;
            for (const auto& cell : enumerate_cells(manifest)) ++counts[setting_name(cell.setting)];
            return counts;
        },
        py::arg("manifest_json"));

    m.def("regularized_incomplete_beta", &regularized_incomplete_beta);
    m.def("student_t_cdf", &student_t_cdf);
    m.def(
        "paired_t_test",
        [](const std::vector<double>& a, const std::vector<double>& b) {
            auto result = paired_t_test(a, b);
            return std::make_pair(result.t_statistic, result.p_value);
        },
        py::arg("a"), py::arg("b"));
    m.def(
        "cell_verdict",
        [](const std::vector<double>& single_accs, const std::vector<double>& lifelong_accs,
           double alpha) {
            auto cell = cell_verdict(single_accs, lifelong_accs, alpha);
            return py::make_tuple(verdict_name(cell.verdict), cell.t_statistic, cell.p_value);
        },
        py::arg("single_accs"), py::arg("lifelong_accs"), py::arg("alpha") = 0.05);
    m.def("token_recall", &token_recall, py::arg("response"), py::arg("needle"));
    m.def("accuracy",
          py::overload_cast<const std::vector<std::string>&, const std::vector<std::string>&>(
              &accuracy),
          py::arg("predictions"), py::arg("gold"));

    m.def(
        "run",
        [](const std::string& config_json, long max_units) {
            HarnessConfig config = config_from_json_text(config_json);
            RunManifest manifest = make_plan(config);
            RunOptions options;
            options.max_units = max_units;
            options.quiet = true;
            RunOutcome outcome = run_manifest(manifest, config, options);
            py::dict result;
            result["total_units"] = outcome.total_units;
            result["recorded_units"] = outcome.recorded_units;
            result["network_requests"] = outcome.network_requests;
            result["failures"] = outcome.failures;
            result["finished"] = outcome.finished;
            result["run_dir"] = config.output_dir.string();
            return result;
        },
        py::arg("config_json"), py::arg("max_units") = -1,
        "Plan and execute a run; returns outcome counters");
    m.def(
        "score",
        [](const std::string& run_dir, double alpha, int icl_kshot) {
            score_run_dir(run_dir, alpha, icl_kshot);
            std::ifstream in(std::filesystem::path(run_dir) / "summary.json");
            return std::string((std::istreambuf_iterator<char>(in)),
                               std::istreambuf_iterator<char>());
        },
        py::arg("run_dir"), py::arg("alpha") = -1.0, py::arg("icl_kshot") = 4,
        "Score a run directory; returns summary.json text");
    m.def(
        "report",
        [](const std::string& run_dir) { report_run_dir(run_dir); }, py::arg("run_dir"));
}
