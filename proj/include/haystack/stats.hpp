#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace haystack {

// --- distribution machinery ------------------------------------------------

// Regularized incomplete beta I_x(a, b), continued-fraction evaluation,
// absolute error <= 1e-12 on [0, 1].
double regularized_incomplete_beta(double x, double a, double b);

// CDF of Student's t with df degrees of freedom.
double student_t_cdf(double t, double df);

struct TTestResult {
    double t_statistic = 0.0;
    double p_value = 1.0;
};

// Two-sided paired t-test on equal-length lists (paired by index).
// Degenerate conventions: zero-variance zero-mean differences give (0, 1);
// zero-variance nonzero-mean give (+/-inf, 0).
TTestResult paired_t_test(std::span<const double> a, std::span<const double> b);

// --- accuracies and verdicts -------------------------------------------------

double accuracy(const std::vector<std::string>& predictions,
                const std::vector<std::string>& gold);
double accuracy(std::span<const int> correct_indicators);

enum class Verdict { PASS, FAIL, EXCEL, INCOMPLETE };

std::string verdict_name(Verdict v);

struct CellVerdict {
    int task = 0;
    int permutation = 0;
    Verdict verdict = Verdict::INCOMPLETE;
    double t_statistic = 0.0;
    double p_value = 1.0;
    double mean_single = 0.0;
    double mean_lifelong = 0.0;
    int n_pairs = 0;
};

// FAIL when lifelong is significantly below single at level alpha, EXCEL when
// significantly above, PASS otherwise. Lists are paired by replicate.
CellVerdict cell_verdict(std::span<const double> single_accs,
                         std::span<const double> lifelong_accs, double alpha);

struct PassRateSummary {
    double overall = 0.0;
    std::map<std::string, double> by_task;
    std::vector<double> by_index;        // stream position -> pass fraction
    std::vector<double> by_permutation;  // p -> pass fraction
    std::vector<int> fail_histogram;     // #fails in {0..P} -> #tasks
    std::vector<int> excel_histogram;
    int n_cells = 0;
};

// Aggregates verdicts over (task, permutation) cells. `permutations[p][i]`
// is the task index at stream position i; `task_names` maps task index to
// name. PASS and EXCEL both count toward the pass rate.
PassRateSummary pass_rate(const std::vector<CellVerdict>& verdicts,
                          const std::vector<std::vector<int>>& permutations,
                          const std::vector<std::string>& task_names);

// Tasks whose k-shot accuracy significantly exceeds their 1-shot accuracy:
// two-sided p < alpha and positive mean gain. Inputs are per-task lists of
// per-replicate accuracies, paired by replicate.
std::vector<int> icl_effective_tasks(const std::vector<std::vector<double>>& acc_1shot,
                                     const std::vector<std::vector<double>>& acc_kshot,
                                     double alpha);

// Token-level recall of `response` against `needle`: lowercase, split on
// whitespace and punctuation, |multiset intersection| / |needle tokens|.
double token_recall(const std::string& response, const std::string& needle);

std::vector<std::string> recall_tokens(const std::string& text);

} // namespace haystack
