#include "haystack/stats.hpp"

#include "haystack/errors.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <set>

namespace haystack {

namespace {

// Continued fraction for I_x(a,b), modified Lentz. Converges quickly for
// x < (a+1)/(a+b+2); the caller applies the symmetry for the other half.
double beta_continued_fraction(double x, double a, double b) {
    constexpr double tiny = 1e-300;
    constexpr double eps = 1e-16;
    constexpr int max_iter = 400;

    double qab = a + b;
    double qap = a + 1.0;
    double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= max_iter; ++m) {
        double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < eps) break;
    }
    return h;
}

double log_beta(double a, double b) { return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b); }

double sample_sd(std::span<const double> values, double mean) {
    // Fixed left-to-right reduction for bit-stable results.
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return std::sqrt(ss / (static_cast<double>(values.size()) - 1.0));
}

} // namespace

double regularized_incomplete_beta(double x, double a, double b) {
    if (!(a > 0.0) || !(b > 0.0) || std::isnan(x)) return std::numeric_limits<double>::quiet_NaN();
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    double front = std::exp(a * std::log(x) + b * std::log1p(-x) - log_beta(a, b));
    if (x < (a + 1.0) / (a + b + 2.0)) {
        return front * beta_continued_fraction(x, a, b) / a;
    }
    return 1.0 - std::exp(b * std::log1p(-x) + a * std::log(x) - log_beta(b, a)) *
                     beta_continued_fraction(1.0 - x, b, a) / b;
}

double student_t_cdf(double t, double df) {
    if (!(df > 0.0)) return std::numeric_limits<double>::quiet_NaN();
    if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
    double half_tail = 0.5 * regularized_incomplete_beta(df / (df + t * t), df / 2.0, 0.5);
    return t >= 0.0 ? 1.0 - half_tail : half_tail;
}

TTestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw LengthMismatchError(a.size(), b.size());
    if (a.size() < 2) throw TooFewPairsError(a.size());
    const double n = static_cast<double>(a.size());

    std::vector<double> diffs(a.size());
    bool all_equal = true;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diffs[i] = a[i] - b[i];
        all_equal &= diffs[i] == diffs[0];
    }
    double mean = 0.0;
    for (double d : diffs) mean += d;
    mean /= n;
    if (all_equal) mean = diffs[0]; // keep the zero-variance case exact
    double sd = all_equal ? 0.0 : sample_sd(diffs, mean);

    TTestResult result;
    if (sd == 0.0) {
        if (mean == 0.0) {
            result.t_statistic = 0.0;
            result.p_value = 1.0;
        } else {
            result.t_statistic = mean > 0 ? std::numeric_limits<double>::infinity()
                                          : -std::numeric_limits<double>::infinity();
            result.p_value = 0.0;
        }
        return result;
    }
    double t = mean * std::sqrt(n) / sd;
    double df = n - 1.0;
    result.t_statistic = t;
    result.p_value = regularized_incomplete_beta(df / (df + t * t), df / 2.0, 0.5);
    return result;
}

double accuracy(const std::vector<std::string>& predictions,
                const std::vector<std::string>& gold) {
    if (predictions.size() != gold.size()) throw LengthMismatchError(predictions.size(), gold.size());
    if (predictions.empty()) throw EmptySetError("accuracy over an empty set");
    double correct = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        if (predictions[i] == gold[i]) correct += 1.0;
    }
    return correct / static_cast<double>(predictions.size());
}

double accuracy(std::span<const int> correct_indicators) {
    if (correct_indicators.empty()) throw EmptySetError("accuracy over an empty set");
    double correct = 0.0;
    for (int v : correct_indicators) correct += v ? 1.0 : 0.0;
    return correct / static_cast<double>(correct_indicators.size());
}

std::string verdict_name(Verdict v) {
    switch (v) {
        case Verdict::PASS: return "PASS";
        case Verdict::FAIL: return "FAIL";
        case Verdict::EXCEL: return "EXCEL";
        case Verdict::INCOMPLETE: return "INCOMPLETE";
    }
    return "?";
}

CellVerdict cell_verdict(std::span<const double> single_accs,
                         std::span<const double> lifelong_accs, double alpha) {
    CellVerdict cell;
    cell.n_pairs = static_cast<int>(single_accs.size());
    TTestResult tt = paired_t_test(lifelong_accs, single_accs);
    cell.t_statistic = tt.t_statistic;
    cell.p_value = tt.p_value;
    double ms = 0.0, ml = 0.0;
    for (double v : single_accs) ms += v;
    for (double v : lifelong_accs) ml += v;
    cell.mean_single = ms / static_cast<double>(single_accs.size());
    cell.mean_lifelong = ml / static_cast<double>(lifelong_accs.size());
    if (tt.p_value < alpha && cell.mean_lifelong < cell.mean_single) {
        cell.verdict = Verdict::FAIL;
    } else if (tt.p_value < alpha && cell.mean_lifelong > cell.mean_single) {
        cell.verdict = Verdict::EXCEL;
    } else {
        cell.verdict = Verdict::PASS;
    }
    return cell;
}

PassRateSummary pass_rate(const std::vector<CellVerdict>& verdicts,
                          const std::vector<std::vector<int>>& permutations,
                          const std::vector<std::string>& task_names) {
    if (verdicts.empty()) throw MissingCellsError("no verdict cells");
    const std::size_t n_task = task_names.size();
    const std::size_t n_perm = permutations.size();
    for (const auto& v : verdicts) {
        if (v.verdict == Verdict::INCOMPLETE) {
            throw MissingCellsError("cell (" + std::to_string(v.task) + "," +
                                    std::to_string(v.permutation) + ") is incomplete");
        }
    }

    PassRateSummary summary;
    summary.n_cells = static_cast<int>(verdicts.size());
    std::vector<double> task_pass(n_task, 0.0), task_count(n_task, 0.0);
    std::vector<double> index_pass(n_task, 0.0), index_count(n_task, 0.0);
    std::vector<double> perm_pass(n_perm, 0.0), perm_count(n_perm, 0.0);
    std::vector<int> task_fails(n_task, 0), task_excels(n_task, 0);

    double passed = 0.0;
    for (const auto& v : verdicts) {
        bool pass = v.verdict == Verdict::PASS || v.verdict == Verdict::EXCEL;
        passed += pass ? 1.0 : 0.0;
        const auto t = static_cast<std::size_t>(v.task);
        const auto p = static_cast<std::size_t>(v.permutation);
        task_pass[t] += pass;
        task_count[t] += 1.0;
        perm_pass[p] += pass;
        perm_count[p] += 1.0;
        if (v.verdict == Verdict::FAIL) ++task_fails[t];
        if (v.verdict == Verdict::EXCEL) ++task_excels[t];
        // Stream position of task t under permutation p.
        const auto& perm = permutations.at(p);
        auto it = std::find(perm.begin(), perm.end(), v.task);
        if (it == perm.end()) throw MissingCellsError("task not present in its permutation");
        auto pos = static_cast<std::size_t>(it - perm.begin());
        index_pass[pos] += pass;
        index_count[pos] += 1.0;
    }
    summary.overall = passed / static_cast<double>(verdicts.size());
    for (std::size_t t = 0; t < n_task; ++t) {
        if (task_count[t] > 0) summary.by_task[task_names[t]] = task_pass[t] / task_count[t];
    }
    summary.by_index.resize(n_task, 0.0);
    for (std::size_t i = 0; i < n_task; ++i) {
        summary.by_index[i] = index_count[i] > 0 ? index_pass[i] / index_count[i] : 0.0;
    }
    summary.by_permutation.resize(n_perm, 0.0);
    for (std::size_t p = 0; p < n_perm; ++p) {
        summary.by_permutation[p] = perm_count[p] > 0 ? perm_pass[p] / perm_count[p] : 0.0;
    }
    summary.fail_histogram.assign(n_perm + 1, 0);
    summary.excel_histogram.assign(n_perm + 1, 0);
    for (std::size_t t = 0; t < n_task; ++t) {
        if (task_count[t] == 0) continue;
        summary.fail_histogram[static_cast<std::size_t>(task_fails[t])] += 1;
        summary.excel_histogram[static_cast<std::size_t>(task_excels[t])] += 1;
    }
    return summary;
}

std::vector<int> icl_effective_tasks(const std::vector<std::vector<double>>& acc_1shot,
                                     const std::vector<std::vector<double>>& acc_kshot,
                                     double alpha) {
    if (acc_1shot.size() != acc_kshot.size()) {
        throw LengthMismatchError(acc_1shot.size(), acc_kshot.size());
    }
    std::vector<int> effective;
    for (std::size_t t = 0; t < acc_1shot.size(); ++t) {
        TTestResult tt = paired_t_test(acc_kshot[t], acc_1shot[t]);
        double gain = 0.0;
        for (std::size_t r = 0; r < acc_kshot[t].size(); ++r) gain += acc_kshot[t][r] - acc_1shot[t][r];
        if (tt.p_value < alpha && gain > 0.0) effective.push_back(static_cast<int>(t));
    }
    return effective;
}

std::vector<std::string> recall_tokens(const std::string& text) {
    std::vector<std::string> tokens;
    std::string current;
    for (unsigned char c : text) {
        if (std::isalnum(c)) {
            current.push_back(static_cast<char>(std::tolower(c)));
        } else if (!current.empty()) {
            tokens.push_back(current);
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(current);
    return tokens;
}

double token_recall(const std::string& response, const std::string& needle) {
    auto needle_tokens = recall_tokens(needle);
    if (needle_tokens.empty()) throw EmptyNeedleError();
    auto response_tokens = recall_tokens(response);
    std::map<std::string, int> available;
    for (const auto& t : response_tokens) ++available[t];
    int hit = 0;
    for (const auto& t : needle_tokens) {
        auto it = available.find(t);
        if (it != available.end() && it->second > 0) {
            --it->second;
            ++hit;
        }
    }
    return static_cast<double>(hit) / static_cast<double>(needle_tokens.size());
}

} // namespace haystack
