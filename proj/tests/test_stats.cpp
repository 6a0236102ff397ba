#include "haystack/stats.hpp"

#include "haystack/errors.hpp"
#include "haystack/rng.hpp"
#include "support/t_oracle.hpp"

#include <doctest.h>

#include <cmath>

using namespace haystack;

TEST_CASE("regularized incomplete beta matches reference values") {
    // Golden values recorded once from a trusted reference implementation.
    CHECK(regularized_incomplete_beta(0.3, 2, 3) == doctest::Approx(0.3483).epsilon(1e-12));
    CHECK(regularized_incomplete_beta(0.5, 0.5, 0.5) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(regularized_incomplete_beta(0.9, 5, 1.5) ==
          doctest::Approx(0.776172134316216).epsilon(1e-12));
    CHECK(regularized_incomplete_beta(0.0, 2, 3) == 0.0);
    CHECK(regularized_incomplete_beta(1.0, 2, 3) == 1.0);
}

TEST_CASE("student t cdf matches reference values") {
    CHECK(student_t_cdf(1.0, 4) == doctest::Approx(0.813049516849971).epsilon(1e-12));
    CHECK(student_t_cdf(-2.5, 7) == doctest::Approx(0.0204961092928764).epsilon(1e-12));
    CHECK(student_t_cdf(0.0, 4) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("paired t test: golden example") {
    std::vector<double> a = {0.70, 0.72, 0.68, 0.71, 0.69};
    std::vector<double> b = {0.60, 0.62, 0.58, 0.66, 0.64};
    auto result = paired_t_test(a, b);
    // Recorded from the reference implementation.
    CHECK(result.t_statistic == doctest::Approx(6.5319726474218).epsilon(1e-10));
    CHECK(std::fabs(result.p_value - 0.00283784592673447) < 1e-12);
    // And against the quadrature oracle.
    CHECK(std::fabs(result.p_value - oracle::two_sided_p(result.t_statistic, 4)) < 1e-11);
}

TEST_CASE("paired t test: degenerate conventions") {
    std::vector<double> a = {0.8, 0.8, 0.8, 0.8, 0.8};
    auto equal = paired_t_test(a, a);
    CHECK(equal.t_statistic == 0.0);
    CHECK(equal.p_value == 1.0);

    std::vector<double> b = {0.6, 0.6, 0.6, 0.6, 0.6};
    auto shifted = paired_t_test(a, b);
    CHECK(std::isinf(shifted.t_statistic));
    CHECK(shifted.t_statistic > 0);
    CHECK(shifted.p_value == 0.0);

    auto negated = paired_t_test(b, a);
    CHECK(negated.t_statistic < 0);
    CHECK(negated.p_value == 0.0);
}

TEST_CASE("paired t test: critical value at df=4") {
    // |t| = 2.7764 is the two-sided 5% point with 5 replicates.
    double p = 2.0 * (1.0 - student_t_cdf(2.7764, 4.0));
    CHECK(std::fabs(p - 0.05) < 1e-4);
}

TEST_CASE("paired t test: errors") {
    std::vector<double> two = {0.1, 0.2};
    std::vector<double> three = {0.1, 0.2, 0.3};
    CHECK_THROWS_AS(paired_t_test(two, three), LengthMismatchError);
    std::vector<double> one = {0.1};
    CHECK_THROWS_AS(paired_t_test(one, one), TooFewPairsError);
}

TEST_CASE("paired t test properties: symmetry and shift invariance") {
    Rng rng(99);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> a(5), b(5);
        for (int i = 0; i < 5; ++i) {
            a[static_cast<std::size_t>(i)] = rng.unit();
            b[static_cast<std::size_t>(i)] = rng.unit();
        }
        auto ab = paired_t_test(a, b);
        auto ba = paired_t_test(b, a);
        CHECK(ab.t_statistic == doctest::Approx(-ba.t_statistic).epsilon(1e-12));
        CHECK(ab.p_value == doctest::Approx(ba.p_value).epsilon(1e-12));

        std::vector<double> a_shift = a, b_shift = b;
        for (auto& v : a_shift) v += 0.17;
        for (auto& v : b_shift) v += 0.17;
        auto shifted = paired_t_test(a_shift, b_shift);
        CHECK(shifted.p_value == doctest::Approx(ab.p_value).epsilon(1e-9));
    }
}

TEST_CASE("paired t test agrees with the quadrature oracle on random samples") {
    Rng rng(7);
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<double> a(5), b(5);
        for (int i = 0; i < 5; ++i) {
            a[static_cast<std::size_t>(i)] = rng.unit();
            b[static_cast<std::size_t>(i)] = rng.unit();
        }
        auto result = paired_t_test(a, b);
        double t_ref = oracle::paired_t_statistic(a, b);
        CHECK(std::fabs(result.t_statistic - t_ref) < 1e-9 * std::max(1.0, std::fabs(t_ref)));
        CHECK(std::fabs(result.p_value - oracle::two_sided_p(t_ref, 4)) < 1e-9);
    }
}

TEST_CASE("accuracy") {
    CHECK(accuracy({"a", "b"}, {"a", "b"}) == 1.0);
    CHECK(accuracy({"a", "b"}, {"b", "a"}) == 0.0);
    CHECK(accuracy({"a", "b", "c", "d"}, {"a", "b", "c", "x"}) == 0.75);
    CHECK_THROWS_AS(accuracy({"a"}, {"a", "b"}), LengthMismatchError);
    CHECK_THROWS_AS(accuracy({}, {}), EmptySetError);
}

TEST_CASE("cell verdicts: conventions and label consistency") {
    std::vector<double> base = {0.8, 0.8, 0.8, 0.8, 0.8};
    std::vector<double> drop = {0.6, 0.6, 0.6, 0.6, 0.6};

    auto pass = cell_verdict(base, base, 0.05);
    CHECK(pass.verdict == Verdict::PASS);
    CHECK(pass.p_value == 1.0);

    auto fail = cell_verdict(base, drop, 0.05);
    CHECK(fail.verdict == Verdict::FAIL);
    CHECK(fail.p_value == 0.0);

    auto excel = cell_verdict(drop, base, 0.05);
    CHECK(excel.verdict == Verdict::EXCEL);

    // Swapping arms swaps FAIL and EXCEL, never PASS.
    Rng rng(21);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> a(5), b(5);
        for (int i = 0; i < 5; ++i) {
            a[static_cast<std::size_t>(i)] = rng.unit();
            b[static_cast<std::size_t>(i)] = rng.unit();
        }
        auto fwd = cell_verdict(a, b, 0.05);
        auto rev = cell_verdict(b, a, 0.05);
        if (fwd.verdict == Verdict::PASS) CHECK(rev.verdict == Verdict::PASS);
        if (fwd.verdict == Verdict::FAIL) CHECK(rev.verdict == Verdict::EXCEL);
        if (fwd.verdict == Verdict::EXCEL) CHECK(rev.verdict == Verdict::FAIL);
    }
}

TEST_CASE("pass rate aggregation and marginals") {
    // 2 tasks x 2 permutations; task 0 fails everywhere, task 1 excels.
    std::vector<std::vector<int>> perms = {{0, 1}, {1, 0}};
    std::vector<std::string> names = {"alpha", "beta"};
    std::vector<CellVerdict> verdicts;
    for (int t = 0; t < 2; ++t) {
        for (int p = 0; p < 2; ++p) {
            CellVerdict v;
            v.task = t;
            v.permutation = p;
            v.verdict = t == 0 ? Verdict::FAIL : Verdict::EXCEL;
            verdicts.push_back(v);
        }
    }
    auto summary = pass_rate(verdicts, perms, names);
    CHECK(summary.overall == 0.5);
    CHECK(summary.by_task.at("alpha") == 0.0);
    CHECK(summary.by_task.at("beta") == 1.0);
    // Each index hosts one alpha cell and one beta cell.
    CHECK(summary.by_index[0] == 0.5);
    CHECK(summary.by_index[1] == 0.5);
    CHECK(summary.by_permutation[0] == 0.5);
    CHECK(summary.by_permutation[1] == 0.5);
    CHECK(summary.fail_histogram[2] == 1);  // alpha fails 2/2
    CHECK(summary.fail_histogram[0] == 1);  // beta fails 0/2
    CHECK(summary.excel_histogram[2] == 1); // beta excels 2/2

    // Weighted mean of by_task marginals reproduces the overall rate.
    double weighted = 0.0;
    for (const auto& [name, rate] : summary.by_task) weighted += rate * 2.0;
    CHECK(weighted / 4.0 == doctest::Approx(summary.overall).epsilon(1e-12));
}

TEST_CASE("pass rate rejects incomplete cells") {
    std::vector<std::vector<int>> perms = {{0}};
    std::vector<std::string> names = {"alpha"};
    CellVerdict v;
    v.verdict = Verdict::INCOMPLETE;
    CHECK_THROWS_AS(pass_rate({v}, perms, names), MissingCellsError);
    CHECK_THROWS_AS(pass_rate({}, perms, names), MissingCellsError);
}

TEST_CASE("icl effectiveness split") {
    // Task 0: identical accuracies -> ineffective. Task 1: +20 points
    // deterministic -> effective. Task 2: -20 points -> not effective.
    std::vector<std::vector<double>> one = {{0.5, 0.5, 0.5, 0.5, 0.5},
                                            {0.5, 0.5, 0.5, 0.5, 0.5},
                                            {0.5, 0.5, 0.5, 0.5, 0.5}};
    std::vector<std::vector<double>> four = {{0.5, 0.5, 0.5, 0.5, 0.5},
                                             {0.7, 0.7, 0.7, 0.7, 0.7},
                                             {0.3, 0.3, 0.3, 0.3, 0.3}};
    auto effective = icl_effective_tasks(one, four, 0.05);
    REQUIRE(effective.size() == 1);
    CHECK(effective[0] == 1);
}

TEST_CASE("token recall") {
    CHECK(token_recall("the needle text", "the needle text") == 1.0);
    CHECK(token_recall("", "needle") == 0.0);
    CHECK_THROWS_AS(token_recall("anything", ""), EmptyNeedleError);
    CHECK_THROWS_AS(token_recall("anything", " .,"), EmptyNeedleError);

    // Hand-derived with the defined tokenization (lowercase, alnum runs):
    // needle has 12 tokens (with "a" twice); the response covers eat, one
    // "a", sandwich, in, dolores, park -> 6/12. Multiset counting stops the
    // single response "a" from matching both needle occurrences.
    double recall = token_recall("Eat a sandwich in Dolores Park.",
                                 "eat a sandwich and sit in Dolores Park on a sunny day");
    CHECK(recall == doctest::Approx(6.0 / 12.0).epsilon(1e-12));

    // Case folding and punctuation splitting.
    CHECK(token_recall("NEEDLE, text!", "needle text") == 1.0);
}

TEST_CASE("p-value calibration under the null") {
    // Both arms i.i.d. -> the rejection rate at alpha=0.05 should sit near
    // 0.05. Mirrors the acceptance criterion at reduced scale.
    Rng rng(123);
    int rejections = 0;
    const int cells = 2000;
    for (int c = 0; c < cells; ++c) {
        std::vector<double> a(5), b(5);
        for (int i = 0; i < 5; ++i) {
            a[static_cast<std::size_t>(i)] = rng.unit();
            b[static_cast<std::size_t>(i)] = rng.unit();
        }
        auto verdict = cell_verdict(a, b, 0.05);
        if (verdict.verdict != Verdict::PASS) ++rejections;
    }
    double rate = static_cast<double>(rejections) / cells;
    CHECK(rate > 0.03);
    CHECK(rate < 0.07);
}
