#include "t_oracle.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace oracle {

namespace {

double t_pdf(double x, double df) {
    double log_c = std::lgamma((df + 1.0) / 2.0) - std::lgamma(df / 2.0) -
                   0.5 * std::log(df * M_PI);
    return std::exp(log_c - (df + 1.0) / 2.0 * std::log1p(x * x / df));
}

double simpson(double (*f)(double, double), double df, double a, double b) {
    double m = (a + b) / 2.0;
    return (b - a) / 6.0 * (f(a, df) + 4.0 * f(m, df) + f(b, df));
}

double adaptive(double (*f)(double, double), double df, double a, double b, double whole,
                double tol, int depth) {
    double m = (a + b) / 2.0;
    double left = simpson(f, df, a, m);
    double right = simpson(f, df, m, b);
    if (depth <= 0 || std::fabs(left + right - whole) < 15.0 * tol) {
        return left + right + (left + right - whole) / 15.0;
    }
    return adaptive(f, df, a, m, left, tol / 2.0, depth - 1) +
           adaptive(f, df, m, b, right, tol / 2.0, depth - 1);
}

double integrate_pdf(double df, double a, double b, double tol) {
    // Split at a few scale points so the adaptive pass converges fast even
    // for very large |t|.
    std::vector<double> knots = {a};
    for (double k : {1.0, 2.0, 4.0, 8.0, 16.0, 64.0, 256.0, 1024.0}) {
        if (k > a && k < b) knots.push_back(k);
    }
    knots.push_back(b);
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < knots.size(); ++i) {
        total += adaptive(t_pdf, df, knots[i], knots[i + 1],
                          simpson(t_pdf, df, knots[i], knots[i + 1]), tol, 60);
    }
    return total;
}

} // namespace

double two_sided_p(double t, double df) {
    double a = std::fabs(t);
    if (std::isinf(a)) return 0.0;
    if (a == 0.0) return 1.0;
    double integral = integrate_pdf(df, 0.0, a, 1e-14);
    double p = 1.0 - 2.0 * integral;
    return p < 0.0 ? 0.0 : p;
}

double paired_t_statistic(std::span<const double> a, std::span<const double> b) {
    const double n = static_cast<double>(a.size());
    double mean = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) mean += (a[i] - b[i]) / n;
    double ss = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i] - mean;
        ss += d * d;
    }
    double sd = std::sqrt(ss / (n - 1.0));
    if (sd == 0.0) {
        if (mean == 0.0) return 0.0;
        return mean > 0 ? std::numeric_limits<double>::infinity()
                        : -std::numeric_limits<double>::infinity();
    }
    return mean * std::sqrt(n) / sd;
}

} // namespace oracle
