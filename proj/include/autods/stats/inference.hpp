#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace autods::stats {

/// Outcome of one statistical test.
///
/// `statistic` holds whichever quantity the test produces (chi-square, t, F,
/// U, D, W, r). `dof2` is only meaningful for F-distributed statistics.
struct TestResult {
    double statistic = 0.0;
    double p_value = 1.0;
    double dof = 0.0;
    double dof2 = 0.0;
    std::optional<double> effect;
    std::size_t n_used = 0;
    std::size_t n_excluded = 0;

    bool operator==(const TestResult&) const = default;
};

enum class TTestVariant { welch, pooled };

/// Two-sided two-sample t-test. Throws on fewer than 2 values per sample.
TestResult t_test(std::span<const double> a, std::span<const double> b, TTestVariant variant = TTestVariant::welch);

/// Pearson chi-square test of independence on an r x c table of counts.
/// Yates' correction (capped at |o - e|) is applied only to 2 x 2 tables.
/// `effect` is Cramer's V.
TestResult chi_square_independence(const std::vector<std::vector<double>>& counts, bool yates = true);

/// `effect` is r.
TestResult pearson_test(std::span<const double> x, std::span<const double> y);

TestResult one_way_anova(const std::vector<std::vector<double>>& groups);

enum class LeveneCenter { mean, median };

/// One-way ANOVA on absolute deviations from each group's center
/// (median center is the Brown-Forsythe variant).
TestResult levene_test(const std::vector<std::vector<double>>& groups, LeveneCenter center = LeveneCenter::median);

/// Royston's AS R94 approximation, 3 <= n <= 5000.
TestResult shapiro_wilk(std::span<const double> x);

/// Two-sample Kolmogorov-Smirnov with the asymptotic Kolmogorov p.
TestResult ks_test(std::span<const double> a, std::span<const double> b);
/// One-sample Kolmogorov-Smirnov against a continuous CDF.
TestResult ks_test(std::span<const double> a, const std::function<double(double)>& cdf);

/// Kolmogorov limiting survival function Q(lambda) = P(K > lambda).
double kolmogorov_sf(double lambda);

/// Reports U = min(U1, U2); `effect` is U1 / (n1 n2). Exact null enumeration
/// (with midranks) when both samples have at most 8 values, otherwise the
/// normal approximation with tie and continuity corrections.
TestResult mann_whitney_u(std::span<const double> a, std::span<const double> b);

struct RegressionFit {
    double slope = 0.0;
    double intercept = 0.0;
    double slope_se = 0.0;
    double residual_se = 0.0;
    TestResult test;  // t statistic on the slope, dof n - 2, effect = slope
};

RegressionFit regression_slope_test(std::span<const double> x, std::span<const double> y);
/// Slope test against the time index 0..n-1.
RegressionFit trend_test(std::span<const double> series);

struct ChangePoint {
    std::size_t index = 0;  // first position after the change
    bool significant = false;
    double statistic = 0.0;  // max |cumulative deviation|
    double p_value = 1.0;
};

/// CUSUM scan with a seeded permutation test. Throws when n < 8.
ChangePoint cusum_change_point(std::span<const double> series, std::uint64_t seed, int permutations = 1000,
                               double alpha = 0.05);

// Small shared helpers.
double mean(std::span<const double> x);
double variance(std::span<const double> x);  // n - 1 denominator
double median(std::vector<double> x);
/// Midranks (1-based) of x; ties share the average rank.
std::vector<double> midranks(std::span<const double> x);

}  // namespace autods::stats
