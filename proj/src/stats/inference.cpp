#include "autods/stats/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <string>

#include "autods/error.hpp"
#include "autods/rng.hpp"
#include "autods/stats/distributions.hpp"

namespace autods::stats {

double mean(std::span<const double> x) {
    if (x.empty()) fail(ErrorKind::domain, "mean of empty sample");
    double s = 0.0;
    for (double v : x) s += v;
    return s / static_cast<double>(x.size());
}

double variance(std::span<const double> x) {
    if (x.size() < 2) fail(ErrorKind::domain, "variance needs at least 2 values");
    const double m = mean(x);
    double ss = 0.0;
    for (double v : x) ss += (v - m) * (v - m);
    return ss / static_cast<double>(x.size() - 1);
}

double median(std::vector<double> x) {
    if (x.empty()) fail(ErrorKind::domain, "median of empty sample");
    std::sort(x.begin(), x.end());
    const std::size_t n = x.size();
    return n % 2 ? x[n / 2] : 0.5 * (x[n / 2 - 1] + x[n / 2]);
}

std::vector<double> midranks(std::span<const double> x) {
    std::vector<std::size_t> order(x.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return x[i] < x[j]; });
    std::vector<double> ranks(x.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

namespace {

double two_sided_t(double t, double dof) {
    if (std::isinf(t)) return 0.0;
    const double t2 = t * t;
    return beta_inc(0.5 * dof, 0.5, dof / (dof + t2), t2 / (dof + t2));
}

double clamp01(double p) { return std::clamp(p, 0.0, 1.0); }

}  // namespace

TestResult t_test(std::span<const double> a, std::span<const double> b, TTestVariant variant) {
    if (a.size() < 2 || b.size() < 2) fail(ErrorKind::domain, "insufficient sample: t-test needs at least 2 values per group");
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    const double ma = mean(a);
    const double mb = mean(b);
    const double va = variance(a);
    const double vb = variance(b);
    TestResult r;
    r.n_used = a.size() + b.size();
    r.effect = ma - mb;
    if (va == 0.0 && vb == 0.0) {
        if (ma == mb) {
            r.statistic = 0.0;
            r.p_value = 1.0;
            r.dof = na + nb - 2.0;
            return r;
        }
        fail(ErrorKind::domain, "zero variance: both samples are constant with different means");
    }
    if (variant == TTestVariant::welch) {
        const double sa = va / na;
        const double sb = vb / nb;
        r.statistic = (ma - mb) / std::sqrt(sa + sb);
        r.dof = (sa + sb) * (sa + sb) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    } else {
        r.dof = na + nb - 2.0;
        const double pooled = ((na - 1.0) * va + (nb - 1.0) * vb) / r.dof;
        r.statistic = (ma - mb) / std::sqrt(pooled * (1.0 / na + 1.0 / nb));
    }
    r.p_value = clamp01(two_sided_t(r.statistic, r.dof));
    return r;
}

TestResult chi_square_independence(const std::vector<std::vector<double>>& counts, bool yates) {
    const std::size_t rows = counts.size();
    const std::size_t cols = rows ? counts.front().size() : 0;
    if (rows < 2 || cols < 2) fail(ErrorKind::domain, "degenerate table: need at least 2 rows and 2 columns");
    std::vector<double> row_sum(rows, 0.0), col_sum(cols, 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < rows; ++i) {
        if (counts[i].size() != cols) fail(ErrorKind::domain, "contingency table rows have unequal lengths");
        for (std::size_t j = 0; j < cols; ++j) {
            const double c = counts[i][j];
            if (!(c >= 0.0) || !std::isfinite(c)) fail(ErrorKind::domain, "contingency counts must be non-negative");
            row_sum[i] += c;
            col_sum[j] += c;
            total += c;
        }
    }
    for (double s : row_sum) {
        if (s <= 0.0) fail(ErrorKind::domain, "degenerate table: a row marginal is zero");
    }
    for (double s : col_sum) {
        if (s <= 0.0) fail(ErrorKind::domain, "degenerate table: a column marginal is zero");
    }
    const bool correct = yates && rows == 2 && cols == 2;
    double chi2 = 0.0;
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
            const double e = row_sum[i] * col_sum[j] / total;
            double diff = std::fabs(counts[i][j] - e);
            if (correct) diff -= std::min(0.5, diff);
            chi2 += diff * diff / e;
        }
    }
    TestResult r;
    r.statistic = chi2;
    r.dof = static_cast<double>((rows - 1) * (cols - 1));
    r.p_value = clamp01(chi_square_sf(chi2, r.dof));
    r.effect = std::sqrt(chi2 / (total * static_cast<double>(std::min(rows, cols) - 1)));
    r.n_used = static_cast<std::size_t>(std::llround(total));
    return r;
}

TestResult pearson_test(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) fail(ErrorKind::domain, "pearson_test needs paired samples");
    if (x.size() < 3) fail(ErrorKind::domain, "insufficient sample: correlation needs at least 3 pairs");
    const double mx = mean(x);
    const double my = mean(y);
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (sxx == 0.0 || syy == 0.0) fail(ErrorKind::domain, "zero variance: correlation input is constant");
    const double r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
    const double n = static_cast<double>(x.size());
    TestResult out;
    out.effect = r;
    out.dof = n - 2.0;
    out.n_used = x.size();
    const double one_minus = 1.0 - r * r;
    out.statistic = one_minus <= 0.0 ? std::copysign(std::numeric_limits<double>::infinity(), r)
                                     : r * std::sqrt((n - 2.0) / one_minus);
    out.p_value = clamp01(two_sided_t(out.statistic, out.dof));
    return out;
}

TestResult one_way_anova(const std::vector<std::vector<double>>& groups) {
    if (groups.size() < 2) fail(ErrorKind::domain, "ANOVA needs at least 2 groups");
    double grand = 0.0;
    std::size_t n = 0;
    for (const auto& g : groups) {
        if (g.size() < 2) fail(ErrorKind::domain, "insufficient sample: every ANOVA group needs at least 2 values");
        for (double v : g) grand += v;
        n += g.size();
    }
    grand /= static_cast<double>(n);
    double ssb = 0.0, ssw = 0.0;
    for (const auto& g : groups) {
        const double m = mean(g);
        ssb += static_cast<double>(g.size()) * (m - grand) * (m - grand);
        for (double v : g) ssw += (v - m) * (v - m);
    }
    const double k = static_cast<double>(groups.size());
    TestResult r;
    r.dof = k - 1.0;
    r.dof2 = static_cast<double>(n) - k;
    r.n_used = n;
    r.effect = ssb + ssw > 0.0 ? ssb / (ssb + ssw) : 0.0;  // eta squared
    if (ssw == 0.0) {
        r.statistic = ssb == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
        r.p_value = ssb == 0.0 ? 1.0 : 0.0;
        return r;
    }
    r.statistic = (ssb / r.dof) / (ssw / r.dof2);
    r.p_value = clamp01(fisher_f_sf(r.statistic, r.dof, r.dof2));
    return r;
}

TestResult levene_test(const std::vector<std::vector<double>>& groups, LeveneCenter center) {
    if (groups.size() < 2) fail(ErrorKind::domain, "Levene's test needs at least 2 groups");
    std::vector<std::vector<double>> deviations;
    deviations.reserve(groups.size());
    for (const auto& g : groups) {
        if (g.size() < 2) fail(ErrorKind::domain, "insufficient sample: every Levene group needs at least 2 values");
        const double c = center == LeveneCenter::mean ? mean(g) : median(g);
        std::vector<double> d;
        d.reserve(g.size());
        for (double v : g) d.push_back(std::fabs(v - c));
        deviations.push_back(std::move(d));
    }
    return one_way_anova(deviations);
}

// ---------------------------------------------------------------------------
// Shapiro-Wilk (Royston 1995, AS R94)

namespace {

double poly(std::span<const double> c, double x) {
    double result = 0.0;
    for (std::size_t i = c.size(); i-- > 0;) result = result * x + c[i];
    return result;
}

}  // namespace

TestResult shapiro_wilk(std::span<const double> input) {
    const std::size_t n = input.size();
    if (n < 3 || n > 5000) fail(ErrorKind::domain, "Shapiro-Wilk needs 3 <= n <= 5000");
    std::vector<double> x(input.begin(), input.end());
    std::sort(x.begin(), x.end());
    const double range = x.back() - x.front();
    if (range < 1e-19 * std::max(1.0, std::fabs(x.front()))) {
        fail(ErrorKind::domain, "zero variance: Shapiro-Wilk input is constant");
    }

    static constexpr double c1[] = {0.0, 0.221157, -0.147981, -2.07119, 4.434685, -2.706056};
    static constexpr double c2[] = {0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633};
    static constexpr double c3[] = {0.544, -0.39978, 0.025054, -6.714e-4};
    static constexpr double c4[] = {1.3822, -0.77857, 0.062767, -0.0020322};
    static constexpr double c5[] = {-1.5861, -0.31082, -0.083751, 0.0038915};
    static constexpr double c6[] = {-0.4803, -0.082676, 0.0030302};
    static constexpr double g[] = {-2.273, 0.459};

    const std::size_t half = n / 2;
    const double an = static_cast<double>(n);
    std::vector<double> a(half, 0.0);
    if (n == 3) {
        a[0] = std::numbers::sqrt2 / 2.0;
    } else {
        std::vector<double> m(half);
        double summ2 = 0.0;
        for (std::size_t i = 0; i < half; ++i) {
            m[i] = normal_quantile((static_cast<double>(i + 1) - 0.375) / (an + 0.25));
            summ2 += m[i] * m[i];
        }
        summ2 *= 2.0;
        const double ssumm2 = std::sqrt(summ2);
        const double rsn = 1.0 / std::sqrt(an);
        const double a1 = poly(c1, rsn) - m[0] / ssumm2;
        std::size_t first = 1;
        double fac = 0.0;
        if (n > 5) {
            first = 2;
            const double a2 = -m[1] / ssumm2 + poly(c2, rsn);
            fac = std::sqrt((summ2 - 2.0 * m[0] * m[0] - 2.0 * m[1] * m[1]) / (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2));
            a[1] = a2;
        } else {
            fac = std::sqrt((summ2 - 2.0 * m[0] * m[0]) / (1.0 - 2.0 * a1 * a1));
        }
        a[0] = a1;
        for (std::size_t i = first; i < half; ++i) a[i] = -m[i] / fac;
    }

    // W as the squared correlation between the ordered data and the antisymmetric coefficients.
    std::vector<double> coef(n, 0.0);
    for (std::size_t i = 0; i < half; ++i) {
        coef[i] = -a[i];
        coef[n - 1 - i] = a[i];
    }
    double sa = 0.0, sx = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sa += coef[i];
        sx += x[i] / range;
    }
    sa /= an;
    sx /= an;
    double ssa = 0.0, ssx = 0.0, sax = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double asa = coef[i] - sa;
        const double xsx = x[i] / range - sx;
        ssa += asa * asa;
        ssx += xsx * xsx;
        sax += asa * xsx;
    }
    const double ssassx = std::sqrt(ssa * ssx);
    const double w1 = (ssassx - sax) * (ssassx + sax) / (ssa * ssx);
    const double w = 1.0 - w1;

    TestResult r;
    r.statistic = w;
    r.n_used = n;
    if (n == 3) {
        const double pi6 = 6.0 / std::numbers::pi;
        const double stqr = std::numbers::pi / 3.0;
        r.p_value = clamp01(pi6 * (std::asin(std::sqrt(w)) - stqr));
        return r;
    }
    double y = std::log(w1);
    const double lxx = std::log(an);
    double mu = 0.0, sigma = 1.0;
    if (n <= 11) {
        const double gamma = poly(g, an);
        if (y >= gamma) {
            r.p_value = 1e-99;
            return r;
        }
        y = -std::log(gamma - y);
        mu = poly(c3, an);
        sigma = std::exp(poly(c4, an));
    } else {
        mu = poly(c5, lxx);
        sigma = std::exp(poly(c6, lxx));
    }
    r.p_value = clamp01(normal_sf(y, mu, sigma));
    return r;
}

// ---------------------------------------------------------------------------
// Kolmogorov-Smirnov

double kolmogorov_sf(double lambda) {
    if (lambda <= 0.0) return 1.0;
    if (lambda < 1.18) {
        // Small-lambda form converges faster: 1 - sqrt(2 pi)/lambda * sum exp(-(2j-1)^2 pi^2 / (8 lambda^2)).
        const double k = std::numbers::pi * std::numbers::pi / (8.0 * lambda * lambda);
        double s = 0.0;
        for (int j = 1; j < 100; ++j) {
            const double term = std::exp(-static_cast<double>((2 * j - 1) * (2 * j - 1)) * k);
            s += term;
            if (term < 1e-18) break;
        }
        return std::clamp(1.0 - std::sqrt(2.0 * std::numbers::pi) / lambda * s, 0.0, 1.0);
    }
    double s = 0.0;
    for (int j = 1; j < 100; ++j) {
        const double term = std::exp(-2.0 * j * j * lambda * lambda);
        s += (j % 2 ? 1.0 : -1.0) * term;
        if (term < 1e-18) break;
    }
    return std::clamp(2.0 * s, 0.0, 1.0);
}

namespace {

// Stephens' finite-sample scaling of D; plain sqrt(n) is conservative at a few hundred rows.
double stephens_scale(double n_eff) {
    const double r = std::sqrt(n_eff);
    return r + 0.12 + 0.11 / r;
}

}  // namespace

TestResult ks_test(std::span<const double> a_in, std::span<const double> b_in) {
    if (a_in.empty() || b_in.empty()) fail(ErrorKind::domain, "Kolmogorov-Smirnov needs non-empty samples");
    std::vector<double> a(a_in.begin(), a_in.end()), b(b_in.begin(), b_in.end());
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double v = std::min(a[i], b[j]);
        while (i < a.size() && a[i] == v) ++i;
        while (j < b.size() && b[j] == v) ++j;
        d = std::max(d, std::fabs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    TestResult r;
    r.statistic = d;
    r.n_used = a.size() + b.size();
    r.p_value = d == 0.0 ? 1.0 : kolmogorov_sf(stephens_scale(na * nb / (na + nb)) * d);
    return r;
}

TestResult ks_test(std::span<const double> a_in, const std::function<double(double)>& cdf) {
    if (a_in.empty()) fail(ErrorKind::domain, "Kolmogorov-Smirnov needs a non-empty sample");
    std::vector<double> a(a_in.begin(), a_in.end());
    std::sort(a.begin(), a.end());
    const double n = static_cast<double>(a.size());
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double f = cdf(a[i]);
        d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
    }
    TestResult r;
    r.statistic = d;
    r.n_used = a.size();
    r.p_value = d == 0.0 ? 1.0 : kolmogorov_sf(stephens_scale(n) * d);
    return r;
}

// ---------------------------------------------------------------------------
// Mann-Whitney U

TestResult mann_whitney_u(std::span<const double> a, std::span<const double> b) {
    if (a.empty() || b.empty()) fail(ErrorKind::domain, "Mann-Whitney needs non-empty samples");
    const std::size_t n1 = a.size();
    const std::size_t n2 = b.size();
    std::vector<double> all(a.begin(), a.end());
    all.insert(all.end(), b.begin(), b.end());
    const std::vector<double> ranks = midranks(all);
    double r1 = 0.0;
    for (std::size_t i = 0; i < n1; ++i) r1 += ranks[i];
    const double dn1 = static_cast<double>(n1);
    const double dn2 = static_cast<double>(n2);
    const double u1 = r1 - dn1 * (dn1 + 1.0) / 2.0;
    const double u2 = dn1 * dn2 - u1;
    TestResult r;
    r.statistic = std::min(u1, u2);
    r.effect = u1 / (dn1 * dn2);
    r.n_used = n1 + n2;
    const double mu = dn1 * dn2 / 2.0;

    std::map<double, std::size_t> ties;
    for (double v : all) ++ties[v];
    if (ties.size() == 1) {
        r.p_value = 1.0;
        return r;
    }

    if (n1 <= 8 && n2 <= 8) {
        // Exact null distribution of the doubled rank sum over all C(n1+n2, n1) splits.
        std::vector<long> doubled(all.size());
        for (std::size_t i = 0; i < all.size(); ++i) doubled[i] = std::lround(2.0 * ranks[i]);
        const long max_sum = std::accumulate(doubled.begin(), doubled.end(), 0L);
        std::vector<std::vector<double>> ways(n1 + 1, std::vector<double>(static_cast<std::size_t>(max_sum) + 1, 0.0));
        ways[0][0] = 1.0;
        for (long rank2 : doubled) {
            for (std::size_t k = n1; k >= 1; --k) {
                for (long s = max_sum; s >= rank2; --s) ways[k][s] += ways[k - 1][s - rank2];
            }
        }
        const long obs2 = std::lround(2.0 * r1);
        const long center2 = std::lround(dn1 * (dn1 + dn2 + 1.0));  // 2 * E[R1]
        const long obs_dev = std::labs(obs2 - center2);
        double extreme = 0.0, total = 0.0;
        for (long s = 0; s <= max_sum; ++s) {
            const double w = ways[n1][s];
            if (w == 0.0) continue;
            total += w;
            if (std::labs(s - center2) >= obs_dev) extreme += w;
        }
        r.p_value = clamp01(extreme / total);
        return r;
    }

    const double n = dn1 + dn2;
    double tie_term = 0.0;
    for (const auto& [_, t] : ties) {
        const double dt = static_cast<double>(t);
        tie_term += dt * dt * dt - dt;
    }
    const double var = dn1 * dn2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if (var <= 0.0) {
        r.p_value = 1.0;
        return r;
    }
    const double z = std::max(0.0, std::fabs(u1 - mu) - 0.5) / std::sqrt(var);
    r.p_value = clamp01(2.0 * normal_sf(z));
    return r;
}

// ---------------------------------------------------------------------------
// Regression

RegressionFit regression_slope_test(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) fail(ErrorKind::domain, "regression needs paired samples");
    if (x.size() < 3) fail(ErrorKind::domain, "insufficient sample: regression needs at least 3 pairs");
    const double mx = mean(x);
    const double my = mean(y);
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (sxx == 0.0) fail(ErrorKind::domain, "zero variance: regression predictor is constant");
    RegressionFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    double sse = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double e = y[i] - (fit.intercept + fit.slope * x[i]);
        sse += e * e;
    }
    const double n = static_cast<double>(x.size());
    fit.residual_se = std::sqrt(sse / (n - 2.0));
    fit.slope_se = fit.residual_se / std::sqrt(sxx);
    TestResult& t = fit.test;
    t.dof = n - 2.0;
    t.n_used = x.size();
    t.effect = fit.slope;
    if (fit.slope_se == 0.0) {
        t.statistic = fit.slope == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), fit.slope);
        t.p_value = fit.slope == 0.0 ? 1.0 : 0.0;
        return fit;
    }
    t.statistic = fit.slope / fit.slope_se;
    t.p_value = clamp01(two_sided_t(t.statistic, t.dof));
    return fit;
}

RegressionFit trend_test(std::span<const double> series) {
    std::vector<double> index(series.size());
    std::iota(index.begin(), index.end(), 0.0);
    return regression_slope_test(index, series);
}

// ---------------------------------------------------------------------------
// CUSUM

namespace {

std::pair<std::size_t, double> cusum_scan(std::span<const double> x, double m) {
    double s = 0.0;
    double best = 0.0;
    std::size_t arg = 0;
    for (std::size_t i = 0; i + 1 < x.size(); ++i) {
        s += x[i] - m;
        if (std::fabs(s) > best) {
            best = std::fabs(s);
            arg = i + 1;
        }
    }
    return {arg, best};
}

}  // namespace

ChangePoint cusum_change_point(std::span<const double> series, std::uint64_t seed, int permutations, double alpha) {
    if (series.size() < 8) fail(ErrorKind::domain, "insufficient sample: CUSUM needs at least 8 values");
    const double m = mean(series);
    const auto [index, stat] = cusum_scan(series, m);
    ChangePoint cp;
    cp.index = index;
    cp.statistic = stat;
    if (stat == 0.0) return cp;
    Rng rng(seed);
    std::vector<double> work(series.begin(), series.end());
    int at_least = 0;
    // Cumulative deviation is computed in a fixed order, so a tiny tolerance absorbs summation noise.
    const double tol = 1e-12 * std::max(1.0, stat);
    for (int p = 0; p < permutations; ++p) {
        rng.shuffle(work);
        if (cusum_scan(work, m).second >= stat - tol) ++at_least;
    }
    cp.p_value = (1.0 + at_least) / (1.0 + permutations);
    cp.significant = cp.p_value < alpha;
    return cp;
}

}  // namespace autods::stats
