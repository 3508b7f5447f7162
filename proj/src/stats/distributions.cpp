#include "autods/stats/distributions.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "autods/error.hpp"

namespace autods::stats {

namespace {

constexpr double kEps = 1e-16;
constexpr double kTiny = 1e-300;
constexpr int kMaxIter = 100000;

void require_positive(double v, const char* what) {
    if (!(v > 0.0) || !std::isfinite(v)) {
        fail(ErrorKind::domain, std::string(what) + " must be positive and finite");
    }
}

double gamma_prefactor(double a, double x) { return std::exp(-x + a * std::log(x) - std::lgamma(a)); }

double gamma_series(double a, double x) {
    double ap = a;
    double del = 1.0 / a;
    double sum = del;
    for (int n = 0; n < kMaxIter; ++n) {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if (std::fabs(del) < std::fabs(sum) * kEps) break;
    }
    return sum * gamma_prefactor(a, x);
}

// Continued fraction for Q(a, x), modified Lentz.
double gamma_cf(double a, double x) {
    double b = x + 1.0 - a;
    double c = 1.0 / kTiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i < kMaxIter; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = b + an / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) break;
    }
    return gamma_prefactor(a, x) * h;
}

double beta_cf(double a, double b, double x) {
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m < kMaxIter; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) break;
    }
    return h;
}

double log_beta(double a, double b) { return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b); }

template <class F>
double invert_increasing(F cdf, double p, double lo, double hi) {
    while (cdf(hi) < p) {
        lo = hi;
        hi *= 2.0;
        if (hi > 1e300) return std::numeric_limits<double>::infinity();
    }
    for (int i = 0; i < 2000; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (mid == lo || mid == hi) break;
        if (cdf(mid) < p) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

}  // namespace

double gamma_p(double a, double x) {
    require_positive(a, "incomplete gamma shape");
    if (std::isnan(x)) fail(ErrorKind::domain, "incomplete gamma argument is NaN");
    if (x <= 0.0) return 0.0;
    if (std::isinf(x)) return 1.0;
    if (x < a + 1.0) return gamma_series(a, x);
    return 1.0 - gamma_cf(a, x);
}

double gamma_q(double a, double x) {
    require_positive(a, "incomplete gamma shape");
    if (std::isnan(x)) fail(ErrorKind::domain, "incomplete gamma argument is NaN");
    if (x <= 0.0) return 1.0;
    if (std::isinf(x)) return 0.0;
    if (x < a + 1.0) return 1.0 - gamma_series(a, x);
    return gamma_cf(a, x);
}

double beta_inc(double a, double b, double x) { return beta_inc(a, b, x, 1.0 - x); }

double beta_inc(double a, double b, double x, double y) {
    require_positive(a, "incomplete beta parameter a");
    require_positive(b, "incomplete beta parameter b");
    if (std::isnan(x) || std::isnan(y)) fail(ErrorKind::domain, "incomplete beta argument is NaN");
    if (x <= 0.0) return 0.0;
    if (y <= 0.0) return 1.0;
    const double front = std::exp(a * std::log(x) + b * std::log(y) - log_beta(a, b));
    if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cf(a, b, x) / a;
    return 1.0 - front * beta_cf(b, a, y) / b;
}

double normal_cdf(double x, double mean, double sd) {
    require_positive(sd, "normal scale");
    return 0.5 * std::erfc(-(x - mean) / (sd * std::numbers::sqrt2));
}

double normal_sf(double x, double mean, double sd) {
    require_positive(sd, "normal scale");
    return 0.5 * std::erfc((x - mean) / (sd * std::numbers::sqrt2));
}

double normal_quantile(double p) {
    if (!(p >= 0.0 && p <= 1.0)) fail(ErrorKind::domain, "normal quantile probability outside [0, 1]");
    if (p == 0.0) return -std::numeric_limits<double>::infinity();
    if (p == 1.0) return std::numeric_limits<double>::infinity();
    const double q = p - 0.5;
    if (std::fabs(q) <= 0.425) {
        const double r = 0.180625 - q * q;
        const double num =
            (((((((2.5090809287301226727e+3 * r + 3.3430575583588128105e+4) * r + 6.7265770927008700853e+4) * r +
                 4.5921953931549871457e+4) * r + 1.3731693765509461125e+4) * r + 1.9715909503065514427e+3) * r +
              1.3314166789178437745e+2) * r + 3.3871328727963666080e0);
        const double den =
            (((((((5.2264952788528545610e+3 * r + 2.8729085735721942674e+4) * r + 3.9307895800092710610e+4) * r +
                 2.1213794301586595867e+4) * r + 5.3941960214247511077e+3) * r + 6.8718700749205790830e+2) * r +
              4.2313330701600911252e+1) * r + 1.0);
        return q * num / den;
    }
    double r = q < 0.0 ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    double val = 0.0;
    if (r <= 5.0) {
        r -= 1.6;
        const double num =
            (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r + 2.41780725177450611770e-1) * r +
                 1.27045825245236838258e0) * r + 3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r +
              4.63033784615654529590e0) * r + 1.42343711074968357734e0);
        const double den =
            (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r + 1.51986665636164571966e-2) * r +
                 1.48103976427480074590e-1) * r + 6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r +
              2.05319162663775882187e0) * r + 1.0);
        val = num / den;
    } else {
        r -= 5.0;
        const double num =
            (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r + 1.24266094738807843860e-3) * r +
                 2.65321895265761230930e-2) * r + 2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r +
              5.46378491116411436990e0) * r + 6.65790464350110377720e0);
        const double den =
            (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r + 1.84631831751005468180e-5) * r +
                 7.86869131145613259100e-4) * r + 1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
              5.99832206555887937690e-1) * r + 1.0);
        val = num / den;
    }
    return q < 0.0 ? -val : val;
}

double student_t_cdf(double t, double dof) {
    require_positive(dof, "t degrees of freedom");
    if (std::isnan(t)) fail(ErrorKind::domain, "t statistic is NaN");
    if (t == 0.0) return 0.5;
    if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
    const double t2 = t * t;
    const double x = dof / (dof + t2);
    const double y = t2 / (dof + t2);
    const double tail = 0.5 * beta_inc(0.5 * dof, 0.5, x, y);
    return t > 0.0 ? 1.0 - tail : tail;
}

double student_t_sf(double t, double dof) { return student_t_cdf(-t, dof); }

double student_t_quantile(double p, double dof) {
    require_positive(dof, "t degrees of freedom");
    if (!(p > 0.0 && p < 1.0)) fail(ErrorKind::domain, "t quantile probability outside (0, 1)");
    if (p == 0.5) return 0.0;
    if (p < 0.5) return -student_t_quantile(1.0 - p, dof);
    return invert_increasing([dof](double t) { return student_t_cdf(t, dof); }, p, 0.0, 1.0);
}

double chi_square_cdf(double x, double dof) {
    require_positive(dof, "chi-square degrees of freedom");
    return gamma_p(0.5 * dof, 0.5 * x);
}

double chi_square_sf(double x, double dof) {
    require_positive(dof, "chi-square degrees of freedom");
    return gamma_q(0.5 * dof, 0.5 * x);
}

double chi_square_quantile(double p, double dof) {
    require_positive(dof, "chi-square degrees of freedom");
    if (!(p >= 0.0 && p < 1.0)) fail(ErrorKind::domain, "chi-square quantile probability outside [0, 1)");
    if (p == 0.0) return 0.0;
    return invert_increasing([dof](double x) { return chi_square_cdf(x, dof); }, p, 0.0, std::max(1.0, dof));
}

double fisher_f_cdf(double x, double dof1, double dof2) {
    require_positive(dof1, "F numerator degrees of freedom");
    require_positive(dof2, "F denominator degrees of freedom");
    if (std::isnan(x)) fail(ErrorKind::domain, "F statistic is NaN");
    if (x <= 0.0) return 0.0;
    if (std::isinf(x)) return 1.0;
    const double denom = dof1 * x + dof2;
    return beta_inc(0.5 * dof1, 0.5 * dof2, dof1 * x / denom, dof2 / denom);
}

double fisher_f_sf(double x, double dof1, double dof2) {
    require_positive(dof1, "F numerator degrees of freedom");
    require_positive(dof2, "F denominator degrees of freedom");
    if (std::isnan(x)) fail(ErrorKind::domain, "F statistic is NaN");
    if (x <= 0.0) return 1.0;
    if (std::isinf(x)) return 0.0;
    const double denom = dof1 * x + dof2;
    return beta_inc(0.5 * dof2, 0.5 * dof1, dof2 / denom, dof1 * x / denom);
}

double dist_cdf(Distribution dist, double x, const DistParams& params) {
    switch (dist) {
        case Distribution::normal: return normal_cdf(x, params.location, params.scale);
        case Distribution::student_t: return student_t_cdf(x, params.dof1);
        case Distribution::chi_square: return chi_square_cdf(x, params.dof1);
        case Distribution::fisher_f: return fisher_f_cdf(x, params.dof1, params.dof2);
    }
    fail(ErrorKind::domain, "unknown distribution");
}

}  // namespace autods::stats
