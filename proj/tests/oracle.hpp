#pragma once

// Independent extended-precision reference implementations used by the tests.

#include <cmath>
#include <vector>

namespace oracle {

using ld = long double;

// Gauss-Legendre nodes on [-1, 1] computed by Newton iteration.
struct GaussLegendre {
    std::vector<ld> nodes, weights;
    explicit GaussLegendre(int n) {
        const ld pi = 3.141592653589793238462643383279502884L;
        nodes.resize(n);
        weights.resize(n);
        for (int i = 0; i < n; ++i) {
            ld x = std::cos(pi * (i + 0.75L) / (n + 0.5L));
            ld dp = 0;
            for (int it = 0; it < 100; ++it) {
                ld p0 = 1, p1 = x;
                for (int k = 2; k <= n; ++k) {
                    const ld p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n * (x * p1 - p0) / (x * x - 1);
                const ld dx = p1 / dp;
                x -= dx;
                if (std::fabs(dx) < 1e-19L) break;
            }
            nodes[i] = x;
            weights[i] = 2 / ((1 - x * x) * dp * dp);
        }
    }
};

template <class F>
ld integrate(F f, ld a, ld b, int panels = 64) {
    static const GaussLegendre gl(20);
    ld total = 0;
    const ld h = (b - a) / panels;
    for (int p = 0; p < panels; ++p) {
        const ld lo = a + p * h;
        const ld mid = lo + h / 2;
        for (std::size_t i = 0; i < gl.nodes.size(); ++i) total += gl.weights[i] * f(mid + h / 2 * gl.nodes[i]);
    }
    return total * h / 2;
}

inline ld normal_cdf(ld x) {
    // Phi(x) = 1/2 + integral of the density from 0 to x
    const ld c = 1 / std::sqrt(2 * 3.141592653589793238462643383279502884L);
    const ld body = integrate([&](ld t) { return c * std::exp(-t * t / 2); }, 0, std::fabs(x), 128);
    return x >= 0 ? 0.5L + body : 0.5L - body;
}

inline ld student_t_cdf(ld t, ld dof) {
    const ld logc = std::lgamma((dof + 1) / 2) - std::lgamma(dof / 2) - 0.5L * std::log(dof * 3.141592653589793238462643383279502884L);
    const auto pdf = [&](ld u) { return std::exp(logc - (dof + 1) / 2 * std::log1p(u * u / dof)); };
    // integrate the density in arctan-compressed coordinates to keep long tails cheap
    const ld theta = std::atan(std::fabs(t));
    const ld body = integrate([&](ld th) {
        const ld u = std::tan(th);
        const ld c = std::cos(th);
        return pdf(u) / (c * c);
    }, 0, theta, 256);
    return t >= 0 ? 0.5L + body : 0.5L - body;
}

// Regularized lower incomplete gamma via its all-positive power series.
inline ld gamma_p(ld a, ld x) {
    if (x <= 0) return 0;
    ld term = 1 / a, sum = term;
    for (int n = 1; n < 100000; ++n) {
        term *= x / (a + n);
        sum += term;
        if (term < sum * 1e-21L) break;
    }
    return std::exp(a * std::log(x) - x - std::lgamma(a)) * sum;
}

inline ld chi_square_cdf(ld x, ld dof) { return gamma_p(dof / 2, x / 2); }

// Regularized incomplete beta by the hypergeometric series, reflected so x <= 1/2.
inline ld beta_inc(ld a, ld b, ld x) {
    if (x <= 0) return 0;
    if (x >= 1) return 1;
    if (x > 0.5L) return 1 - beta_inc(b, a, 1 - x);
    const ld lbeta = std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
    ld coef = 1, sum = 1 / a;
    for (int n = 1; n < 100000; ++n) {
        coef *= (n - b) * x / n;
        const ld term = coef / (a + n);
        sum += term;
        if (std::fabs(term) < std::fabs(sum) * 1e-21L) break;
    }
    return std::exp(a * std::log(x) - lbeta) * sum;
}

inline ld fisher_f_cdf(ld x, ld d1, ld d2) {
    if (x <= 0) return 0;
    return beta_inc(d1 / 2, d2 / 2, d1 * x / (d1 * x + d2));
}

}  // namespace oracle
