#include "autods/stats/survival.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "autods/error.hpp"
#include "autods/linalg.hpp"
#include "autods/stats/distributions.hpp"

namespace autods::stats {

double SurvivalCurve::at(double t) const {
    const auto it = std::upper_bound(times.begin(), times.end(), t);
    if (it == times.begin()) return 1.0;
    return survival[static_cast<std::size_t>(it - times.begin()) - 1];
}

SurvivalCurve kaplan_meier(std::span<const double> durations, const std::vector<bool>& events) {
    if (durations.size() != events.size()) fail(ErrorKind::domain, "durations and events differ in length");
    std::map<double, std::pair<std::size_t, std::size_t>> by_time;  // time -> (deaths, removed)
    for (std::size_t i = 0; i < durations.size(); ++i) {
        const double d = durations[i];
        if (!(d >= 0.0) || !std::isfinite(d)) fail(ErrorKind::domain, "durations must be finite and non-negative");
        auto& slot = by_time[d];
        if (events[i]) ++slot.first;
        ++slot.second;
    }
    SurvivalCurve curve;
    std::size_t at_risk = durations.size();
    double s = 1.0;
    for (const auto& [t, counts] : by_time) {
        const auto [deaths, removed] = counts;
        if (deaths > 0) {
            s *= 1.0 - static_cast<double>(deaths) / static_cast<double>(at_risk);
            curve.times.push_back(t);
            curve.survival.push_back(s);
            curve.at_risk.push_back(at_risk);
            curve.events.push_back(deaths);
        }
        at_risk -= removed;
    }
    return curve;
}

TestResult log_rank(const std::vector<SurvivalGroup>& groups) {
    const std::size_t k = groups.size();
    if (k < 2) fail(ErrorKind::domain, "log-rank needs at least 2 groups");
    struct Obs {
        double time;
        std::size_t group;
        bool event;
    };
    std::vector<Obs> obs;
    for (std::size_t g = 0; g < k; ++g) {
        const auto& grp = groups[g];
        if (grp.durations.empty()) fail(ErrorKind::domain, "log-rank group " + std::to_string(g) + " is empty");
        if (grp.durations.size() != grp.events.size()) fail(ErrorKind::domain, "durations and events differ in length");
        for (std::size_t i = 0; i < grp.durations.size(); ++i) {
            const double d = grp.durations[i];
            if (!(d >= 0.0) || !std::isfinite(d)) fail(ErrorKind::domain, "durations must be finite and non-negative");
            obs.push_back({d, g, grp.events[i]});
        }
    }
    std::sort(obs.begin(), obs.end(), [](const Obs& a, const Obs& b) { return a.time < b.time; });

    std::vector<double> at_risk(k, 0.0);
    for (const auto& o : obs) at_risk[o.group] += 1.0;
    std::vector<double> observed_minus_expected(k, 0.0);
    Matrix v(k, k);
    double total_events = 0.0;
    for (std::size_t i = 0; i < obs.size();) {
        std::size_t j = i;
        std::vector<double> deaths(k, 0.0), removed(k, 0.0);
        while (j < obs.size() && obs[j].time == obs[i].time) {
            if (obs[j].event) deaths[obs[j].group] += 1.0;
            removed[obs[j].group] += 1.0;
            ++j;
        }
        double n = 0.0, d = 0.0;
        for (std::size_t g = 0; g < k; ++g) {
            n += at_risk[g];
            d += deaths[g];
        }
        if (d > 0.0) {
            total_events += d;
            for (std::size_t g = 0; g < k; ++g) observed_minus_expected[g] += deaths[g] - d * at_risk[g] / n;
            if (n > 1.0) {
                const double f = d * (n - d) / (n * n * (n - 1.0));
                for (std::size_t a = 0; a < k; ++a) {
                    for (std::size_t b = 0; b < k; ++b) {
                        v(a, b) += f * at_risk[a] * ((a == b ? n : 0.0) - at_risk[b]);
                    }
                }
            }
        }
        for (std::size_t g = 0; g < k; ++g) at_risk[g] -= removed[g];
        i = j;
    }

    TestResult r;
    r.dof = static_cast<double>(k - 1);
    r.n_used = obs.size();
    if (total_events == 0.0) return r;
    // Drop the last group: the full covariance is singular.
    Matrix reduced(k - 1, k - 1);
    std::vector<double> z(k - 1);
    for (std::size_t a = 0; a + 1 < k; ++a) {
        z[a] = observed_minus_expected[a];
        for (std::size_t b = 0; b + 1 < k; ++b) reduced(a, b) = v(a, b);
    }
    std::vector<double> w;
    try {
        w = solve_linear(reduced, z);
    } catch (const Error&) {
        fail(ErrorKind::domain, "log-rank variance matrix is singular");
    }
    r.statistic = std::max(0.0, dot(z, w));
    r.p_value = std::clamp(chi_square_sf(r.statistic, r.dof), 0.0, 1.0);
    return r;
}

}  // namespace autods::stats
