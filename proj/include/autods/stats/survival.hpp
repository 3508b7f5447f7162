#pragma once

#include <span>
#include <vector>

#include "autods/stats/inference.hpp"

namespace autods::stats {

/// Product-limit step function; survival[i] holds S just after times[i].
struct SurvivalCurve {
    std::vector<double> times;
    std::vector<double> survival;
    std::vector<std::size_t> at_risk;
    std::vector<std::size_t> events;

    /// S(t), right-continuous; 1 before the first event time.
    double at(double t) const;
};

SurvivalCurve kaplan_meier(std::span<const double> durations, const std::vector<bool>& events);

struct SurvivalGroup {
    std::vector<double> durations;
    std::vector<bool> events;
};

/// K-sample log-rank chi-square, dof K - 1.
TestResult log_rank(const std::vector<SurvivalGroup>& groups);

}  // namespace autods::stats
