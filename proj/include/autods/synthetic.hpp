#pragma once

#include <cstdint>

#include "autods/table.hpp"

namespace autods::synthetic {

/// Bank-churn shaped table with two planted effects: churn is 20% for
/// active members vs 40% for inactive ones, and 35% for Tenure < 3 vs 20%
/// otherwise. 70% of members are active and 40% have Tenure < 3 (the
/// shares that make both sets of rates hold at once). Geography,
/// NumOfProducts, Balance and Noise are independent of Exited. Balance has
/// about 3% missing cells and Geography about 1%.
DataTable churn(std::size_t n, std::uint64_t seed);

/// Binary target driven by the product x1 * x2 plus noise, x1 and x2 having
/// no main effect; also a step at x3 < -0.67, and unrelated columns
/// n1..n4.
DataTable interaction(std::size_t n, std::uint64_t seed);

}  // namespace autods::synthetic
