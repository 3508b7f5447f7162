#include "autods/synthetic.hpp"

#include <cmath>

#include "autods/rng.hpp"

namespace autods::synthetic {

DataTable churn(std::size_t n, std::uint64_t seed) {
    Rng rng(derive_seed(seed, "churn"));
    // Tenure 0..10: P(< 3) = 0.4, P(3) = 0.15, so the median is 3
    const double tenure_p[] = {0.12, 0.14, 0.14, 0.15, 0.07, 0.07, 0.07, 0.06, 0.06, 0.06, 0.06};
    const char* countries[] = {"France", "Germany", "Spain"};
    std::vector<std::string> geography(n);
    std::vector<double> tenure(n), products(n), balance(n), noise(n);
    std::vector<bool> active(n), exited(n);
    std::vector<std::uint8_t> balance_missing(n, 0), geography_missing(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        double u = rng.uniform();
        int t = 0;
        while (t < 10 && u >= tenure_p[t]) u -= tenure_p[t++];
        tenure[i] = t;
        active[i] = rng.bernoulli(0.7);
        const bool short_tenure = t < 3;
        // cell rates chosen so both marginal contrasts hold
        const double p = short_tenure ? 0.35 : (active[i] ? 0.10 : 0.4 + 1.0 / 30.0);
        exited[i] = rng.bernoulli(p);
        const double g = rng.uniform();
        geography[i] = countries[g < 0.5 ? 0 : (g < 0.75 ? 1 : 2)];
        const double k = rng.uniform();
        products[i] = k < 0.5 ? 1 : (k < 0.96 ? 2 : (k < 0.99 ? 3 : 4));
        balance[i] = rng.bernoulli(0.35) ? 0.0 : std::round(std::exp(11.5 + 0.3 * rng.normal()) * 100.0) / 100.0;
        noise[i] = rng.normal();
        balance_missing[i] = rng.bernoulli(0.03);
        geography_missing[i] = rng.bernoulli(0.01);
    }
    return DataTable({Column::categorical("Geography", geography, geography_missing), Column::numeric("Tenure", tenure),
                      Column::numeric("NumOfProducts", products), Column::numeric("Balance", balance, balance_missing),
                      Column::boolean("IsActiveMember", active), Column::numeric("Noise", noise),
                      Column::boolean("Exited", exited)});
}

DataTable interaction(std::size_t n, std::uint64_t seed) {
    Rng rng(derive_seed(seed, "interaction"));
    std::vector<double> x1(n), x2(n), x3(n), n1(n), n2(n), n3(n), n4(n);
    std::vector<bool> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        x1[i] = rng.normal();
        x2[i] = rng.normal();
        x3[i] = rng.normal();
        n1[i] = rng.normal();
        n2[i] = rng.uniform(0.0, 10.0);
        n3[i] = rng.normal();
        n4[i] = std::floor(rng.uniform(0.0, 5.0));
        const double score = x1[i] * x2[i] + (x3[i] < -0.67 ? 1.0 : 0.0) - 0.25 + 0.5 * rng.normal();
        y[i] = score > 0.0;
    }
    return DataTable({Column::numeric("x1", x1), Column::numeric("x2", x2), Column::numeric("x3", x3),
                      Column::numeric("n1", n1), Column::numeric("n2", n2), Column::numeric("n3", n3),
                      Column::numeric("n4", n4), Column::boolean("y", y)});
}

}  // namespace autods::synthetic
