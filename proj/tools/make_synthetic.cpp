// Writes the bundled synthetic datasets.
#include <iostream>

#include <CLI11.hpp>

#include "autods/error.hpp"
#include "autods/synthetic.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Generate synthetic datasets with planted effects"};
    std::string kind = "churn", out;
    std::size_t rows = 2000;
    std::uint64_t seed = 7;
    app.add_option("--kind", kind, "churn or interaction")->check(CLI::IsMember({"churn", "interaction"}));
    app.add_option("--rows", rows, "row count");
    app.add_option("--seed", seed, "generator seed");
    app.add_option("--out", out, "output CSV path")->required();
    CLI11_PARSE(app, argc, argv);
    try {
        const auto t = kind == "churn" ? autods::synthetic::churn(rows, seed) : autods::synthetic::interaction(rows, seed);
        autods::write_csv(t, out);
    } catch (const autods::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
