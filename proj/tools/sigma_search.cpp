// Scans covariance seeds for one whose corr(L3, L6) and large-sample OLS
// interaction coefficient in interaction experiment 2 match the published
// design. Usage: sigma_search [first_seed] [count]
#include <cmath>
#include <cstdio>
#include <cstdlib>

#include "alglm/comparators.hpp"
#include "alglm/simulation.hpp"

int main(int argc, char** argv) {
    const std::uint64_t first = argc > 1 ? std::strtoull(argv[1], nullptr, 10) : 0;
    const std::uint64_t count = argc > 2 ? std::strtoull(argv[2], nullptr, 10) : 100000;
    const double target_corr = -0.54, target_ols = -2.92;
    for (std::uint64_t s = first; s < first + count; ++s) {
        const Eigen::MatrixXd sigma = alglm::make_sigma(s);
        const double corr = sigma(2, 5) / std::sqrt(sigma(2, 2) * sigma(5, 5));
        if (std::abs(corr - target_corr) > 0.005) continue;
        const auto data = alglm::dgp_interaction(2, 400000, 99, s, false, 0);
        const double ols = alglm::ols_interaction_report(data).beta_hat;
        std::printf("seed %llu corr %.4f ols %.4f%s\n", static_cast<unsigned long long>(s), corr, ols,
                    std::abs(ols - target_ols) < 0.03 ? "  <-- candidate" : "");
        std::fflush(stdout);
    }
    return 0;
}
