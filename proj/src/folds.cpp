#include "alglm/folds.hpp"

#include <string>

#include "alglm/errors.hpp"
#include "alglm/rng.hpp"

namespace alglm {

std::vector<std::size_t> FoldPlan::rows_in(int fold) const {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < assignments.size(); ++i) {
        if (assignments[i] == fold) rows.push_back(i);
    }
    return rows;
}

std::vector<std::size_t> FoldPlan::rows_not_in(int fold) const {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < assignments.size(); ++i) {
        if (assignments[i] != fold) rows.push_back(i);
    }
    return rows;
}

std::vector<std::size_t> FoldPlan::fold_sizes() const {
    std::vector<std::size_t> sizes(static_cast<std::size_t>(K), 0);
    for (int f : assignments) ++sizes[static_cast<std::size_t>(f)];
    return sizes;
}

FoldPlan make_folds(std::size_t n, int K, std::uint64_t seed) {
    if (K < 2) {
        throw ConfigError("fold count K must be at least 2, got " + std::to_string(K));
    }
    if (n < 2 * static_cast<std::size_t>(K)) {
        throw ConfigError("need n >= 2K rows for " + std::to_string(K) + " folds, got n = " +
                          std::to_string(n));
    }
    RngStream rng(seed, "folds", n);
    const auto perm = random_permutation(n, rng);
    FoldPlan plan;
    plan.K = K;
    plan.seed = seed;
    plan.assignments.assign(n, 0);
    for (std::size_t pos = 0; pos < n; ++pos) {
        plan.assignments[perm[pos]] = static_cast<int>(pos % static_cast<std::size_t>(K));
    }
    return plan;
}

nlohmann::json to_json(const FoldPlan& plan) {
    return nlohmann::json{{"seed", plan.seed}, {"K", plan.K}, {"assignments", plan.assignments}};
}

FoldPlan fold_plan_from_json(const nlohmann::json& j) {
    FoldPlan plan;
    try {
        plan.seed = j.at("seed").get<std::uint64_t>();
        plan.K = j.at("K").get<int>();
        plan.assignments = j.at("assignments").get<std::vector<int>>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed fold plan: ") + e.what());
    }
    if (plan.K < 2) throw ConfigError("fold plan K must be at least 2");
    for (int f : plan.assignments) {
        if (f < 0 || f >= plan.K) throw ConfigError("fold plan assignment out of range");
    }
    return plan;
}

}  // namespace alglm
