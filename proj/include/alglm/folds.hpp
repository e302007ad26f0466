#pragma once

#include <cstdint>
#include <vector>

#include "json.hpp"

namespace alglm {

// Assignment of rows 0..n-1 to K folds.
struct FoldPlan {
    std::vector<int> assignments;
    int K = 0;
    std::uint64_t seed = 0;

    std::size_t n() const { return assignments.size(); }
    std::vector<std::size_t> rows_in(int fold) const;
    std::vector<std::size_t> rows_not_in(int fold) const;
    std::vector<std::size_t> fold_sizes() const;
};

// Shuffle 0..n-1 with a stream keyed by seed, then deal the shuffled rows
// round-robin across folds. Requires K >= 2 and n >= 2K.
FoldPlan make_folds(std::size_t n, int K, std::uint64_t seed);

nlohmann::json to_json(const FoldPlan& plan);
FoldPlan fold_plan_from_json(const nlohmann::json& j);

}  // namespace alglm
