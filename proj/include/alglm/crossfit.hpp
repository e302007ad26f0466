#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "alglm/dataset.hpp"
#include "alglm/folds.hpp"
#include "alglm/learners.hpp"
#include "alglm/link.hpp"

namespace alglm {

// Out-of-fold nuisance predictions for the main-effect estimator.
struct NuisanceFit {
    Eigen::VectorXd e_a1;                  // E(A1 | L)
    std::optional<Eigen::VectorXd> e_a2;   // E(A2 | L)
    Eigen::VectorXd mu;                    // E(Y | A, L) at the observed exposure, link-clipped
    std::optional<Eigen::MatrixXd> mu_at;  // columns: E(Y | A = 0, L), E(Y | A = 1, L), link-clipped
    Eigen::VectorXd m_g;                   // E[g{E(Y | A, L)} | L]
    std::map<std::string, Eigen::VectorXd> extras;
    FoldPlan fold_plan;
    std::size_t clip_count = 0;
    std::string learner_summaries;
};

// Entry i is the prediction at row i of a learner fit on every fold except
// fold(i). Each fold's learner gets its own child seed.
Eigen::VectorXd crossfit_predict(const Eigen::MatrixXd& features, const Eigen::VectorXd& target,
                                 const LearnerSpec& spec, const FoldPlan& plan,
                                 std::string* summary = nullptr);

// Like crossfit_predict, but each fold's learner is also evaluated on the
// held-out rows of each alternative feature matrix. Result k holds the
// predictions for eval_features[k].
std::vector<Eigen::VectorXd> crossfit_predict_at(const Eigen::MatrixXd& features,
                                                 const Eigen::VectorXd& target,
                                                 const LearnerSpec& spec, const FoldPlan& plan,
                                                 const std::vector<Eigen::MatrixXd>& eval_features,
                                                 std::string* summary = nullptr);

// Nuisances for the main-effect estimator on a single-exposure dataset. With
// binary A1 the conditional mean of g(mu) given L uses the exact two-point
// average; otherwise it is fit by spec_mg on L with target g(clipped mu).
NuisanceFit nuisance_main(const Dataset& data, const Link& link, const LearnerSpec& spec_a,
                          const LearnerSpec& spec_y, const LearnerSpec& spec_mg, const FoldPlan& plan);

}  // namespace alglm
