#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "alglm/dataset.hpp"
#include "alglm/folds.hpp"
#include "alglm/learners.hpp"
#include "alglm/link.hpp"
#include "alglm/report.hpp"

namespace alglm {

// Out-of-fold conditional moments used by the independence-assuming
// interaction estimator. r_j denotes A_j - e_aj.
struct InteractionNuisances {
    Eigen::VectorXd e_a1;  // E(A1 | L)
    Eigen::VectorXd e_a2;  // E(A2 | L)
    Eigen::VectorXd mu;    // E(Y | A1, A2, L), link-clipped
    Eigen::VectorXd g_mu;  // g(mu)
    Eigen::VectorXd m1;    // E[r2 g(mu) | L]
    Eigen::VectorXd m2;    // E[r1 g(mu) | L]
    Eigen::VectorXd v1;    // E[r1^2 | L], floored at 0
    Eigen::VectorXd v2;    // E[r2^2 | L], floored at 0
    FoldPlan fold_plan;
    std::size_t clip_count = 0;
    std::string learner_summaries;
};

InteractionNuisances nuisance_interaction(const Dataset& data, const Link& link, const LearnerSpec& spec,
                                          const FoldPlan& plan);

// Solves the empirical mean of the influence curve for beta under
// conditionally independent exposures.
EstimateReport estimate_interaction_indep(const Dataset& data, const Link& link,
                                          const InteractionNuisances& nuis);

struct AceOptions {
    double tol = 1e-6;
    int max_iter = 50;
};

struct AceResult {
    Eigen::VectorXd residual;
    std::vector<double> variance_trace;  // entry 0 is the target's variance
    int iterations = 0;
    bool converged = false;
    std::string stop_reason;
};

// Returns predictions of target at the rows of features. Used by ACE so that
// tests can plug in exact conditional means.
using Regressor = std::function<Eigen::VectorXd(const Eigen::MatrixXd& features, const Eigen::VectorXd& target)>;

// Alternating projection of target onto the functions with conditional mean
// zero given (A1, L) and given (A2, L). Each step regresses the current
// residual on one feature set, recalibrates the prediction by least squares
// with an intercept, and subtracts it.
AceResult ace_project(const Eigen::VectorXd& target, const Eigen::MatrixXd& features1,
                      const Eigen::MatrixXd& features2, const Regressor& regress,
                      const AceOptions& options = {});

// Learner-backed version: features (A1, L) and (A2, L) from data, with
// held-out (out-of-bag or cross-fitted) predictions at each step.
AceResult ace_project(const Eigen::VectorXd& target, const Dataset& data, const LearnerSpec& spec,
                      const AceOptions& options = {});

// Plug-in estimator given fitted mean mu and projections of A1A2 and g(mu).
EstimateReport estimate_interaction_proj_given(const Dataset& data, const Link& link, const Eigen::VectorXd& mu,
                                               const Eigen::VectorXd& p_a1a2, const Eigen::VectorXd& p_gmu);

// Full projection estimator: cross-fitted mu on (A1, A2, L), then ACE runs
// for A1A2 and g(mu).
EstimateReport estimate_interaction_proj(const Dataset& data, const Link& link, const LearnerSpec& spec,
                                         const FoldPlan& plan, const AceOptions& options = {});

}  // namespace alglm
