#pragma once

#include <functional>

#include <Eigen/Dense>

#include "alglm/dataset.hpp"
#include "alglm/folds.hpp"
#include "alglm/learners.hpp"
#include "alglm/link.hpp"
#include "alglm/report.hpp"

namespace alglm {

struct GlmFit {
    Eigen::VectorXd coefficients;
    Eigen::VectorXd model_se;  // from the inverse expected information
    Eigen::MatrixXd inverse_information;
    Eigen::VectorXd fitted;    // mean scale
    double dispersion = 1.0;
    double deviance = 0.0;
    bool converged = false;
    int iterations = 0;
};

// Maximum likelihood by IRLS for the canonical family of the link: identity
// (Gaussian), logit (binomial) and log (Poisson). Step halving guards against
// deviance increases. Throws EstimationError on separation (|eta| > 30 for the
// logit link) or a rank-deficient design.
GlmFit fit_glm(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Link& link);

// GLM of Y on [1, A1, L] (or [A1, L] without intercept).
GlmFit fit_glm_mle(const Dataset& data, const Link& link, bool include_intercept = true);

// Report for coefficient `column` of a fitted GLM. The standard error is the
// model-based one; influence values are the per-row score contributions
// mapped through the inverse information (they sum to zero at the MLE).
EstimateReport glm_coefficient_report(const GlmFit& fit, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                      Eigen::Index column);

// MLE of beta in g{E(Y|A,L)} = beta A + alpha0 + alpha1' L.
EstimateReport mle_report(const Dataset& data, const Link& link);

// OLS of Y on [1, A1, A2, L, A1 A2], reporting the A1 A2 coefficient with its
// model-based standard error.
EstimateReport ols_interaction_report(const Dataset& data);

// G-estimator sum (A - e)(Y - omega0) / sum (A - e) A.
EstimateReport e_estimator(const Dataset& data, const Eigen::VectorXd& e_a, const Eigen::VectorXd& omega0);

// Out-of-fold omega0(L) under the partially linear working model
// E(Y|A,L) = beta A + omega(L). On each training fold, Y = beta A + s(L) is fit
// by backfitting with the given learner; omega0 is s evaluated on the held-out
// fold.
Eigen::VectorXd partially_linear_omega0(const Dataset& data, const LearnerSpec& spec, const FoldPlan& plan);

// Root of an estimating equation that is monotone in beta, bracketed on
// [-10, 10] and then once on [-30, 30].
double solve_monotone(const std::function<double(double)>& f, double bracket = 10.0, double widened = 30.0);

// Efficient-score estimator in the partially linear logistic model. mu_at
// holds E(Y | A = 0, L) and E(Y | A = 1, L) in its two columns.
EstimateReport es_estimator(const Dataset& data, const Eigen::MatrixXd& mu_at, const Eigen::VectorXd& e_a,
                            double clip_eps = 1e-6);

// Closed-form doubly robust estimator, solved by the same bracketed search.
EstimateReport dr_estimator(const Dataset& data, const Eigen::VectorXd& e_a_given_y0, const Eigen::VectorXd& mu0);

}  // namespace alglm
