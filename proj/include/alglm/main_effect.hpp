#pragma once

#include <Eigen/Dense>

#include "alglm/crossfit.hpp"
#include "alglm/dataset.hpp"
#include "alglm/link.hpp"
#include "alglm/report.hpp"

namespace alglm {

// g'(mu) (y - mu) + g(mu) - m_g, with mu already clipped into the link domain.
double mu_term(double y, double mu, double m_g, const Link& link);
Eigen::VectorXd mu_terms(const Eigen::VectorXd& y, const NuisanceFit& nuis, const Link& link);

// Influence values (a - e)(mu_term - beta (a - e)) / mean((a - e)^2).
Eigen::VectorXd influence_main(const Dataset& data, const Link& link, const NuisanceFit& nuis, double beta);

// No-intercept regression of mu_term on the exposure residual a - e, pooled
// over all folds, with the standard error from the influence values at the
// pooled estimate.
EstimateReport estimate_main(const Dataset& data, const Link& link, const NuisanceFit& nuis);

}  // namespace alglm
