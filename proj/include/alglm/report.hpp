#pragma once

#include <map>
#include <string>

#include <Eigen/Dense>

#include "json.hpp"

namespace alglm {

inline constexpr double kZ975 = 1.959964;

struct Diagnostics {
    double denominator = 0.0;
    std::size_t n_clipped = 0;
    std::string learner_summaries;
    // Estimator-specific extras (ACE traces, iteration counts, ...).
    nlohmann::json extra = nlohmann::json::object();
};

// Point estimate with influence values and a 95% Wald interval.
struct EstimateReport {
    double beta_hat = 0.0;
    double se = 0.0;
    double ci_lower = 0.0;
    double ci_upper = 0.0;
    Eigen::VectorXd influence_values;
    std::size_t n = 0;
    Diagnostics diagnostics;
};

// Sample standard deviation with denominator n - 1.
double sample_sd(const Eigen::VectorXd& v);

// Fill se = sd(influence)/sqrt(n) and the Wald interval around beta.
EstimateReport make_report(double beta, Eigen::VectorXd influence, Diagnostics diag = {});

nlohmann::json to_json(const EstimateReport& report, bool include_influence = false);

}  // namespace alglm
