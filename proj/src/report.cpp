#include "alglm/report.hpp"

#include <cmath>
#include <vector>

namespace alglm {

double sample_sd(const Eigen::VectorXd& v) {
    const auto n = v.size();
    if (n < 2) return 0.0;
    const double mean = v.mean();
    return std::sqrt((v.array() - mean).square().sum() / static_cast<double>(n - 1));
}

EstimateReport make_report(double beta, Eigen::VectorXd influence, Diagnostics diag) {
    EstimateReport r;
    r.beta_hat = beta;
    r.n = static_cast<std::size_t>(influence.size());
    r.se = r.n > 0 ? sample_sd(influence) / std::sqrt(static_cast<double>(r.n)) : 0.0;
    r.ci_lower = beta - kZ975 * r.se;
    r.ci_upper = beta + kZ975 * r.se;
    r.influence_values = std::move(influence);
    r.diagnostics = std::move(diag);
    return r;
}

nlohmann::json to_json(const EstimateReport& report, bool include_influence) {
    nlohmann::json diag = report.diagnostics.extra;
    diag["denominator"] = report.diagnostics.denominator;
    diag["n_clipped"] = report.diagnostics.n_clipped;
    diag["learner_summaries"] = report.diagnostics.learner_summaries;
    nlohmann::json j{{"schema_version", 1},
                     {"beta", report.beta_hat},
                     {"se", report.se},
                     {"ci", {report.ci_lower, report.ci_upper}},
                     {"n", report.n},
                     {"diagnostics", diag}};
    if (include_influence) {
        j["influence_values"] = std::vector<double>(
            report.influence_values.data(), report.influence_values.data() + report.influence_values.size());
    }
    return j;
}

}  // namespace alglm
