#include "alglm/main_effect.hpp"

#include "alglm/errors.hpp"

namespace alglm {

double mu_term(double y, double mu, double m_g, const Link& link) {
    return link.prime(mu) * (y - mu) + link.eval(mu) - m_g;
}

Eigen::VectorXd mu_terms(const Eigen::VectorXd& y, const NuisanceFit& nuis, const Link& link) {
    if (nuis.mu.size() != y.size() || nuis.m_g.size() != y.size()) {
        throw ConfigError("nuisance vectors must have the dataset's length");
    }
    return link.prime(nuis.mu).cwiseProduct(y - nuis.mu) + link.eval(nuis.mu) - nuis.m_g;
}

namespace {

struct Residuals {
    Eigen::VectorXd r;
    double mean_sq;
};

Residuals exposure_residuals(const Dataset& data, const NuisanceFit& nuis) {
    if (nuis.e_a1.size() != data.a1().size()) {
        throw ConfigError("exposure nuisance length differs from dataset size");
    }
    Residuals out;
    out.r = data.a1() - nuis.e_a1;
    const double n = static_cast<double>(data.n());
    const double sum_sq = out.r.squaredNorm();
    const double var_a = (data.a1().array() - data.a1().mean()).square().sum() / n;
    if (!(sum_sq > 1e-12 * n * var_a) || var_a <= 0.0) {
        throw EstimationError("no residual exposure variation");
    }
    out.mean_sq = sum_sq / n;
    return out;
}

}  // namespace

Eigen::VectorXd influence_main(const Dataset& data, const Link& link, const NuisanceFit& nuis, double beta) {
    const Residuals res = exposure_residuals(data, nuis);
    const Eigen::VectorXd mt = mu_terms(data.y(), nuis, link);
    return res.r.cwiseProduct(mt - beta * res.r) / res.mean_sq;
}

EstimateReport estimate_main(const Dataset& data, const Link& link, const NuisanceFit& nuis) {
    const Residuals res = exposure_residuals(data, nuis);
    const Eigen::VectorXd mt = mu_terms(data.y(), nuis, link);
    const double beta = res.r.dot(mt) / res.r.squaredNorm();
    Eigen::VectorXd infl = res.r.cwiseProduct(mt - beta * res.r) / res.mean_sq;
    Diagnostics diag;
    diag.denominator = res.mean_sq;
    diag.n_clipped = nuis.clip_count;
    diag.learner_summaries = nuis.learner_summaries;
    return make_report(beta, std::move(infl), std::move(diag));
}

}  // namespace alglm
