#include "alglm/interaction.hpp"

#include <cmath>

#include "alglm/crossfit.hpp"
#include "alglm/errors.hpp"

namespace alglm {

namespace {

double population_variance(const Eigen::VectorXd& v) {
    return (v.array() - v.mean()).square().mean();
}

Eigen::MatrixXd joint_features(const Dataset& data) {
    Eigen::MatrixXd x(data.n(), data.d() + 2);
    x.col(0) = data.a1();
    x.col(1) = data.a2();
    x.rightCols(data.l().cols()) = data.l();
    return x;
}

void require_two_exposures(const Dataset& data) {
    if (!data.has_a2()) throw ConfigError("interaction estimators need a second exposure");
}

}  // namespace

InteractionNuisances nuisance_interaction(const Dataset& data, const Link& link, const LearnerSpec& spec,
                                          const FoldPlan& plan) {
    require_two_exposures(data);
    if (plan.n() != data.n()) throw ConfigError("fold plan length differs from dataset size");
    InteractionNuisances nu;
    nu.fold_plan = plan;
    ClipCounter clips;
    std::string s_a1, s_a2, s_y;

    nu.e_a1 = crossfit_predict(data.l(), data.a1(), with_seed(spec, "e_a1", 0), plan, &s_a1);
    nu.e_a2 = crossfit_predict(data.l(), data.a2(), with_seed(spec, "e_a2", 0), plan, &s_a2);
    if (data.a1_binary()) nu.e_a1 = nu.e_a1.unaryExpr([&](double p) { return clip_prob(p, link.clip_eps(), &clips); });
    if (data.a2_binary()) nu.e_a2 = nu.e_a2.unaryExpr([&](double p) { return clip_prob(p, link.clip_eps(), &clips); });

    nu.mu = link.clip(crossfit_predict(joint_features(data), data.y(), with_seed(spec, "mu", 0), plan, &s_y), &clips);
    nu.g_mu = link.eval(nu.mu);

    const Eigen::VectorXd r1 = data.a1() - nu.e_a1;
    const Eigen::VectorXd r2 = data.a2() - nu.e_a2;
    nu.m1 = crossfit_predict(data.l(), r2.cwiseProduct(nu.g_mu), with_seed(spec, "m1", 0), plan);
    nu.m2 = crossfit_predict(data.l(), r1.cwiseProduct(nu.g_mu), with_seed(spec, "m2", 0), plan);
    nu.v1 = crossfit_predict(data.l(), r1.cwiseAbs2(), with_seed(spec, "v1", 0), plan).cwiseMax(0.0);
    nu.v2 = crossfit_predict(data.l(), r2.cwiseAbs2(), with_seed(spec, "v2", 0), plan).cwiseMax(0.0);
    nu.clip_count = clips.count;
    nu.learner_summaries = "e_a1: " + s_a1 + "; e_a2: " + s_a2 + "; mu: " + s_y;
    return nu;
}

EstimateReport estimate_interaction_indep(const Dataset& data, const Link& link,
                                          const InteractionNuisances& nu) {
    require_two_exposures(data);
    const auto n = static_cast<Eigen::Index>(data.n());
    for (const Eigen::VectorXd* v : {&nu.e_a1, &nu.e_a2, &nu.mu, &nu.m1, &nu.m2, &nu.v1, &nu.v2}) {
        if (v->size() != n) throw ConfigError("interaction nuisance length differs from dataset size");
    }
    const Eigen::ArrayXd r1 = (data.a1() - nu.e_a1).array();
    const Eigen::ArrayXd r2 = (data.a2() - nu.e_a2).array();
    const Eigen::ArrayXd v = (data.a1().array() * data.a2().array());
    const Eigen::ArrayXd g_mu = link.eval(nu.mu).array();
    const Eigen::ArrayXd outcome = link.prime(nu.mu).array() * (data.y() - nu.mu).array() + g_mu;

    // Per-row numerator and denominator terms; beta solves sum(num - beta * den) = 0.
    const Eigen::ArrayXd num = r1 * r2 * outcome - nu.m1.array() * r1 - nu.m2.array() * r2;
    const Eigen::ArrayXd den = r1 * r2 * v - nu.e_a1.array() * nu.v2.array() * r1 -
                               nu.e_a2.array() * nu.v1.array() * r2;
    const double den_mean = den.mean();
    const double scale = (r1 * r2 * v).abs().mean() + (nu.e_a1.array() * nu.v2.array() * r1).abs().mean() +
                         (nu.e_a2.array() * nu.v1.array() * r2).abs().mean();
    if (!(std::abs(den_mean) > 1e-12 * scale) || scale == 0.0) {
        throw EstimationError("interaction denominator is numerically zero");
    }
    const double beta = num.sum() / den.sum();
    Eigen::VectorXd infl = ((num - beta * den) / den_mean).matrix();
    Diagnostics diag;
    diag.denominator = den_mean;
    diag.n_clipped = nu.clip_count;
    diag.learner_summaries = nu.learner_summaries;
    return make_report(beta, std::move(infl), std::move(diag));
}

AceResult ace_project(const Eigen::VectorXd& target, const Eigen::MatrixXd& features1,
                      const Eigen::MatrixXd& features2, const Regressor& regress, const AceOptions& options) {
    if (target.size() < 50) throw ConfigError("ACE needs at least 50 rows");
    if (!target.allFinite()) throw ConfigError("ACE target must be finite");
    if (features1.rows() != target.size() || features2.rows() != target.size()) {
        throw ConfigError("ACE feature row count differs from target length");
    }
    if (!(options.tol > 0.0) || options.max_iter < 1) throw ConfigError("invalid ACE options");

    AceResult res;
    res.residual = target;
    const double var0 = population_variance(target);
    res.variance_trace.push_back(var0);
    if (var0 == 0.0) {
        res.residual.setZero();
        res.converged = true;
        res.stop_reason = "constant target";
        return res;
    }

    int small_decrease = 0;
    int small_prediction = 0;
    for (int k = 1; k <= options.max_iter; ++k) {
        const Eigen::MatrixXd& feats = (k % 2 == 1) ? features1 : features2;
        const Eigen::VectorXd pred = regress(feats, res.residual);

        // Least-squares calibration r ~ a + b * pred.
        const double pm = pred.mean();
        const double rm = res.residual.mean();
        const Eigen::ArrayXd pc = pred.array() - pm;
        const double spp = pc.square().sum();
        double b = 0.0;
        if (spp > 1e-14 * static_cast<double>(pred.size()) * var0) {
            b = (pc * (res.residual.array() - rm)).sum() / spp;
        }
        const Eigen::VectorXd fitted = (rm + b * pc).matrix();
        res.residual -= fitted;
        const double var_k = population_variance(res.residual);
        const double var_prev = res.variance_trace.back();
        res.variance_trace.push_back(var_k);
        res.iterations = k;

        if (var_k < 1e-8 * var0) {
            res.converged = true;
            res.stop_reason = "residual variance near zero";
            break;
        }
        small_decrease = (var_prev - var_k) / var0 < options.tol ? small_decrease + 1 : 0;
        small_prediction = population_variance(fitted) < 1e-8 * var0 ? small_prediction + 1 : 0;
        if (small_prediction >= 2) {
            res.converged = true;
            res.stop_reason = "predicted component variance near zero";
            break;
        }
        if (small_decrease >= 2) {
            res.converged = true;
            res.stop_reason = "relative variance decrease below tolerance";
            break;
        }
    }
    if (!res.converged) res.stop_reason = "max_iter reached";
    return res;
}

AceResult ace_project(const Eigen::VectorXd& target, const Dataset& data, const LearnerSpec& spec,
                      const AceOptions& options) {
    require_two_exposures(data);
    const Eigen::MatrixXd f1 = prepend_column(data.a1(), data.l());
    const Eigen::MatrixXd f2 = prepend_column(data.a2(), data.l());
    std::uint64_t step = 0;
    Regressor regress = [&spec, &step](const Eigen::MatrixXd& x, const Eigen::VectorXd& t) {
        return fit_predict_held_out(with_seed(spec, "ace_step", step++), x, t);
    };
    return ace_project(target, f1, f2, regress, options);
}

EstimateReport estimate_interaction_proj_given(const Dataset& data, const Link& link, const Eigen::VectorXd& mu,
                                               const Eigen::VectorXd& p_a1a2, const Eigen::VectorXd& p_gmu) {
    require_two_exposures(data);
    const auto n = static_cast<Eigen::Index>(data.n());
    if (mu.size() != n || p_a1a2.size() != n || p_gmu.size() != n) {
        throw ConfigError("projection inputs must have the dataset's length");
    }
    const Eigen::VectorXd v = data.a1().cwiseProduct(data.a2());
    const double den = p_a1a2.squaredNorm() / static_cast<double>(n);
    if (!(den >= 1e-12 * population_variance(v)) || den == 0.0) {
        throw EstimationError("no projected interaction variation");
    }
    const Eigen::ArrayXd outcome = link.prime(mu).array() * (data.y() - mu).array() + p_gmu.array();
    const double beta = (p_a1a2.array() * outcome).mean() / den;
    Eigen::VectorXd infl = (p_a1a2.array() * (outcome - beta * p_a1a2.array()) / den).matrix();
    Diagnostics diag;
    diag.denominator = den;
    return make_report(beta, std::move(infl), std::move(diag));
}

namespace {
nlohmann::json ace_json(const AceResult& r) {
    return nlohmann::json{{"iterations", r.iterations},
                          {"converged", r.converged},
                          {"stop_reason", r.stop_reason},
                          {"variance_trace", r.variance_trace}};
}
}  // namespace

EstimateReport estimate_interaction_proj(const Dataset& data, const Link& link, const LearnerSpec& spec,
                                         const FoldPlan& plan, const AceOptions& options) {
    require_two_exposures(data);
    if (plan.n() != data.n()) throw ConfigError("fold plan length differs from dataset size");
    ClipCounter clips;
    std::string s_y;
    const Eigen::VectorXd mu =
        link.clip(crossfit_predict(joint_features(data), data.y(), with_seed(spec, "mu", 0), plan, &s_y), &clips);
    const Eigen::VectorXd v = data.a1().cwiseProduct(data.a2());
    const AceResult ace_v = ace_project(v, data, with_seed(spec, "ace_a1a2", 0), options);
    const AceResult ace_g = ace_project(link.eval(mu), data, with_seed(spec, "ace_gmu", 0), options);
    EstimateReport report = estimate_interaction_proj_given(data, link, mu, ace_v.residual, ace_g.residual);
    report.diagnostics.n_clipped = clips.count;
    report.diagnostics.learner_summaries = "mu: " + s_y;
    report.diagnostics.extra["ace_a1a2"] = ace_json(ace_v);
    report.diagnostics.extra["ace_gmu"] = ace_json(ace_g);
    return report;
}

}  // namespace alglm
