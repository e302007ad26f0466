#include "alglm/crossfit.hpp"

#include <algorithm>

#include "alglm/errors.hpp"

namespace alglm {

std::vector<Eigen::VectorXd> crossfit_predict_at(const Eigen::MatrixXd& features,
                                                 const Eigen::VectorXd& target,
                                                 const LearnerSpec& spec, const FoldPlan& plan,
                                                 const std::vector<Eigen::MatrixXd>& eval_features,
                                                 std::string* summary) {
    const auto n = static_cast<std::size_t>(features.rows());
    if (plan.n() != n || static_cast<std::size_t>(target.size()) != n) {
        throw ConfigError("fold plan, features and target must all have n rows");
    }
    for (const auto& ev : eval_features) {
        if (ev.rows() != features.rows() || ev.cols() != features.cols()) {
            throw ConfigError("evaluation features must match the training feature shape");
        }
    }
    std::vector<Eigen::VectorXd> out(eval_features.size(), Eigen::VectorXd(features.rows()));
    for (int f = 0; f < plan.K; ++f) {
        const auto train = plan.rows_not_in(f);
        const auto test = plan.rows_in(f);
        if (train.size() < 10) {
            throw ConfigError("fold " + std::to_string(f) + " leaves only " + std::to_string(train.size()) +
                              " training rows (need 10)");
        }
        const Predictor p = fit_learner(with_seed(spec, "crossfit", static_cast<std::uint64_t>(f)),
                                        features(train, Eigen::all), target(train));
        for (std::size_t k = 0; k < eval_features.size(); ++k) {
            out[k](test) = p.predict(eval_features[k](test, Eigen::all));
        }
        if (summary != nullptr && f == 0) *summary = p.summary();
    }
    return out;
}

Eigen::VectorXd crossfit_predict(const Eigen::MatrixXd& features, const Eigen::VectorXd& target,
                                 const LearnerSpec& spec, const FoldPlan& plan, std::string* summary) {
    return crossfit_predict_at(features, target, spec, plan, {features}, summary)[0];
}

NuisanceFit nuisance_main(const Dataset& data, const Link& link, const LearnerSpec& spec_a,
                          const LearnerSpec& spec_y, const LearnerSpec& spec_mg, const FoldPlan& plan) {
    if (plan.n() != data.n()) throw ConfigError("fold plan length differs from dataset size");
    NuisanceFit fit;
    fit.fold_plan = plan;
    ClipCounter clips;
    std::string s_a, s_y, s_mg;

    fit.e_a1 = crossfit_predict(data.l(), data.a1(), with_seed(spec_a, "e_a", 0), plan, &s_a);
    if (data.a1_binary()) {
        for (Eigen::Index i = 0; i < fit.e_a1.size(); ++i) {
            fit.e_a1[i] = clip_prob(fit.e_a1[i], link.clip_eps(), &clips);
        }
    }

    const Eigen::MatrixXd x_al = prepend_column(data.a1(), data.l());
    const LearnerSpec sy = with_seed(spec_y, "mu", 0);
    if (data.a1_binary()) {
        Eigen::MatrixXd x0 = x_al, x1 = x_al;
        x0.col(0).setZero();
        x1.col(0).setOnes();
        auto preds = crossfit_predict_at(x_al, data.y(), sy, plan, {x_al, x0, x1}, &s_y);
        fit.mu = link.clip(preds[0], &clips);
        Eigen::MatrixXd at(data.n(), 2);
        at.col(0) = link.clip(preds[1], &clips);
        at.col(1) = link.clip(preds[2], &clips);
        fit.mu_at = at;
        fit.m_g = link.eval(Eigen::VectorXd(at.col(1))).cwiseProduct(fit.e_a1) +
                  link.eval(Eigen::VectorXd(at.col(0))).cwiseProduct(
                      (1.0 - fit.e_a1.array()).matrix());
        s_mg = "binary shortcut";
    } else {
        fit.mu = link.clip(crossfit_predict(x_al, data.y(), sy, plan, &s_y), &clips);
        fit.m_g = crossfit_predict(data.l(), link.eval(fit.mu), with_seed(spec_mg, "m_g", 0), plan, &s_mg);
    }
    fit.clip_count = clips.count;
    fit.learner_summaries = "e_a: " + s_a + "; mu: " + s_y + "; m_g: " + s_mg;
    return fit;
}

}  // namespace alglm
