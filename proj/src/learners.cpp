#include "alglm/learners.hpp"

#include <algorithm>
#include <cmath>

#include "alglm/dataset.hpp"
#include "alglm/errors.hpp"
#include "alglm/folds.hpp"
#include "alglm/link.hpp"
#include "alglm/rng.hpp"
#include "forest.hpp"

namespace alglm {

std::string to_string(LearnerKind kind) {
    switch (kind) {
        case LearnerKind::forest: return "forest";
        case LearnerKind::kernel: return "kernel";
        case LearnerKind::ridge_linear: return "ridge_linear";
        case LearnerKind::ridge_logistic: return "ridge_logistic";
    }
    return "unknown";
}

LearnerKind parse_learner_kind(std::string_view name) {
    if (name == "forest") return LearnerKind::forest;
    if (name == "kernel") return LearnerKind::kernel;
    if (name == "ridge_linear") return LearnerKind::ridge_linear;
    if (name == "ridge_logistic") return LearnerKind::ridge_logistic;
    throw ConfigError("unknown learner kind '" + std::string(name) + "'");
}

void LearnerSpec::validate() const {
    if (n_trees < 1) throw ConfigError("forest n_trees must be positive");
    if (min_leaf < 1) throw ConfigError("forest min_leaf must be positive");
    if (mtry < 0) throw ConfigError("forest mtry must be non-negative (0 selects the default)");
    if (!(bootstrap_fraction > 0.0 && bootstrap_fraction <= 1.0)) {
        throw ConfigError("forest bootstrap_fraction must lie in (0, 1]");
    }
    if (bandwidth && !(*bandwidth > 0.0)) throw ConfigError("kernel bandwidth must be positive");
    if (lambda && !(*lambda > 0.0)) throw ConfigError("ridge lambda must be positive");
    if (cv_folds < 2) throw ConfigError("cv_folds must be at least 2");
}

nlohmann::json to_json(const LearnerSpec& spec) {
    nlohmann::json j{{"kind", to_string(spec.kind)}, {"cv_folds", spec.cv_folds}, {"seed", spec.seed}};
    switch (spec.kind) {
        case LearnerKind::forest:
            j["n_trees"] = spec.n_trees;
            j["min_leaf"] = spec.min_leaf;
            j["mtry"] = spec.mtry;
            j["bootstrap_fraction"] = spec.bootstrap_fraction;
            break;
        case LearnerKind::kernel:
            j["bandwidth"] = spec.bandwidth ? nlohmann::json(*spec.bandwidth) : nlohmann::json("cv");
            break;
        case LearnerKind::ridge_linear:
        case LearnerKind::ridge_logistic:
            j["lambda"] = spec.lambda ? nlohmann::json(*spec.lambda) : nlohmann::json("cv");
            break;
    }
    return j;
}

namespace {
std::optional<double> number_or_cv(const nlohmann::json& j, const char* key) {
    if (!j.contains(key)) return std::nullopt;
    const auto& v = j.at(key);
    if (v.is_string()) {
        if (v.get<std::string>() == "cv") return std::nullopt;
        throw ConfigError(std::string("learner field '") + key + "' must be a number or \"cv\"");
    }
    return v.get<double>();
}
}  // namespace

LearnerSpec learner_spec_from_json(const nlohmann::json& j) {
    LearnerSpec spec;
    try {
        spec.kind = parse_learner_kind(j.at("kind").get<std::string>());
        spec.n_trees = j.value("n_trees", spec.n_trees);
        spec.min_leaf = j.value("min_leaf", spec.min_leaf);
        spec.mtry = j.value("mtry", spec.mtry);
        spec.bootstrap_fraction = j.value("bootstrap_fraction", spec.bootstrap_fraction);
        spec.bandwidth = number_or_cv(j, "bandwidth");
        spec.lambda = number_or_cv(j, "lambda");
        spec.cv_folds = j.value("cv_folds", spec.cv_folds);
        spec.seed = j.value("seed", spec.seed);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed learner spec: ") + e.what());
    }
    spec.validate();
    return spec;
}

LearnerSpec with_seed(const LearnerSpec& spec, std::string_view tag, std::uint64_t index) {
    LearnerSpec out = spec;
    out.seed = derive_seed(spec.seed, tag, index);
    return out;
}

Predictor::Predictor(std::shared_ptr<const detail::Model> model, std::size_t d_in, double t_min,
                     double t_max, std::optional<Eigen::VectorXd> oob)
    : model_(std::move(model)), d_in_(d_in), t_min_(t_min), t_max_(t_max), oob_(std::move(oob)) {}

Eigen::VectorXd Predictor::predict(const Eigen::MatrixXd& x) const {
    if (static_cast<std::size_t>(x.cols()) != d_in_) {
        throw ConfigError("predict: expected " + std::to_string(d_in_) + " feature columns, got " +
                          std::to_string(x.cols()));
    }
    return model_->predict(x);
}

std::size_t argmin_prefer_last(const Eigen::VectorXd& scores, double rel_tol) {
    std::size_t best = 0;
    for (Eigen::Index i = 1; i < scores.size(); ++i) {
        const double cur = scores[static_cast<Eigen::Index>(best)];
        if (scores[i] <= cur + rel_tol * std::abs(cur)) best = static_cast<std::size_t>(i);
    }
    return best;
}

Eigen::VectorXd ridge_lambda_grid() {
    // Ascending, so the last entry is the strongest penalty.
    return Eigen::VectorXd::LinSpaced(20, std::log(1e-4), std::log(1e2)).array().exp();
}

Eigen::VectorXd kernel_bandwidth_grid(std::size_t m, std::size_t d) {
    const double h0 = std::pow(static_cast<double>(m), -1.0 / (static_cast<double>(d) + 4.0));
    return Eigen::VectorXd::LinSpaced(20, std::log(h0 / 5.0), std::log(h0 * 5.0)).array().exp();
}

namespace detail {

class ConstantModel final : public Model {
public:
    explicit ConstantModel(double c) : c_(c) {}
    Eigen::VectorXd predict(const Eigen::MatrixXd& x) const override {
        return Eigen::VectorXd::Constant(x.rows(), c_);
    }
    std::string summary() const override { return "constant(" + std::to_string(c_) + ")"; }

private:
    double c_;
};

// Per-column centering and scaling; constant columns keep unit scale.
struct Standardizer {
    Eigen::RowVectorXd mean;
    Eigen::RowVectorXd scale;

    explicit Standardizer(const Eigen::MatrixXd& x) {
        mean = x.colwise().mean();
        scale.resize(x.cols());
        for (Eigen::Index j = 0; j < x.cols(); ++j) {
            const double var = (x.col(j).array() - mean[j]).square().mean();
            scale[j] = var > 1e-24 ? std::sqrt(var) : 1.0;
        }
    }
    Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const {
        return (x.rowwise() - mean).array().rowwise() / scale.array();
    }
};

class KernelModel final : public Model {
public:
    KernelModel(Standardizer st, Eigen::MatrixXd z, Eigen::VectorXd t, double h)
        : st_(std::move(st)), z_(std::move(z)), t_(std::move(t)), h_(h), t_lo_(t_.minCoeff()), t_hi_(t_.maxCoeff()) {}

    Eigen::VectorXd predict(const Eigen::MatrixXd& x) const override {
        return predict_standardized(st_.apply(x));
    }
    std::string summary() const override { return "kernel(h=" + std::to_string(h_) + ")"; }

    // Local-linear fit at each query point. Falls back to the local weighted
    // mean when the effective number of points is too small for a slope or
    // the weighted design is numerically singular.
    Eigen::VectorXd predict_standardized(const Eigen::MatrixXd& q) const {
        const Eigen::Index m = z_.rows();
        const Eigen::Index d = z_.cols();
        Eigen::VectorXd out(q.rows());
        Eigen::VectorXd logw(m);
        Eigen::MatrixXd design(m, d + 1);
        design.col(0).setOnes();
        const double c = -0.5 / (h_ * h_);
        for (Eigen::Index i = 0; i < q.rows(); ++i) {
            const Eigen::MatrixXd diff = z_.rowwise() - q.row(i);
            logw = c * diff.rowwise().squaredNorm();
            const double top = logw.maxCoeff();
            const Eigen::VectorXd w = (logw.array() - top).exp().matrix();
            const double sw = w.sum();
            const double local_mean = w.dot(t_) / sw;
            const double ess = sw * sw / w.squaredNorm();
            if (ess < static_cast<double>(d) + 2.0) {
                out[i] = local_mean;
                continue;
            }
            design.rightCols(d) = diff;
            const Eigen::MatrixXd wd = w.asDiagonal() * design;
            Eigen::MatrixXd gram = design.transpose() * wd;
            gram.diagonal().tail(d).array() += 1e-8 * sw;
            const Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
            if (ldlt.info() != Eigen::Success || ldlt.rcond() < 1e-12) {
                out[i] = local_mean;
                continue;
            }
            const double fit = ldlt.solve(wd.transpose() * t_)[0];
            out[i] = std::isfinite(fit) ? std::clamp(fit, t_lo_, t_hi_) : local_mean;
        }
        return out;
    }

private:
    Standardizer st_;
    Eigen::MatrixXd z_;
    Eigen::VectorXd t_;
    double h_;
    // Predictions stay within the range of the training targets.
    double t_lo_;
    double t_hi_;
};

class RidgeModel final : public Model {
public:
    RidgeModel(Standardizer st, double intercept, Eigen::VectorXd coef, bool logistic, double lambda)
        : st_(std::move(st)), intercept_(intercept), coef_(std::move(coef)), logistic_(logistic), lambda_(lambda) {}

    Eigen::VectorXd predict(const Eigen::MatrixXd& x) const override {
        Eigen::VectorXd eta = (st_.apply(x) * coef_).array() + intercept_;
        if (logistic_) {
            for (Eigen::Index i = 0; i < eta.size(); ++i) eta[i] = expit(eta[i]);
        }
        return eta;
    }
    std::string summary() const override {
        return std::string(logistic_ ? "ridge_logistic" : "ridge_linear") + "(lambda=" + std::to_string(lambda_) + ")";
    }

private:
    Standardizer st_;
    double intercept_;
    Eigen::VectorXd coef_;
    bool logistic_;
    double lambda_;
};

}  // namespace detail

namespace {

using detail::Standardizer;

// Minimizes (1/2m)|t - b0 - Zb|^2 + (lambda/2)|b|^2.
std::shared_ptr<detail::RidgeModel> fit_ridge_linear(const Eigen::MatrixXd& x, const Eigen::VectorXd& t,
                                                     double lambda) {
    Standardizer st(x);
    const Eigen::MatrixXd z = st.apply(x);
    const double m = static_cast<double>(x.rows());
    const double tbar = t.mean();
    Eigen::MatrixXd gram = z.transpose() * z / m;
    gram.diagonal().array() += lambda;
    const Eigen::VectorXd rhs = z.transpose() * (t.array() - tbar).matrix() / m;
    const Eigen::VectorXd coef = gram.ldlt().solve(rhs);
    return std::make_shared<detail::RidgeModel>(std::move(st), tbar, coef, false, lambda);
}

// Minimizes (1/m) * negative Bernoulli log-likelihood + (lambda/2)|b|^2 by
// Newton steps with step halving. Fractional targets in [0, 1] are allowed.
std::shared_ptr<detail::RidgeModel> fit_ridge_logistic(const Eigen::MatrixXd& x, const Eigen::VectorXd& t,
                                                       double lambda) {
    Standardizer st(x);
    const Eigen::MatrixXd z = prepend_column_ones(st.apply(x));
    const Eigen::Index q = z.cols();
    const double m = static_cast<double>(x.rows());
    auto objective = [&](const Eigen::VectorXd& b) {
        const Eigen::VectorXd eta = z * b;
        double nll = 0.0;
        for (Eigen::Index i = 0; i < eta.size(); ++i) {
            // log(1 + exp(eta)) - t * eta, computed stably
            const double e = eta[i];
            nll += (e > 0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e))) - t[i] * e;
        }
        return nll / m + 0.5 * lambda * b.tail(q - 1).squaredNorm();
    };
    Eigen::VectorXd b = Eigen::VectorXd::Zero(q);
    const double tbar = std::clamp(t.mean(), 1e-6, 1.0 - 1e-6);
    b[0] = logit(tbar);
    double obj = objective(b);
    for (int iter = 0; iter < 100; ++iter) {
        const Eigen::VectorXd eta = z * b;
        Eigen::VectorXd p(eta.size()), w(eta.size());
        for (Eigen::Index i = 0; i < eta.size(); ++i) {
            p[i] = expit(eta[i]);
            w[i] = std::max(p[i] * (1.0 - p[i]), 1e-12);
        }
        Eigen::VectorXd grad = -(z.transpose() * (t - p)) / m;
        grad.tail(q - 1) += lambda * b.tail(q - 1);
        Eigen::MatrixXd hess = z.transpose() * w.asDiagonal() * z / m;
        hess.diagonal().tail(q - 1).array() += lambda;
        const Eigen::VectorXd step = hess.ldlt().solve(grad);
        double scale = 1.0;
        Eigen::VectorXd cand = b - step;
        double cand_obj = objective(cand);
        while (cand_obj > obj && scale > 1e-8) {
            scale *= 0.5;
            cand = b - scale * step;
            cand_obj = objective(cand);
        }
        const double change = (cand - b).lpNorm<Eigen::Infinity>();
        if (cand_obj <= obj) {
            b = cand;
            obj = cand_obj;
        }
        if (change < 1e-10) break;
    }
    return std::make_shared<detail::RidgeModel>(std::move(st), b[0], b.tail(q - 1), true, lambda);
}

std::shared_ptr<detail::KernelModel> fit_kernel(const Eigen::MatrixXd& x, const Eigen::VectorXd& t, double h) {
    Standardizer st(x);
    Eigen::MatrixXd z = st.apply(x);
    return std::make_shared<detail::KernelModel>(std::move(st), std::move(z), t, h);
}

// Mean squared cross-validation error of each grid value.
template <typename Fit>
Eigen::VectorXd cv_scores(const LearnerSpec& spec, const Eigen::MatrixXd& x, const Eigen::VectorXd& t,
                          const Eigen::VectorXd& grid, Fit&& fit) {
    const auto m = static_cast<std::size_t>(x.rows());
    const int k = std::min<int>(spec.cv_folds, static_cast<int>(m / 2));
    const FoldPlan plan = make_folds(m, k, derive_seed(spec.seed, "cv", 0));
    Eigen::VectorXd sse = Eigen::VectorXd::Zero(grid.size());
    for (int f = 0; f < k; ++f) {
        const auto train = plan.rows_not_in(f);
        const auto test = plan.rows_in(f);
        const Eigen::MatrixXd xtr = x(train, Eigen::all);
        const Eigen::VectorXd ttr = t(train);
        const Eigen::MatrixXd xte = x(test, Eigen::all);
        const Eigen::VectorXd tte = t(test);
        for (Eigen::Index g = 0; g < grid.size(); ++g) {
            const Eigen::VectorXd pred = fit(xtr, ttr, grid[g])->predict(xte);
            sse[g] += (pred - tte).squaredNorm();
        }
    }
    return sse / static_cast<double>(m);
}

void check_inputs(const Eigen::MatrixXd& x, const Eigen::VectorXd& t) {
    if (x.rows() < 10) throw ConfigError("learners need at least 10 training rows, got " + std::to_string(x.rows()));
    if (x.cols() < 1) throw ConfigError("learners need at least one feature column");
    if (t.size() != x.rows()) throw ConfigError("target length differs from feature row count");
    if (!x.allFinite() || !t.allFinite()) throw ConfigError("learner inputs must be finite");
}

}  // namespace

Predictor fit_learner(const LearnerSpec& spec, const Eigen::MatrixXd& x, const Eigen::VectorXd& t) {
    spec.validate();
    check_inputs(x, t);
    const double tmin = t.minCoeff();
    const double tmax = t.maxCoeff();
    const auto d = static_cast<std::size_t>(x.cols());
    if (tmax - tmin <= 0.0) {
        return Predictor(std::make_shared<detail::ConstantModel>(tmin), d, tmin, tmax);
    }
    switch (spec.kind) {
        case LearnerKind::forest: {
            auto fit = detail::fit_forest(spec, x, t);
            return Predictor(fit.model, d, tmin, tmax, std::move(fit.oob));
        }
        case LearnerKind::kernel: {
            double h = 0.0;
            if (spec.bandwidth) {
                h = *spec.bandwidth;
            } else {
                const Eigen::VectorXd grid = kernel_bandwidth_grid(static_cast<std::size_t>(x.rows()), d);
                h = grid[static_cast<Eigen::Index>(argmin_prefer_last(cv_scores(spec, x, t, grid, fit_kernel)))];
            }
            return Predictor(fit_kernel(x, t, h), d, tmin, tmax);
        }
        case LearnerKind::ridge_linear:
        case LearnerKind::ridge_logistic: {
            const bool logistic = spec.kind == LearnerKind::ridge_logistic;
            if (logistic && (tmin < 0.0 || tmax > 1.0)) {
                throw ConfigError("ridge_logistic needs targets in [0, 1]");
            }
            auto fit = [logistic](const Eigen::MatrixXd& xx, const Eigen::VectorXd& tt, double lam)
                -> std::shared_ptr<detail::RidgeModel> {
                return logistic ? fit_ridge_logistic(xx, tt, lam) : fit_ridge_linear(xx, tt, lam);
            };
            double lam = 0.0;
            if (spec.lambda) {
                lam = *spec.lambda;
            } else {
                const Eigen::VectorXd grid = ridge_lambda_grid();
                lam = grid[static_cast<Eigen::Index>(argmin_prefer_last(cv_scores(spec, x, t, grid, fit)))];
            }
            return Predictor(fit(x, t, lam), d, tmin, tmax);
        }
    }
    throw ConfigError("unhandled learner kind");
}

Eigen::VectorXd fit_predict_held_out(const LearnerSpec& spec, const Eigen::MatrixXd& x, const Eigen::VectorXd& t) {
    check_inputs(x, t);
    if (spec.kind == LearnerKind::forest && spec.bootstrap_fraction < 1.0) {
        const Predictor p = fit_learner(spec, x, t);
        if (p.oob_predictions()) return *p.oob_predictions();
        return p.predict(x);
    }
    const auto m = static_cast<std::size_t>(x.rows());
    const int k = std::min<int>(spec.cv_folds, static_cast<int>(m / 10));
    if (k < 2) throw ConfigError("too few rows for held-out predictions");
    const FoldPlan plan = make_folds(m, k, derive_seed(spec.seed, "held_out", 0));
    Eigen::VectorXd out(x.rows());
    for (int f = 0; f < k; ++f) {
        const auto train = plan.rows_not_in(f);
        const auto test = plan.rows_in(f);
        const Predictor p = fit_learner(with_seed(spec, "held_out_fold", static_cast<std::uint64_t>(f)),
                                        x(train, Eigen::all), t(train));
        out(test) = p.predict(x(test, Eigen::all));
    }
    return out;
}

}  // namespace alglm
