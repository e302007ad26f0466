#include "alglm/comparators.hpp"

#include <cmath>
#include <cstdint>
#include <vector>

#include <boost/math/tools/toms748_solve.hpp>

#include "alglm/errors.hpp"

namespace alglm {

namespace {

double variance_function(LinkKind kind, double mu) {
    switch (kind) {
        case LinkKind::identity: return 1.0;
        case LinkKind::logit: return mu * (1.0 - mu);
        case LinkKind::log: return mu;
    }
    return 1.0;
}

double unit_deviance(LinkKind kind, double y, double mu) {
    switch (kind) {
        case LinkKind::identity: return (y - mu) * (y - mu);
        case LinkKind::logit: {
            double d = 0.0;
            if (y > 0.0) d += y * std::log(y / mu);
            if (y < 1.0) d += (1.0 - y) * std::log((1.0 - y) / (1.0 - mu));
            return 2.0 * d;
        }
        case LinkKind::log: {
            const double d = (y > 0.0 ? y * std::log(y / mu) : 0.0) - (y - mu);
            return 2.0 * d;
        }
    }
    return 0.0;
}

double total_deviance(LinkKind kind, const Eigen::VectorXd& y, const Eigen::VectorXd& mu) {
    double d = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) d += unit_deviance(kind, y[i], mu[i]);
    return d;
}

Eigen::VectorXd mean_from_eta(const Link& link, const Eigen::VectorXd& eta) {
    Eigen::VectorXd mu(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) mu[i] = link.inverse(eta[i]);
    return mu;
}

void check_separation(const Link& link, const Eigen::VectorXd& eta) {
    if (link.kind() == LinkKind::logit && eta.cwiseAbs().maxCoeff() > 30.0) {
        throw EstimationError("logistic fit diverges: |linear predictor| exceeds 30, indicating (quasi-)separation");
    }
    if (link.kind() == LinkKind::log && eta.maxCoeff() > 700.0) {
        throw EstimationError("log-linear fit diverges: linear predictor exceeds 700");
    }
}

Eigen::VectorXd weighted_solve(const Eigen::MatrixXd& x, const Eigen::VectorXd& w, const Eigen::VectorXd& z) {
    const Eigen::VectorXd sw = w.cwiseSqrt();
    const Eigen::MatrixXd xw = sw.asDiagonal() * x;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(xw);
    qr.setThreshold(1e-10);
    if (qr.rank() < x.cols()) {
        throw EstimationError("singular information matrix: design is rank deficient (rank " +
                              std::to_string(qr.rank()) + " of " + std::to_string(x.cols()) + ")");
    }
    return qr.solve(sw.cwiseProduct(z));
}

}  // namespace

GlmFit fit_glm(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Link& link) {
    if (x.rows() != y.size()) throw ConfigError("design and outcome lengths differ");
    if (x.rows() <= x.cols()) throw ConfigError("GLM needs more rows than coefficients");
    const LinkKind kind = link.kind();
    if (kind == LinkKind::logit && (y.minCoeff() < 0.0 || y.maxCoeff() > 1.0)) {
        throw ConfigError("logistic GLM needs outcomes in [0, 1]");
    }
    if (kind == LinkKind::log && y.minCoeff() < 0.0) throw ConfigError("log-linear GLM needs non-negative outcomes");

    GlmFit fit;
    const auto n = x.rows();
    const auto p = x.cols();
    if (kind == LinkKind::identity) {
        fit.coefficients = weighted_solve(x, Eigen::VectorXd::Ones(n), y);
        fit.fitted = x * fit.coefficients;
        fit.deviance = (y - fit.fitted).squaredNorm();
        fit.converged = true;
        fit.iterations = 1;
    } else {
        Eigen::VectorXd mu = y;
        mu.array() = kind == LinkKind::logit ? ((y.array() + 0.5) / 2.0).eval() : (y.array() + 0.1).eval();
        Eigen::VectorXd eta = link.eval(mu);
        Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
        double dev = total_deviance(kind, y, mu);
        bool have_beta = false;
        int extra_steps = 0;
        for (int iter = 1; iter <= 100; ++iter) {
            Eigen::VectorXd w(n), z(n);
            for (Eigen::Index i = 0; i < n; ++i) {
                // Canonical link: d mu / d eta equals the variance function.
                w[i] = std::max(variance_function(kind, mu[i]), 1e-300);
                z[i] = eta[i] + (y[i] - mu[i]) / w[i];
            }
            Eigen::VectorXd cand = weighted_solve(x, w, z);
            Eigen::VectorXd cand_eta = x * cand;
            check_separation(link, cand_eta);
            Eigen::VectorXd cand_mu = mean_from_eta(link, cand_eta);
            double cand_dev = total_deviance(kind, y, cand_mu);
            if (have_beta) {
                int halvings = 0;
                while (!(cand_dev <= dev * (1.0 + 1e-12) + 1e-300) && halvings < 30) {
                    cand = 0.5 * (cand + beta);
                    cand_eta = x * cand;
                    cand_mu = mean_from_eta(link, cand_eta);
                    cand_dev = total_deviance(kind, y, cand_mu);
                    ++halvings;
                }
            }
            const double rel_change = std::abs(cand_dev - dev) / (std::abs(cand_dev) + 0.1);
            beta = cand;
            eta = cand_eta;
            mu = cand_mu;
            dev = cand_dev;
            fit.iterations = iter;
            if (have_beta && rel_change < 1e-10) {
                // One more Newton step drives the score to rounding level.
                if (++extra_steps > 1) {
                    fit.converged = true;
                    break;
                }
            }
            have_beta = true;
        }
        fit.coefficients = beta;
        fit.fitted = mu;
        fit.deviance = dev;
    }

    Eigen::VectorXd w(n);
    for (Eigen::Index i = 0; i < n; ++i) w[i] = variance_function(kind, fit.fitted[i]);
    if (kind == LinkKind::identity) {
        fit.dispersion = fit.deviance / static_cast<double>(n - p);
    }
    const Eigen::MatrixXd info = x.transpose() * w.asDiagonal() * x / fit.dispersion;
    fit.inverse_information = info.ldlt().solve(Eigen::MatrixXd::Identity(p, p));
    fit.model_se = fit.inverse_information.diagonal().cwiseMax(0.0).cwiseSqrt();
    return fit;
}

GlmFit fit_glm_mle(const Dataset& data, const Link& link, bool include_intercept) {
    const Eigen::MatrixXd x = prepend_column(data.a1(), data.l());
    return fit_glm(include_intercept ? prepend_column_ones(x) : x, data.y(), link);
}

EstimateReport glm_coefficient_report(const GlmFit& fit, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                      Eigen::Index column) {
    const auto n = static_cast<double>(x.rows());
    // Row i's score is x_i (y_i - mu_i) / dispersion for canonical links.
    const Eigen::VectorXd resid = (y - fit.fitted) / fit.dispersion;
    const Eigen::RowVectorXd row = fit.inverse_information.row(column);
    Eigen::VectorXd infl = n * (x * row.transpose()).cwiseProduct(resid);
    EstimateReport r = make_report(fit.coefficients[column], std::move(infl));
    r.se = fit.model_se[column];
    r.ci_lower = r.beta_hat - kZ975 * r.se;
    r.ci_upper = r.beta_hat + kZ975 * r.se;
    r.diagnostics.extra["se_type"] = "model";
    r.diagnostics.extra["iterations"] = fit.iterations;
    r.diagnostics.extra["converged"] = fit.converged;
    return r;
}

EstimateReport mle_report(const Dataset& data, const Link& link) {
    const Eigen::MatrixXd x = prepend_column_ones(prepend_column(data.a1(), data.l()));
    const GlmFit fit = fit_glm(x, data.y(), link);
    return glm_coefficient_report(fit, x, data.y(), 1);
}

EstimateReport ols_interaction_report(const Dataset& data) {
    if (!data.has_a2()) throw ConfigError("interaction OLS needs a second exposure");
    Eigen::MatrixXd x(data.n(), data.d() + 4);
    x.col(0).setOnes();
    x.col(1) = data.a1();
    x.col(2) = data.a2();
    x.middleCols(3, data.l().cols()) = data.l();
    x.col(x.cols() - 1) = data.a1().cwiseProduct(data.a2());
    const GlmFit fit = fit_glm(x, data.y(), Link(LinkKind::identity));
    return glm_coefficient_report(fit, x, data.y(), x.cols() - 1);
}

EstimateReport e_estimator(const Dataset& data, const Eigen::VectorXd& e_a, const Eigen::VectorXd& omega0) {
    const Eigen::VectorXd& a = data.a1();
    const Eigen::VectorXd& y = data.y();
    if (e_a.size() != a.size() || omega0.size() != a.size()) {
        throw ConfigError("nuisance vectors must have the dataset's length");
    }
    if (a.maxCoeff() == a.minCoeff()) throw EstimationError("no exposure variation");
    const Eigen::ArrayXd r = (a - e_a).array();
    const double den = (r * a.array()).mean();
    const double scale = (r * a.array()).abs().mean();
    if (!(std::abs(den) > 1e-12 * scale)) throw EstimationError("E-estimator denominator is numerically zero");
    const double beta = (r * (y - omega0).array()).sum() / (r * a.array()).sum();
    Eigen::VectorXd infl = (r * (y.array() - beta * a.array() - omega0.array()) / den).matrix();
    Diagnostics diag;
    diag.denominator = den;
    return make_report(beta, std::move(infl), std::move(diag));
}

namespace {

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& x, const std::vector<std::size_t>& rows) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), x.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(rows[i]));
    return out;
}

Eigen::VectorXd take_rows(const Eigen::VectorXd& v, const std::vector<std::size_t>& rows) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[static_cast<Eigen::Index>(rows[i])];
    return out;
}

}  // namespace

Eigen::VectorXd partially_linear_omega0(const Dataset& data, const LearnerSpec& spec, const FoldPlan& plan) {
    if (plan.n() != data.n()) throw ConfigError("fold plan does not match the dataset size");
    constexpr int kMaxSweeps = 50;
    Eigen::VectorXd omega0(static_cast<Eigen::Index>(data.n()));
    for (int f = 0; f < plan.K; ++f) {
        const auto train = plan.rows_not_in(f);
        const auto held = plan.rows_in(f);
        const Eigen::MatrixXd l = take_rows(data.l(), train);
        const Eigen::VectorXd a = take_rows(data.a1(), train);
        const Eigen::VectorXd y = take_rows(data.y(), train);
        const Eigen::VectorXd ac = (a.array() - a.mean()).matrix();
        const double saa = ac.squaredNorm();
        if (!(saa > 0.0)) throw EstimationError("no exposure variation in a training fold");
        const LearnerSpec fold_spec = with_seed(spec, "omega0", static_cast<std::uint64_t>(f));
        double beta = 0.0;
        for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
            const Eigen::VectorXd s = fit_learner(fold_spec, l, y - beta * a).predict(l);
            const double next = ac.dot(y - s) / saa;
            const bool done = std::abs(next - beta) <= 1e-8 * (1.0 + std::abs(beta));
            beta = next;
            if (done) break;
        }
        const Eigen::VectorXd pred = fit_learner(fold_spec, l, y - beta * a).predict(take_rows(data.l(), held));
        for (std::size_t i = 0; i < held.size(); ++i) omega0[static_cast<Eigen::Index>(held[i])] = pred[static_cast<Eigen::Index>(i)];
    }
    return omega0;
}

double solve_monotone(const std::function<double(double)>& f, double bracket, double widened) {
    for (double b : {bracket, widened}) {
        const double flo = f(-b);
        const double fhi = f(b);
        if (flo == 0.0) return -b;
        if (fhi == 0.0) return b;
        if ((flo < 0.0) == (fhi < 0.0)) continue;
        std::uintmax_t max_iter = 300;
        const auto [lo, hi] = boost::math::tools::toms748_solve(
            f, -b, b, flo, fhi, boost::math::tools::eps_tolerance<double>(), max_iter);
        // Pick the end of the final bracket with the smaller residual.
        return std::abs(f(lo)) <= std::abs(f(hi)) ? lo : hi;
    }
    throw EstimationError("estimating equation has no sign change on [-" + std::to_string(widened) + ", " +
                          std::to_string(widened) + "]");
}

namespace {

double central_slope(const std::function<double(double)>& f, double x) {
    const double h = 1e-5 * std::max(1.0, std::abs(x));
    return (f(x + h) - f(x - h)) / (2.0 * h);
}

void require_binary_pair(const Dataset& data) {
    if (!data.a1_binary() || !is_binary(data.y())) {
        throw ConfigError("this estimator needs binary exposure and binary outcome");
    }
}

}  // namespace

EstimateReport es_estimator(const Dataset& data, const Eigen::MatrixXd& mu_at, const Eigen::VectorXd& e_a,
                            double clip_eps) {
    require_binary_pair(data);
    const auto n = static_cast<Eigen::Index>(data.n());
    if (mu_at.rows() != n || mu_at.cols() != 2 || e_a.size() != n) {
        throw ConfigError("ES nuisances must be n x 2 counterfactual means and an n-vector propensity");
    }
    const Eigen::VectorXd& a = data.a1();
    const Eigen::VectorXd& y = data.y();
    Eigen::VectorXd c(n), offset(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double m0 = clip_prob(mu_at(i, 0), clip_eps);
        const double m1 = clip_prob(mu_at(i, 1), clip_eps);
        const double e = clip_prob(e_a[i], clip_eps);
        const double v0 = m0 * (1.0 - m0);
        const double v1 = m1 * (1.0 - m1);
        c[i] = e * v1 / (e * v1 + (1.0 - e) * v0);
        offset[i] = logit(m0);
    }
    auto contributions = [&](double beta) {
        Eigen::VectorXd u(n);
        for (Eigen::Index i = 0; i < n; ++i) u[i] = (a[i] - c[i]) * (y[i] - expit(beta * a[i] + offset[i]));
        return u;
    };
    const std::function<double(double)> total = [&](double beta) { return contributions(beta).sum(); };
    const double beta = solve_monotone(total);
    const double slope = central_slope(total, beta) / static_cast<double>(n);
    if (!(std::abs(slope) > 0.0)) throw EstimationError("ES estimating equation has zero slope at the root");
    Eigen::VectorXd infl = contributions(beta) / (-slope);
    Diagnostics diag;
    diag.denominator = -slope;
    diag.extra["equation_residual"] = total(beta);
    return make_report(beta, std::move(infl), std::move(diag));
}

EstimateReport dr_estimator(const Dataset& data, const Eigen::VectorXd& e_a_given_y0, const Eigen::VectorXd& mu0) {
    require_binary_pair(data);
    const auto n = static_cast<Eigen::Index>(data.n());
    if (e_a_given_y0.size() != n || mu0.size() != n) throw ConfigError("DR nuisances must be n-vectors");
    const Eigen::ArrayXd base = ((data.a1() - e_a_given_y0).array() * (data.y() - mu0).array());
    const Eigen::ArrayXd ay = data.a1().array() * data.y().array();
    auto contributions = [&](double beta) { return (base * (-beta * ay).exp()).matrix().eval(); };
    const std::function<double(double)> total = [&](double beta) { return contributions(beta).sum(); };
    const double beta = solve_monotone(total);
    const double slope = central_slope(total, beta) / static_cast<double>(n);
    if (!(std::abs(slope) > 0.0)) throw EstimationError("DR estimating equation has zero slope at the root");
    Eigen::VectorXd infl = contributions(beta) / (-slope);
    Diagnostics diag;
    diag.denominator = -slope;
    diag.extra["equation_residual"] = total(beta);
    return make_report(beta, std::move(infl), std::move(diag));
}

}  // namespace alglm
