#include "alglm/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <thread>

#include "alglm/comparators.hpp"
#include "alglm/crossfit.hpp"
#include "alglm/errors.hpp"
#include "alglm/main_effect.hpp"
#include "alglm/rng.hpp"

namespace alglm {

std::string to_string(DgpFamily family) {
    switch (family) {
        case DgpFamily::illustration: return "illustration";
        case DgpFamily::main_exp1: return "main_exp1";
        case DgpFamily::main_exp2: return "main_exp2";
        case DgpFamily::main_exp3: return "main_exp3";
        case DgpFamily::main_exp4: return "main_exp4";
        case DgpFamily::inter_exp1: return "inter_exp1";
        case DgpFamily::inter_exp2: return "inter_exp2";
        case DgpFamily::inter_exp3: return "inter_exp3";
        case DgpFamily::custom_discrete: return "custom_discrete";
    }
    return "unknown";
}

DgpFamily parse_dgp_family(const std::string& name) {
    for (auto f : {DgpFamily::illustration, DgpFamily::main_exp1, DgpFamily::main_exp2, DgpFamily::main_exp3,
                   DgpFamily::main_exp4, DgpFamily::inter_exp1, DgpFamily::inter_exp2, DgpFamily::inter_exp3,
                   DgpFamily::custom_discrete}) {
        if (to_string(f) == name) return f;
    }
    throw ConfigError("unknown DGP family '" + name + "'");
}

bool is_main_family(DgpFamily f) {
    return f == DgpFamily::main_exp1 || f == DgpFamily::main_exp2 || f == DgpFamily::main_exp3 ||
           f == DgpFamily::main_exp4;
}

bool is_interaction_family(DgpFamily f) {
    return f == DgpFamily::inter_exp1 || f == DgpFamily::inter_exp2 || f == DgpFamily::inter_exp3;
}

int experiment_id(DgpFamily f) {
    switch (f) {
        case DgpFamily::main_exp1:
        case DgpFamily::inter_exp1: return 1;
        case DgpFamily::main_exp2:
        case DgpFamily::inter_exp2: return 2;
        case DgpFamily::main_exp3:
        case DgpFamily::inter_exp3: return 3;
        case DgpFamily::main_exp4: return 4;
        default: return 0;
    }
}

void DiscreteDgp::validate() const {
    if (points.empty()) throw ConfigError("discrete DGP has no support points");
    double total = 0.0;
    for (const auto& p : points) {
        if (!(p.prob > 0.0 && p.prob < 1.0 + 1e-15)) throw ConfigError("discrete DGP probabilities must lie in (0, 1]");
        total += p.prob;
    }
    if (std::abs(total - 1.0) > 1e-12) throw ConfigError("discrete DGP probabilities must sum to 1");
    if (noise == NoiseLaw::bernoulli) {
        for (const auto& p : points) {
            if (!(p.mean_y > 0.0 && p.mean_y < 1.0)) throw ConfigError("Bernoulli outcome means must lie in (0, 1)");
        }
    }
}

Eigen::MatrixXd make_sigma(std::uint64_t sigma_seed, int d, double max_corr) {
    if (d < 2) throw ConfigError("covariance dimension must be at least 2");
    RngStream rng(sigma_seed, "sigma");
    Eigen::MatrixXd g(d, d);
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) g(i, j) = rng.normal();
    }
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ();
    const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (int j = 0; j < d; ++j) {
        if (r(j, j) < 0.0) q.col(j) *= -1.0;
    }
    Eigen::VectorXd eig(d);
    for (int j = 0; j < d; ++j) eig[j] = rng.uniform(0.1, 2.0);
    const Eigen::MatrixXd s0 = q * eig.asDiagonal() * q.transpose();
    const Eigen::VectorXd inv_sd = s0.diagonal().cwiseSqrt().cwiseInverse();
    Eigen::MatrixXd r0 = inv_sd.asDiagonal() * s0 * inv_sd.asDiagonal();
    double max_off = 0.0;
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) {
            if (i != j) max_off = std::max(max_off, std::abs(r0(i, j)));
        }
    }
    const double shrink = max_off > max_corr ? max_corr / max_off : 1.0;
    Eigen::MatrixXd corr = shrink * r0;
    corr.diagonal().setOnes();
    Eigen::VectorXd sd(d);
    for (int j = 0; j < d; ++j) sd[j] = std::sqrt(rng.uniform(2.0, 10.0));
    return sd.asDiagonal() * corr * sd.asDiagonal();
}

namespace {

// Rows of L ~ N(0, sigma), one row at a time from the stream.
Eigen::MatrixXd draw_gaussian_rows(std::size_t n, const Eigen::MatrixXd& chol, RngStream& rng,
                                   std::vector<Eigen::VectorXd>* per_row_uniforms, int uniforms_per_row) {
    const auto d = chol.rows();
    Eigen::MatrixXd l(static_cast<Eigen::Index>(n), d);
    Eigen::VectorXd z(d);
    if (per_row_uniforms) per_row_uniforms->assign(static_cast<std::size_t>(uniforms_per_row), Eigen::VectorXd(n));
    for (std::size_t i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) z[j] = rng.normal();
        l.row(static_cast<Eigen::Index>(i)) = (chol * z).transpose();
        for (int u = 0; u < uniforms_per_row; ++u) {
            (*per_row_uniforms)[static_cast<std::size_t>(u)][static_cast<Eigen::Index>(i)] = rng.uniform();
        }
    }
    return l;
}

Eigen::MatrixXd sigma_cholesky(std::uint64_t sigma_seed) {
    Eigen::LLT<Eigen::MatrixXd> llt(make_sigma(sigma_seed));
    if (llt.info() != Eigen::Success) throw ConfigError("random covariance is not positive definite");
    return llt.matrixL();
}

// Uniform draws taken per row after the covariates: one for the exposure and
// one for a binary outcome.
constexpr int kUniformsPerRow = 2;

}  // namespace

Eigen::VectorXd main_propensity(const Eigen::MatrixXd& l, bool literal_exposure_link, std::size_t* clip_count) {
    Eigen::VectorXd pi(l.rows());
    for (Eigen::Index i = 0; i < l.rows(); ++i) {
        const double eta = l.row(i).sum() / 40.0 - 0.15 * l(i, 0) * l(i, 0);
        if (literal_exposure_link) {
            ClipCounter c;
            pi[i] = clip_prob(eta, 1e-6, &c);
            if (clip_count) *clip_count += c.count;
        } else {
            pi[i] = expit(eta);
        }
    }
    return pi;
}

Eigen::VectorXd main_outcome_eta(int exp_id, const Eigen::MatrixXd& l, const Eigen::VectorXd& a) {
    Eigen::VectorXd eta(l.rows());
    for (Eigen::Index i = 0; i < l.rows(); ++i) {
        const double dl = l.row(i).head(5).sum() / 50.0;
        const double l1 = l(i, 0), l2 = l(i, 1), l3 = l(i, 2), l6 = l(i, 5);
        const double ai = a[i];
        switch (exp_id) {
            case 1: eta[i] = 0.3 * ai + dl; break;
            case 2: eta[i] = 0.3 * ai + dl + 0.1 * l1 * l1; break;
            case 3: eta[i] = 1.5 * l1 * (ai - 1.0) + dl; break;
            case 4:
                eta[i] = 0.1 / (1.0 + std::exp(0.25 * l3 - 0.25 * l2)) + 0.3 * ai / (1.0 + std::exp(-0.25 * l2)) +
                         0.5 * ai * l6 + 0.1 * l1 * l1;
                break;
            default: throw ConfigError("main experiment id must be 1..4");
        }
    }
    return eta;
}

MainTruth main_truth(int exp_id, const Eigen::MatrixXd& l, bool literal_exposure_link) {
    MainTruth t;
    t.pi = main_propensity(l, literal_exposure_link);
    const Eigen::VectorXd zeros = Eigen::VectorXd::Zero(l.rows());
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(l.rows());
    t.mu0 = main_outcome_eta(exp_id, l, zeros).unaryExpr([](double e) { return expit(e); });
    t.mu1 = main_outcome_eta(exp_id, l, ones).unaryExpr([](double e) { return expit(e); });
    return t;
}

Dataset dgp_illustration(std::size_t n, std::uint64_t seed, bool code_variant, std::uint64_t replicate) {
    if (n < 20) throw ConfigError("illustration DGP needs n >= 20");
    RngStream rng(seed, "dgp_illustration", replicate);
    const double mean_l = code_variant ? 1.0 : 0.0;
    Eigen::VectorXd y(static_cast<Eigen::Index>(n)), a(static_cast<Eigen::Index>(n));
    Eigen::MatrixXd l(static_cast<Eigen::Index>(n), 1);
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(n); ++i) {
        const double li = rng.normal(mean_l, 1.0);
        const double ai = rng.bernoulli(expit(li - li * li)) ? 1.0 : 0.0;
        const double m = ai - li + 4.5 * ai * li + 0.5 * li * li - 2.25 * ai * li * li;
        l(i, 0) = li;
        a[i] = ai;
        y[i] = rng.normal(m, 1.0);
    }
    Dataset data(std::move(y), std::move(a), std::nullopt, std::move(l), {"l"});
    data.a1_name = "a";
    return data;
}

Dataset dgp_main(int exp_id, std::size_t n, std::uint64_t seed, std::uint64_t sigma_seed, bool literal_exposure_link,
                 std::uint64_t replicate, std::size_t* clip_count) {
    if (exp_id < 1 || exp_id > 4) throw ConfigError("main experiment id must be 1..4");
    RngStream rng(seed, "dgp_main", replicate);
    std::vector<Eigen::VectorXd> u;
    Eigen::MatrixXd l = draw_gaussian_rows(n, sigma_cholesky(sigma_seed), rng, &u, kUniformsPerRow);
    const Eigen::VectorXd pi = main_propensity(l, literal_exposure_link, clip_count);
    Eigen::VectorXd a = (u[0].array() < pi.array()).cast<double>();
    const Eigen::VectorXd mu = main_outcome_eta(exp_id, l, a).unaryExpr([](double e) { return expit(e); });
    Eigen::VectorXd y = (u[1].array() < mu.array()).cast<double>();
    std::vector<std::string> names;
    for (int j = 1; j <= 10; ++j) names.push_back("l" + std::to_string(j));
    Dataset data(std::move(y), std::move(a), std::nullopt, std::move(l), names);
    data.a1_name = "a";
    return data;
}

Dataset dgp_interaction(int exp_id, std::size_t n, std::uint64_t seed, std::uint64_t sigma_seed,
                        bool literal_exposure_link, std::uint64_t replicate) {
    if (exp_id < 1 || exp_id > 3) throw ConfigError("interaction experiment id must be 1..3");
    RngStream rng(seed, "dgp_interaction", replicate);
    std::vector<Eigen::VectorXd> u;
    const Eigen::MatrixXd l = draw_gaussian_rows(n, sigma_cholesky(sigma_seed), rng, &u, kUniformsPerRow);
    RngStream noise(seed, "dgp_interaction_noise", replicate);
    const auto rows = static_cast<Eigen::Index>(n);
    Eigen::VectorXd a(rows), y(rows);
    if (exp_id == 3) {
        const double scale = 1.0 / std::sqrt(40.0);
        for (Eigen::Index i = 0; i < rows; ++i) {
            const double lin = l.row(i).sum() * scale;
            a[i] = lin + noise.normal();
            y[i] = lin + 5.0 * a[i] * l(i, 2) + noise.normal();
        }
    } else {
        const Eigen::VectorXd pi = main_propensity(l, literal_exposure_link);
        for (Eigen::Index i = 0; i < rows; ++i) {
            a[i] = u[0][i] < pi[i] ? 1.0 : 0.0;
            const double l1 = l(i, 0), l2 = l(i, 1), l3 = l(i, 2), l6 = l(i, 5);
            double m = 3.0 / (1.0 + std::exp(l3 - l2)) + a[i] / (1.0 + std::exp(l1 - l2));
            if (exp_id == 2) m += 5.0 * a[i] * l6;
            y[i] = m + noise.normal();
        }
    }
    Eigen::MatrixXd rest(rows, 9);
    std::vector<std::string> names;
    for (int j = 0, k = 0; j < 10; ++j) {
        if (j == 2) continue;
        rest.col(k++) = l.col(j);
        names.push_back("l" + std::to_string(j + 1));
    }
    Dataset data(std::move(y), std::move(a), Eigen::VectorXd(l.col(2)), std::move(rest), names);
    data.a1_name = "a";
    data.a2_name = "l3";
    return data;
}

Dataset dgp_discrete(const DiscreteDgp& dgp, std::size_t n, std::uint64_t seed, std::uint64_t replicate) {
    dgp.validate();
    RngStream rng(seed, "dgp_discrete", replicate);
    std::vector<double> cum;
    double c = 0.0;
    for (const auto& p : dgp.points) cum.push_back(c += p.prob);
    const auto rows = static_cast<Eigen::Index>(n);
    Eigen::VectorXd y(rows), a1(rows), a2(rows);
    Eigen::MatrixXd l(rows, 1);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const double u = rng.uniform() * c;
        const auto k = static_cast<std::size_t>(std::min<std::ptrdiff_t>(
            std::upper_bound(cum.begin(), cum.end(), u) - cum.begin(), static_cast<std::ptrdiff_t>(cum.size()) - 1));
        const auto& p = dgp.points[k];
        a1[i] = p.a1;
        a2[i] = p.a2;
        l(i, 0) = p.l;
        y[i] = dgp.noise == NoiseLaw::bernoulli ? (rng.bernoulli(p.mean_y) ? 1.0 : 0.0)
                                                : rng.normal(p.mean_y, dgp.noise_sd);
    }
    return Dataset(std::move(y), std::move(a1), dgp.has_a2 ? std::optional<Eigen::VectorXd>(a2) : std::nullopt,
                   std::move(l), {"l"});
}

Dataset generate(const DgpSpec& spec, std::uint64_t replicate) {
    switch (spec.family) {
        case DgpFamily::illustration:
            return dgp_illustration(spec.n, spec.seed, spec.illustration_code_variant, replicate);
        case DgpFamily::main_exp1:
        case DgpFamily::main_exp2:
        case DgpFamily::main_exp3:
        case DgpFamily::main_exp4:
            return dgp_main(experiment_id(spec.family), spec.n, spec.seed, spec.sigma_seed,
                            spec.literal_exposure_link, replicate);
        case DgpFamily::inter_exp1:
        case DgpFamily::inter_exp2:
        case DgpFamily::inter_exp3:
            return dgp_interaction(experiment_id(spec.family), spec.n, spec.seed, spec.sigma_seed,
                                   spec.literal_exposure_link, replicate);
        case DgpFamily::custom_discrete: return dgp_discrete(spec.discrete, spec.n, spec.seed, replicate);
    }
    throw ConfigError("unhandled DGP family");
}

double illustration_truth(bool code_variant) {
    // Composite Simpson rule over mean +/- 12 standard deviations.
    const double m = code_variant ? 1.0 : 0.0;
    const int steps = 20000;
    const double lo = m - 12.0, hi = m + 12.0, h = (hi - lo) / steps;
    double num = 0.0, den = 0.0;
    for (int k = 0; k <= steps; ++k) {
        const double l = lo + h * k;
        const double wk = (k == 0 || k == steps) ? 1.0 : (k % 2 == 1 ? 4.0 : 2.0);
        const double dens = std::exp(-0.5 * (l - m) * (l - m));
        const double p = expit(l - l * l);
        const double w = p * (1.0 - p) * dens * wk;
        num += w * (1.0 + 4.5 * l - 2.25 * l * l);
        den += w;
    }
    return num / den;
}

namespace {

Eigen::VectorXd dr_propensity_given_y0(const MainTruth& t) {
    // Bayes: P(A = 1 | Y = 0, L) from P(A = 1 | L) and P(Y = 0 | A, L).
    const Eigen::ArrayXd num = t.pi.array() * (1.0 - t.mu1.array());
    return (num / (num + (1.0 - t.pi.array()) * (1.0 - t.mu0.array()))).matrix();
}

EstimateReport oracle_estimate(const std::string& id, int exp_id, const Dataset& data, bool literal) {
    const Link logit_link(LinkKind::logit);
    if (id == "mle") return mle_report(data, logit_link);
    const MainTruth t = main_truth(exp_id, data.l(), literal);
    if (id == "es") {
        Eigen::MatrixXd at(data.n(), 2);
        at << t.mu0, t.mu1;
        return es_estimator(data, at, t.pi);
    }
    if (id == "dr") return dr_estimator(data, dr_propensity_given_y0(t), t.mu0);
    if (id == "proposal") {
        NuisanceFit nf;
        nf.e_a1 = t.pi;
        nf.mu = (data.a1().array() > 0.5).select(t.mu1, t.mu0);
        nf.mu = logit_link.clip(nf.mu);
        Eigen::MatrixXd at(data.n(), 2);
        at << logit_link.clip(t.mu0), logit_link.clip(t.mu1);
        nf.mu_at = at;
        nf.m_g = logit_link.eval(Eigen::VectorXd(at.col(1))).cwiseProduct(t.pi) +
                 logit_link.eval(Eigen::VectorXd(at.col(0))).cwiseProduct((1.0 - t.pi.array()).matrix());
        return estimate_main(data, logit_link, nf);
    }
    throw ConfigError("oracle_limit estimator must be one of mle, es, dr, proposal; got '" + id + "'");
}

}  // namespace

Target oracle_limit(const std::string& estimator_id, int exp_id, std::size_t n_large, int reps, std::uint64_t seed,
                    std::uint64_t sigma_seed, bool literal_exposure_link) {
    if (reps < 1) throw ConfigError("oracle_limit needs at least one replicate");
    Eigen::VectorXd est(reps);
    for (int r = 0; r < reps; ++r) {
        const Dataset data = dgp_main(exp_id, n_large, seed, sigma_seed, literal_exposure_link,
                                      static_cast<std::uint64_t>(r));
        est[r] = oracle_estimate(estimator_id, exp_id, data, literal_exposure_link).beta_hat;
    }
    Target t;
    t.value = est.mean();
    t.mc_se = reps > 1 ? sample_sd(est) / std::sqrt(static_cast<double>(reps)) : 0.0;
    t.source = "oracle_limit";
    return t;
}

EstimandKind parse_estimand_kind(const std::string& name) {
    if (name == "main") return EstimandKind::main;
    if (name == "inter_indep") return EstimandKind::inter_indep;
    if (name == "inter_proj") return EstimandKind::inter_proj;
    throw ConfigError("unknown estimand '" + name + "' (expected main, inter_indep or inter_proj)");
}

namespace {

std::vector<double> distinct_levels(const DiscreteDgp& dgp) {
    std::vector<double> levels;
    for (const auto& p : dgp.points) levels.push_back(p.l);
    std::sort(levels.begin(), levels.end());
    levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
    return levels;
}

}  // namespace

Eigen::VectorXd brute_force_projection(const DiscreteDgp& dgp, const Eigen::VectorXd& values) {
    dgp.validate();
    const auto k = static_cast<Eigen::Index>(dgp.points.size());
    if (values.size() != k) throw ConfigError("projection input must have one value per support point");
    // Indicator basis of the (A1, L) cells followed by the (A2, L) cells.
    std::vector<std::pair<double, double>> cells1, cells2;
    for (const auto& p : dgp.points) {
        cells1.emplace_back(p.a1, p.l);
        cells2.emplace_back(p.a2, p.l);
    }
    auto uniq = [](std::vector<std::pair<double, double>> v) {
        std::sort(v.begin(), v.end());
        v.erase(std::unique(v.begin(), v.end()), v.end());
        return v;
    };
    const auto u1 = uniq(cells1);
    const auto u2 = uniq(cells2);
    Eigen::MatrixXd basis = Eigen::MatrixXd::Zero(k, static_cast<Eigen::Index>(u1.size() + u2.size()));
    for (Eigen::Index i = 0; i < k; ++i) {
        const auto& p = dgp.points[static_cast<std::size_t>(i)];
        const auto c1 = std::lower_bound(u1.begin(), u1.end(), std::make_pair(p.a1, p.l)) - u1.begin();
        const auto c2 = std::lower_bound(u2.begin(), u2.end(), std::make_pair(p.a2, p.l)) - u2.begin();
        basis(i, c1) = 1.0;
        basis(i, static_cast<Eigen::Index>(u1.size()) + c2) = 1.0;
    }
    Eigen::VectorXd sw(k);
    for (Eigen::Index i = 0; i < k; ++i) sw[i] = std::sqrt(dgp.points[static_cast<std::size_t>(i)].prob);
    const Eigen::MatrixXd wb = sw.asDiagonal() * basis;
    const Eigen::VectorXd coef = wb.completeOrthogonalDecomposition().solve(sw.cwiseProduct(values));
    return values - basis * coef;
}

double brute_force_estimand(const DiscreteDgp& dgp, EstimandKind which, const Link& link) {
    dgp.validate();
    const auto k = dgp.points.size();
    Eigen::VectorXd gmu(static_cast<Eigen::Index>(k));
    for (std::size_t i = 0; i < k; ++i) gmu[static_cast<Eigen::Index>(i)] = link.eval(link.clip(dgp.points[i].mean_y));

    if (which == EstimandKind::main) {
        if (dgp.has_a2) throw ConfigError("the main-effect estimand needs a single-exposure support");
        double num = 0.0, den = 0.0;
        for (double lv : distinct_levels(dgp)) {
            double p = 0.0, ea = 0.0, eg = 0.0, eag = 0.0, eaa = 0.0;
            for (std::size_t i = 0; i < k; ++i) {
                const auto& pt = dgp.points[i];
                if (pt.l != lv) continue;
                const double g = gmu[static_cast<Eigen::Index>(i)];
                p += pt.prob;
                ea += pt.prob * pt.a1;
                eg += pt.prob * g;
                eag += pt.prob * pt.a1 * g;
                eaa += pt.prob * pt.a1 * pt.a1;
            }
            ea /= p;
            eg /= p;
            eag /= p;
            eaa /= p;
            num += p * (eag - ea * eg);
            den += p * (eaa - ea * ea);
        }
        if (!(den > 0.0)) throw EstimationError("estimand undefined: no conditional exposure variance");
        return num / den;
    }

    if (!dgp.has_a2) throw ConfigError("interaction estimands need two exposures");
    if (which == EstimandKind::inter_indep) {
        double num = 0.0, den = 0.0;
        for (double lv : distinct_levels(dgp)) {
            double p = 0.0, p1 = 0.0, p2 = 0.0;
            double mu[2][2];
            bool seen[2][2] = {{false, false}, {false, false}};
            for (std::size_t i = 0; i < k; ++i) {
                const auto& pt = dgp.points[i];
                if (pt.l != lv) continue;
                if ((pt.a1 != 0.0 && pt.a1 != 1.0) || (pt.a2 != 0.0 && pt.a2 != 1.0)) {
                    throw ConfigError("the independence interaction estimand needs binary exposures");
                }
                p += pt.prob;
                p1 += pt.prob * pt.a1;
                p2 += pt.prob * pt.a2;
                const int i1 = static_cast<int>(pt.a1), i2 = static_cast<int>(pt.a2);
                mu[i1][i2] = gmu[static_cast<Eigen::Index>(i)];
                seen[i1][i2] = true;
            }
            if (!(seen[0][0] && seen[0][1] && seen[1][0] && seen[1][1])) {
                throw ConfigError("every exposure combination must be present at each covariate level");
            }
            p1 /= p;
            p2 /= p;
            const double w = p1 * (1.0 - p1) * p2 * (1.0 - p2);
            num += p * w * (mu[1][1] + mu[0][0] - mu[1][0] - mu[0][1]);
            den += p * w;
        }
        if (!(den > 0.0)) throw EstimationError("estimand undefined: no interaction leverage");
        return num / den;
    }

    Eigen::VectorXd v(static_cast<Eigen::Index>(k)), prob(static_cast<Eigen::Index>(k));
    for (std::size_t i = 0; i < k; ++i) {
        v[static_cast<Eigen::Index>(i)] = dgp.points[i].a1 * dgp.points[i].a2;
        prob[static_cast<Eigen::Index>(i)] = dgp.points[i].prob;
    }
    const Eigen::VectorXd pv = brute_force_projection(dgp, v);
    const double den = (prob.array() * pv.array().square()).sum();
    const double scale = (prob.array() * v.array().square()).sum();
    if (!(den > 1e-14 * std::max(scale, 1e-300))) throw EstimationError("estimand undefined: no interaction leverage");
    return (prob.array() * pv.array() * gmu.array()).sum() / den;
}

Dataset population_dataset(const DiscreteDgp& dgp, const std::vector<std::size_t>& counts) {
    if (counts.size() != dgp.points.size()) throw ConfigError("need one count per support point");
    std::size_t n = 0;
    for (auto c : counts) n += c;
    const auto rows = static_cast<Eigen::Index>(n);
    Eigen::VectorXd y(rows), a1(rows), a2(rows);
    Eigen::MatrixXd l(rows, 1);
    Eigen::Index r = 0;
    for (std::size_t k = 0; k < counts.size(); ++k) {
        for (std::size_t c = 0; c < counts[k]; ++c, ++r) {
            y[r] = dgp.points[k].mean_y;
            a1[r] = dgp.points[k].a1;
            a2[r] = dgp.points[k].a2;
            l(r, 0) = dgp.points[k].l;
        }
    }
    return Dataset(std::move(y), std::move(a1), dgp.has_a2 ? std::optional<Eigen::VectorXd>(a2) : std::nullopt,
                   std::move(l), {"l"});
}

DiscreteDgp with_counts(const DiscreteDgp& dgp, const std::vector<std::size_t>& counts) {
    if (counts.size() != dgp.points.size()) throw ConfigError("need one count per support point");
    double n = 0.0;
    for (auto c : counts) n += static_cast<double>(c);
    DiscreteDgp out = dgp;
    for (std::size_t k = 0; k < counts.size(); ++k) out.points[k].prob = static_cast<double>(counts[k]) / n;
    return out;
}

// ---------------------------------------------------------------------------
// Study configuration

DiscreteDgp discrete_dgp_from_json(const nlohmann::json& j) {
    DiscreteDgp d;
    d.has_a2 = j.value("has_a2", false);
    const std::string noise = j.value("noise", std::string("gaussian"));
    if (noise == "gaussian") {
        d.noise = NoiseLaw::gaussian;
    } else if (noise == "bernoulli") {
        d.noise = NoiseLaw::bernoulli;
    } else {
        throw ConfigError("discrete noise must be gaussian or bernoulli");
    }
    d.noise_sd = j.value("noise_sd", 1.0);
    for (const auto& p : j.at("points")) {
        DiscretePoint pt;
        pt.a1 = p.at("a1").get<double>();
        pt.a2 = p.value("a2", 0.0);
        pt.l = p.at("l").get<double>();
        pt.prob = p.at("prob").get<double>();
        pt.mean_y = p.at("mean_y").get<double>();
        d.points.push_back(pt);
    }
    d.validate();
    return d;
}

nlohmann::json to_json(const DiscreteDgp& d) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : d.points) {
        pts.push_back({{"a1", p.a1}, {"a2", p.a2}, {"l", p.l}, {"prob", p.prob}, {"mean_y", p.mean_y}});
    }
    return {{"has_a2", d.has_a2},
            {"noise", d.noise == NoiseLaw::gaussian ? "gaussian" : "bernoulli"},
            {"noise_sd", d.noise_sd},
            {"points", pts}};
}

std::string to_string(EstimandKind k) {
    switch (k) {
        case EstimandKind::main: return "main";
        case EstimandKind::inter_indep: return "inter_indep";
        case EstimandKind::inter_proj: return "inter_proj";
    }
    return "main";
}

StudyConfig study_config_from_json(const nlohmann::json& j) {
    StudyConfig c;
    try {
        c.name = j.value("name", std::string("study"));
        const auto& d = j.at("dgp");
        c.dgp.family = parse_dgp_family(d.at("family").get<std::string>());
        c.dgp.sigma_seed = d.value("sigma_seed", kDefaultSigmaSeed);
        c.dgp.illustration_code_variant = d.value("illustration_code_variant", false);
        c.dgp.literal_exposure_link = d.value("literal_exposure_link", false);
        if (c.dgp.family == DgpFamily::custom_discrete) c.dgp.discrete = discrete_dgp_from_json(d.at("discrete"));
        c.estimators = j.at("estimators").get<std::vector<std::string>>();
        c.n_list = j.at("n_list").get<std::vector<std::size_t>>();
        c.reps = j.value("reps", c.reps);
        c.K = j.value("K", c.K);
        c.seed = j.value("seed", c.seed);
        c.dgp.seed = c.seed;
        c.link = parse_link_kind(j.value("link", std::string("identity")));
        LearnerSpec def;
        if (j.contains("learners")) {
            const auto& l = j.at("learners");
            if (l.contains("default")) def = learner_spec_from_json(l.at("default"));
            c.learner_a = l.contains("a") ? learner_spec_from_json(l.at("a")) : def;
            c.learner_y = l.contains("y") ? learner_spec_from_json(l.at("y")) : def;
            c.learner_mg = l.contains("mg") ? learner_spec_from_json(l.at("mg")) : def;
            c.learner_dr = l.contains("dr") ? learner_spec_from_json(l.at("dr")) : def;
            c.learner_e = l.contains("e") ? learner_spec_from_json(l.at("e")) : def;
        } else {
            c.learner_a = c.learner_y = c.learner_mg = c.learner_dr = c.learner_e = def;
        }
        if (j.contains("ace")) {
            c.ace.tol = j.at("ace").value("tol", c.ace.tol);
            c.ace.max_iter = j.at("ace").value("max_iter", c.ace.max_iter);
        }
        if (j.contains("oracle")) {
            c.oracle_n = j.at("oracle").value("n_large", c.oracle_n);
            c.oracle_reps = j.at("oracle").value("reps", c.oracle_reps);
            c.oracle_seed = j.at("oracle").value("seed", c.oracle_seed);
        }
        if (j.contains("targets")) {
            for (const auto& [key, val] : j.at("targets").items()) {
                Target t;
                if (val.is_number()) {
                    t.value = val.get<double>();
                    t.source = "config";
                } else {
                    t.value = val.at("value").get<double>();
                    t.source = val.value("source", std::string("config"));
                }
                c.target_overrides[key] = t;
            }
        }
        c.discrete_estimand = parse_estimand_kind(j.value("estimand", std::string("main")));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed study config: ") + e.what());
    }
    if (c.reps < 1) throw ConfigError("reps must be positive");
    if (c.n_list.empty()) throw ConfigError("n_list must not be empty");
    if (c.estimators.empty()) throw ConfigError("estimators must not be empty");
    if (!(c.ace.tol > 0.0) || c.ace.max_iter < 1) throw ConfigError("invalid ACE settings");
    return c;
}

nlohmann::json to_json(const StudyConfig& c) {
    nlohmann::json dgp{{"family", to_string(c.dgp.family)},
                       {"sigma_seed", c.dgp.sigma_seed},
                       {"illustration_code_variant", c.dgp.illustration_code_variant},
                       {"literal_exposure_link", c.dgp.literal_exposure_link}};
    if (c.dgp.family == DgpFamily::custom_discrete) dgp["discrete"] = to_json(c.dgp.discrete);
    nlohmann::json targets = nlohmann::json::object();
    for (const auto& [k, t] : c.target_overrides) targets[k] = {{"value", t.value}, {"source", t.source}};
    return {{"name", c.name},
            {"dgp", dgp},
            {"estimators", c.estimators},
            {"n_list", c.n_list},
            {"reps", c.reps},
            {"K", c.K},
            {"seed", c.seed},
            {"link", to_string(c.link)},
            {"learners",
             {{"a", to_json(c.learner_a)}, {"y", to_json(c.learner_y)}, {"mg", to_json(c.learner_mg)},
              {"dr", to_json(c.learner_dr)}, {"e", to_json(c.learner_e)}}},
            {"ace", {{"tol", c.ace.tol}, {"max_iter", c.ace.max_iter}}},
            {"oracle", {{"n_large", c.oracle_n}, {"reps", c.oracle_reps}, {"seed", c.oracle_seed}}},
            {"targets", targets},
            {"estimand", to_string(c.discrete_estimand)}};
}

const EstimatorSummary& SimResult::find(const std::string& estimator, std::size_t n) const {
    for (const auto& r : rows) {
        if (r.estimator == estimator && r.n == n) return r;
    }
    throw ConfigError("no study row for estimator '" + estimator + "' at n = " + std::to_string(n));
}

void summarize(EstimatorSummary& row) {
    const auto m = row.estimates.size();
    const int attempted = static_cast<int>(m) + row.failures;
    row.failure_flag = attempted > 0 && row.failures > 0.05 * attempted;
    if (m == 0) {
        row.bias = row.emp_sd = row.mean_se = row.coverage_pct = std::nan("");
        return;
    }
    const Eigen::Map<const Eigen::VectorXd> est(row.estimates.data(), static_cast<Eigen::Index>(m));
    const Eigen::Map<const Eigen::VectorXd> se(row.ses.data(), static_cast<Eigen::Index>(m));
    row.bias = est.mean() - row.target.value;
    row.emp_sd = sample_sd(est);
    row.mean_se = se.mean();
    std::size_t covered = 0;
    for (std::size_t i = 0; i < m; ++i) {
        if (std::abs(row.estimates[i] - row.target.value) <= kZ975 * row.ses[i]) ++covered;
    }
    row.coverage_pct = 100.0 * static_cast<double>(covered) / static_cast<double>(m);
}

namespace {

Target default_target(const StudyConfig& c, const std::string& estimator) {
    if (auto it = c.target_overrides.find(estimator); it != c.target_overrides.end()) return it->second;
    Target t;
    switch (c.dgp.family) {
        case DgpFamily::illustration:
            t.value = illustration_truth(c.dgp.illustration_code_variant);
            t.source = "quadrature";
            return t;
        case DgpFamily::main_exp1:
            t.value = 0.3;
            t.source = "dgp";
            return t;
        case DgpFamily::main_exp2:
        case DgpFamily::main_exp3:
        case DgpFamily::main_exp4:
            return oracle_limit(estimator, experiment_id(c.dgp.family), c.oracle_n, c.oracle_reps, c.oracle_seed,
                                c.dgp.sigma_seed, c.dgp.literal_exposure_link);
        case DgpFamily::inter_exp1:
        case DgpFamily::inter_exp2:
            t.value = 0.0;
            t.source = "dgp";
            return t;
        case DgpFamily::inter_exp3:
            t.value = 5.0;
            t.source = "dgp";
            return t;
        case DgpFamily::custom_discrete:
            t.value = brute_force_estimand(c.dgp.discrete, c.discrete_estimand, Link(c.link));
            t.source = "brute_force";
            return t;
    }
    throw ConfigError("no default target");
}

LearnerSpec rep_spec(const LearnerSpec& s, std::size_t n, int rep) {
    return with_seed(with_seed(s, "n", n), "rep", static_cast<std::uint64_t>(rep));
}

// Runs all requested estimators on one replicate. Returns one optional report
// per estimator (nullopt when the estimator failed on this replicate).
std::vector<std::optional<EstimateReport>> run_replicate(const StudyConfig& c, const Dataset& data, int rep) {
    const std::size_t n = data.n();
    const Link link(c.link);
    const FoldPlan plan = make_folds(n, c.K, derive_seed(c.seed, "folds", static_cast<std::uint64_t>(rep)));
    const LearnerSpec sa = rep_spec(c.learner_a, n, rep);
    const LearnerSpec sy = rep_spec(c.learner_y, n, rep);
    const LearnerSpec smg = rep_spec(c.learner_mg, n, rep);
    const LearnerSpec sdr = rep_spec(c.learner_dr, n, rep);
    const LearnerSpec se = rep_spec(c.learner_e, n, rep);

    std::optional<NuisanceFit> main_nuis;
    auto get_main = [&]() -> const NuisanceFit& {
        if (!main_nuis) main_nuis = nuisance_main(data, link, sa, sy, smg, plan);
        return *main_nuis;
    };

    std::vector<std::optional<EstimateReport>> out;
    for (const auto& id : c.estimators) {
        try {
            if (id == "mle") {
                out.emplace_back(mle_report(data, link));
            } else if (id == "ols") {
                out.emplace_back(data.has_a2() ? ols_interaction_report(data) : mle_report(data, Link(LinkKind::identity)));
            } else if (id == "proposal") {
                if (data.has_a2()) {
                    out.emplace_back(estimate_interaction_proj(data, link, sy, plan, c.ace));
                } else {
                    out.emplace_back(estimate_main(data, link, get_main()));
                }
            } else if (id == "proposal_indep") {
                out.emplace_back(estimate_interaction_indep(data, link, nuisance_interaction(data, link, sy, plan)));
            } else if (id == "e_estimator") {
                Eigen::VectorXd e = crossfit_predict(data.l(), data.a1(), with_seed(se, "e_a", 0), plan);
                if (data.a1_binary()) e = e.unaryExpr([&](double p) { return clip_prob(p, link.clip_eps()); });
                const Eigen::VectorXd omega0 = partially_linear_omega0(data, with_seed(se, "omega0", 0), plan);
                out.emplace_back(e_estimator(data, e, omega0));
            } else if (id == "es") {
                const NuisanceFit& nf = get_main();
                if (!nf.mu_at) throw ConfigError("es needs a binary exposure");
                out.emplace_back(es_estimator(data, *nf.mu_at, nf.e_a1, link.clip_eps()));
            } else if (id == "dr") {
                const NuisanceFit& nf = get_main();
                if (!nf.mu_at) throw ConfigError("dr needs a binary exposure");
                const Eigen::MatrixXd x_yl = prepend_column(data.y(), data.l());
                Eigen::MatrixXd x_y0 = x_yl;
                x_y0.col(0).setZero();
                Eigen::VectorXd e_y0 = crossfit_predict_at(x_yl, data.a1(), with_seed(sdr, "e_a_y", 0), plan, {x_y0})[0];
                e_y0 = e_y0.unaryExpr([&](double p) { return clip_prob(p, link.clip_eps()); });
                out.emplace_back(dr_estimator(data, e_y0, Eigen::VectorXd(nf.mu_at->col(0))));
            } else {
                throw ConfigError("unknown estimator '" + id + "'");
            }
        } catch (const EstimationError&) {
            out.emplace_back(std::nullopt);
        } catch (const DomainError&) {
            out.emplace_back(std::nullopt);
        }
    }
    return out;
}

}  // namespace

SimResult run_study(const StudyConfig& c, unsigned threads, std::ostream* progress) {
    SimResult res;
    res.name = c.name;
    res.reps = c.reps;
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = std::min<unsigned>(threads, static_cast<unsigned>(c.reps));
    std::vector<Target> targets;
    for (const auto& id : c.estimators) targets.push_back(default_target(c, id));
    for (std::size_t n : c.n_list) {
        DgpSpec spec = c.dgp;
        spec.n = n;
        // Replicate streams are keyed by (seed, n, rep) so each sample size
        // gets independent data.
        spec.seed = derive_seed(c.seed, "study_n", n);
        std::vector<std::vector<std::optional<EstimateReport>>> per_rep(static_cast<std::size_t>(c.reps));
        std::atomic<int> next{0};
        std::exception_ptr failure;
        std::mutex failure_mutex;
        auto worker = [&]() {
            for (int rep = next++; rep < c.reps; rep = next++) {
                try {
                    const Dataset data = generate(spec, static_cast<std::uint64_t>(rep));
                    per_rep[static_cast<std::size_t>(rep)] = run_replicate(c, data, rep);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                    next = c.reps;
                }
            }
        };
        if (threads <= 1) {
            worker();
        } else {
            std::vector<std::thread> pool;
            for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
            for (auto& th : pool) th.join();
        }
        if (failure) std::rethrow_exception(failure);

        std::vector<EstimatorSummary> rows(c.estimators.size());
        for (std::size_t e = 0; e < rows.size(); ++e) {
            rows[e].estimator = c.estimators[e];
            rows[e].n = n;
            rows[e].target = targets[e];
            for (const auto& reports : per_rep) {
                if (reports[e]) {
                    rows[e].estimates.push_back(reports[e]->beta_hat);
                    rows[e].ses.push_back(reports[e]->se);
                } else {
                    ++rows[e].failures;
                }
            }
            summarize(rows[e]);
        }
        if (progress) *progress << c.name << ": finished n = " << n << " (" << c.reps << " replicates)\n";
        for (auto& r : rows) res.rows.push_back(std::move(r));
    }
    return res;
}

void write_summary_csv(const SimResult& result, std::ostream& out) {
    out << "study,estimator,n,reps,failures,target,target_source,bias,emp_sd,mean_se,coverage,failure_flag\n";
    char buf[512];
    for (const auto& r : result.rows) {
        std::snprintf(buf, sizeof buf, "%s,%s,%zu,%d,%d,%.10g,%s,%.10g,%.10g,%.10g,%.4g,%d\n", result.name.c_str(),
                      r.estimator.c_str(), r.n, result.reps, r.failures, r.target.value, r.target.source.c_str(),
                      r.bias, r.emp_sd, r.mean_se, r.coverage_pct, r.failure_flag ? 1 : 0);
        out << buf;
    }
}

void write_replicates_csv(const SimResult& result, std::ostream& out) {
    out << "study,estimator,n,index,estimate,se\n";
    char buf[256];
    for (const auto& r : result.rows) {
        for (std::size_t i = 0; i < r.estimates.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%s,%s,%zu,%zu,%.17g,%.17g\n", result.name.c_str(), r.estimator.c_str(),
                          r.n, i, r.estimates[i], r.ses[i]);
            out << buf;
        }
    }
}

namespace {

std::ofstream open_output(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IngestionError("cannot open '" + path + "' for writing");
    return out;
}

}  // namespace

void write_summary_csv(const SimResult& result, const std::string& path) {
    auto out = open_output(path);
    write_summary_csv(result, out);
}

void write_replicates_csv(const SimResult& result, const std::string& path) {
    auto out = open_output(path);
    write_replicates_csv(result, out);
}

}  // namespace alglm
