#pragma once

#include <cstdint>
#include <map>
#include <ostream>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "alglm/dataset.hpp"
#include "alglm/interaction.hpp"
#include "alglm/learners.hpp"
#include "alglm/link.hpp"
#include "json.hpp"

namespace alglm {

enum class DgpFamily {
    illustration,
    main_exp1,
    main_exp2,
    main_exp3,
    main_exp4,
    inter_exp1,
    inter_exp2,
    inter_exp3,
    custom_discrete,
};

std::string to_string(DgpFamily family);
DgpFamily parse_dgp_family(const std::string& name);
bool is_main_family(DgpFamily family);
bool is_interaction_family(DgpFamily family);
int experiment_id(DgpFamily family);

// One support point of a finite joint law of (A1, A2, L) with the tabulated
// conditional mean of Y. L is a scalar level.
struct DiscretePoint {
    double a1 = 0.0;
    double a2 = 0.0;
    double l = 0.0;
    double prob = 0.0;
    double mean_y = 0.0;
};

enum class NoiseLaw { gaussian, bernoulli };

struct DiscreteDgp {
    std::vector<DiscretePoint> points;
    bool has_a2 = false;
    NoiseLaw noise = NoiseLaw::gaussian;
    double noise_sd = 1.0;

    // Throws ConfigError unless probabilities are positive and sum to 1.
    void validate() const;
};

// JSON form: {"has_a2", "noise": "gaussian"|"bernoulli", "noise_sd",
// "points": [{"a1", "a2", "l", "prob", "mean_y"}, ...]}.
DiscreteDgp discrete_dgp_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DiscreteDgp& dgp);

// Default seed for the random covariance, found with tools/sigma_search: it
// gives corr(L3, L6) = -0.542 and a large-sample OLS interaction coefficient of
// about -2.93 in interaction experiment 2.
inline constexpr std::uint64_t kDefaultSigmaSeed = 3992056;

struct DgpSpec {
    DgpFamily family = DgpFamily::main_exp1;
    std::size_t n = 1000;
    std::uint64_t seed = 1;
    std::uint64_t sigma_seed = kDefaultSigmaSeed;
    // Illustration: draw L ~ N(1, 1) instead of N(0, 1).
    bool illustration_code_variant = false;
    // Main/interaction exposure: use the Bernoulli mean gamma'L - 0.15 L1^2
    // clipped into [1e-6, 1 - 1e-6] instead of passing it through expit.
    bool literal_exposure_link = false;
    DiscreteDgp discrete;
};

// Random 10 x 10 (or d x d) covariance: random orthogonal eigenvectors and
// eigenvalues, converted to a correlation matrix, shrunk toward the identity
// until max |correlation| <= max_corr, then scaled by variances U(2, 10).
Eigen::MatrixXd make_sigma(std::uint64_t sigma_seed, int d = 10, double max_corr = 0.6);

Dataset dgp_illustration(std::size_t n, std::uint64_t seed, bool code_variant = false, std::uint64_t replicate = 0);
Dataset dgp_main(int exp_id, std::size_t n, std::uint64_t seed, std::uint64_t sigma_seed,
                 bool literal_exposure_link = false, std::uint64_t replicate = 0,
                 std::size_t* clip_count = nullptr);
// A1 = A, A2 = L3, covariates are the remaining nine columns of L.
Dataset dgp_interaction(int exp_id, std::size_t n, std::uint64_t seed, std::uint64_t sigma_seed,
                        bool literal_exposure_link = false, std::uint64_t replicate = 0);
Dataset dgp_discrete(const DiscreteDgp& dgp, std::size_t n, std::uint64_t seed, std::uint64_t replicate = 0);
Dataset generate(const DgpSpec& spec, std::uint64_t replicate = 0);

// Exposure probability shared by the main and interaction experiments.
Eigen::VectorXd main_propensity(const Eigen::MatrixXd& l, bool literal_exposure_link = false,
                                std::size_t* clip_count = nullptr);
// Linear predictor of the outcome in main experiment exp_id at exposure a.
Eigen::VectorXd main_outcome_eta(int exp_id, const Eigen::MatrixXd& l, const Eigen::VectorXd& a);

// True nuisances of the main experiments evaluated at a dataset's covariates.
struct MainTruth {
    Eigen::VectorXd pi;   // P(A = 1 | L)
    Eigen::VectorXd mu0;  // P(Y = 1 | A = 0, L)
    Eigen::VectorXd mu1;  // P(Y = 1 | A = 1, L)
};
MainTruth main_truth(int exp_id, const Eigen::MatrixXd& l, bool literal_exposure_link = false);

// Target of the illustration (variance-weighted effect under the true law) by
// quadrature over the covariate distribution.
double illustration_truth(bool code_variant = false);

struct Target {
    double value = 0.0;
    std::string source;  // dgp, quadrature, oracle_limit, brute_force, config
    double mc_se = 0.0;
};

// Mean estimate over reps datasets of size n_large when the estimator is fed
// the true nuisances (the MLE needs none).
Target oracle_limit(const std::string& estimator_id, int exp_id, std::size_t n_large, int reps,
                    std::uint64_t seed, std::uint64_t sigma_seed, bool literal_exposure_link = false);

enum class EstimandKind { main, inter_indep, inter_proj };
std::string to_string(EstimandKind kind);
EstimandKind parse_estimand_kind(const std::string& name);

// Exact value of an estimand on a finite support.
double brute_force_estimand(const DiscreteDgp& dgp, EstimandKind which, const Link& link);

// Population projection onto the complement of {d1(A1, L) + d2(A2, L)} on a
// finite support, for an arbitrary function given by its values on the points.
Eigen::VectorXd brute_force_projection(const DiscreteDgp& dgp, const Eigen::VectorXd& values);

// Dataset replicating support point k counts[k] times with y equal to the
// tabulated conditional mean, so sample moments equal population moments.
Dataset population_dataset(const DiscreteDgp& dgp, const std::vector<std::size_t>& counts);

// pmf given by integer counts over the same support.
DiscreteDgp with_counts(const DiscreteDgp& dgp, const std::vector<std::size_t>& counts);

struct StudyConfig {
    std::string name;
    DgpSpec dgp;
    std::vector<std::string> estimators;
    std::vector<std::size_t> n_list;
    int reps = 100;
    int K = 10;
    std::uint64_t seed = 1;
    LinkKind link = LinkKind::identity;
    LearnerSpec learner_a;
    LearnerSpec learner_y;
    LearnerSpec learner_mg;
    LearnerSpec learner_dr;
    // Nuisances of the E-estimator (propensity and partially linear omega0).
    LearnerSpec learner_e;
    AceOptions ace;
    // Oracle settings for targets that need oracle_limit.
    std::size_t oracle_n = 50000;
    int oracle_reps = 100;
    std::uint64_t oracle_seed = 20240101;
    std::map<std::string, Target> target_overrides;
    // Estimand for custom-discrete targets.
    EstimandKind discrete_estimand = EstimandKind::main;
};

StudyConfig study_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const StudyConfig& config);

struct EstimatorSummary {
    std::string estimator;
    std::size_t n = 0;
    Target target;
    std::vector<double> estimates;
    std::vector<double> ses;
    int failures = 0;
    double bias = 0.0;
    double emp_sd = 0.0;
    double mean_se = 0.0;
    double coverage_pct = 0.0;
    bool failure_flag = false;  // failure rate above 5%
};

struct SimResult {
    std::string name;
    int reps = 0;
    std::vector<EstimatorSummary> rows;  // ordered by n, then estimator list order

    const EstimatorSummary& find(const std::string& estimator, std::size_t n) const;
};

// Summary statistics of a finished set of replicate estimates.
void summarize(EstimatorSummary& row);

// Runs every (n, replicate) cell. Replicates are spread over `threads` worker
// threads (0 means one per hardware core); results are aggregated in replicate
// order, so output does not depend on the thread count. When `progress` is
// set, one line per finished sample size is written to it.
SimResult run_study(const StudyConfig& config, unsigned threads = 1, std::ostream* progress = nullptr);

// One row per estimator and sample size: bias, empirical SD, mean SE and
// coverage (percent), plus failure counts.
void write_summary_csv(const SimResult& result, std::ostream& out);
void write_summary_csv(const SimResult& result, const std::string& path);
// One row per successful replicate estimate.
void write_replicates_csv(const SimResult& result, std::ostream& out);
void write_replicates_csv(const SimResult& result, const std::string& path);

}  // namespace alglm
