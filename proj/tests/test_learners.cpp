#include <cmath>

#include <gtest/gtest.h>

#include "alglm/errors.hpp"
#include "alglm/learners.hpp"
#include "alglm/link.hpp"
#include "alglm/rng.hpp"
#include "test_util.hpp"

using namespace alglm;

namespace {

LearnerSpec forest_spec(int n_trees, int min_leaf = 5, std::uint64_t seed = 11) {
    LearnerSpec s;
    s.kind = LearnerKind::forest;
    s.n_trees = n_trees;
    s.min_leaf = min_leaf;
    s.seed = seed;
    return s;
}

Eigen::MatrixXd uniform_column(int m, double lo, double hi, RngStream& rng) {
    Eigen::MatrixXd x(m, 1);
    for (int i = 0; i < m; ++i) x(i, 0) = rng.uniform(lo, hi);
    return x;
}

}  // namespace

TEST(Ridge, NearZeroPenaltyInterpolatesLinearTruth) {
    RngStream rng(1, "ridge");
    const Eigen::MatrixXd x = testutil::normal_matrix(40, 2, rng);
    const Eigen::VectorXd t = (2.0 * x.col(0)).array() + 1.0;
    LearnerSpec s;
    s.kind = LearnerKind::ridge_linear;
    s.lambda = 1e-14;
    const Eigen::VectorXd pred = fit_learner(s, x, t).predict(x);
    EXPECT_LT((pred - t).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Ridge, DuplicatedRowsGiveDuplicatedPredictions) {
    RngStream rng(2, "ridge");
    const Eigen::MatrixXd x = testutil::normal_matrix(30, 3, rng);
    const Eigen::VectorXd t = testutil::normal_matrix(30, 1, rng).col(0);
    LearnerSpec s;
    s.kind = LearnerKind::ridge_linear;
    const Predictor p = fit_learner(s, x, t);
    Eigen::MatrixXd q(2, 3);
    q.row(0) = x.row(4);
    q.row(1) = x.row(4);
    const Eigen::VectorXd pred = p.predict(q);
    EXPECT_EQ(pred[0], pred[1]);
}

TEST(Ridge, LogisticRejectsTargetsOutsideUnitInterval) {
    RngStream rng(3, "ridge");
    const Eigen::MatrixXd x = testutil::normal_matrix(20, 1, rng);
    LearnerSpec s;
    s.kind = LearnerKind::ridge_logistic;
    Eigen::VectorXd t = Eigen::VectorXd::Zero(20);
    t[3] = 2.0;
    EXPECT_THROW(fit_learner(s, x, t), ConfigError);
}

TEST(Ridge, LogisticPredictionsAreProbabilities) {
    RngStream rng(4, "ridge");
    const Eigen::MatrixXd x = testutil::normal_matrix(200, 2, rng);
    Eigen::VectorXd t(200);
    for (int i = 0; i < 200; ++i) t[i] = rng.bernoulli(expit(x(i, 0))) ? 1.0 : 0.0;
    LearnerSpec s;
    s.kind = LearnerKind::ridge_logistic;
    const Eigen::VectorXd pred = fit_learner(s, x, t).predict(x);
    EXPECT_GT(pred.minCoeff(), 0.0);
    EXPECT_LT(pred.maxCoeff(), 1.0);
}

TEST(Kernel, ConstantTarget) {
    RngStream rng(5, "kernel");
    const Eigen::MatrixXd x = testutil::normal_matrix(25, 2, rng);
    LearnerSpec s;
    s.kind = LearnerKind::kernel;
    const Predictor p = fit_learner(s, x, Eigen::VectorXd::Constant(25, 5.0));
    const Eigen::VectorXd pred = p.predict(testutil::normal_matrix(10, 2, rng));
    for (Eigen::Index i = 0; i < pred.size(); ++i) EXPECT_EQ(pred[i], 5.0);
}

TEST(Kernel, RecoversSmoothFunction) {
    RngStream rng(6, "kernel");
    const Eigen::MatrixXd x = uniform_column(500, -2.0, 2.0, rng);
    Eigen::VectorXd t(500);
    for (int i = 0; i < 500; ++i) t[i] = std::sin(x(i, 0)) + 0.2 * rng.normal();
    LearnerSpec s;
    s.kind = LearnerKind::kernel;
    const Predictor p = fit_learner(s, x, t);
    const Eigen::MatrixXd xt = uniform_column(200, -1.8, 1.8, rng);
    const Eigen::VectorXd pred = p.predict(xt);
    const double rmse = std::sqrt((pred - xt.col(0).array().sin().matrix()).squaredNorm() / 200.0);
    EXPECT_LT(rmse, 0.1);
}

TEST(Forest, SquareFunctionOutOfSample) {
    RngStream rng(7, "forest");
    const Eigen::MatrixXd x = uniform_column(2000, -2.0, 2.0, rng);
    const Eigen::VectorXd t = x.col(0).array().square();
    const Predictor p = fit_learner(forest_spec(500), x, t);
    const Eigen::MatrixXd xt = uniform_column(1000, -2.0, 2.0, rng);
    const Eigen::VectorXd truth = xt.col(0).array().square();
    const double rmse = std::sqrt((p.predict(xt) - truth).squaredNorm() / 1000.0);
    EXPECT_LT(rmse, 0.15);
}

TEST(Forest, NearInterpolationWithFullSampleAndSingletonLeaves) {
    RngStream rng(8, "forest");
    const Eigen::MatrixXd x = testutil::normal_matrix(300, 2, rng);
    Eigen::VectorXd t(300);
    for (int i = 0; i < 300; ++i) t[i] = x(i, 0) + std::cos(x(i, 1)) + 0.5 * rng.normal();
    LearnerSpec s = forest_spec(300, 1);
    s.bootstrap_fraction = 1.0;
    s.mtry = 2;
    const Eigen::VectorXd pred = fit_learner(s, x, t).predict(x);
    const double sd = std::sqrt((t.array() - t.mean()).square().sum() / 299.0);
    EXPECT_LT(std::sqrt((pred - t).squaredNorm() / 300.0), 0.05 * sd);
}

TEST(Forest, PredictionsWithinTargetRangeAndDeterministic) {
    RngStream rng(9, "forest");
    const Eigen::MatrixXd x = testutil::normal_matrix(200, 3, rng);
    Eigen::VectorXd t(200);
    for (int i = 0; i < 200; ++i) t[i] = std::exp(x(i, 0)) + rng.normal();
    const Predictor p1 = fit_learner(forest_spec(50), x, t);
    const Predictor p2 = fit_learner(forest_spec(50), x, t);
    const Eigen::MatrixXd xt = 3.0 * testutil::normal_matrix(100, 3, rng);
    const Eigen::VectorXd a = p1.predict(xt);
    EXPECT_EQ(a, p2.predict(xt));
    EXPECT_GE(a.minCoeff(), t.minCoeff());
    EXPECT_LE(a.maxCoeff(), t.maxCoeff());
    EXPECT_NE(a, fit_learner(forest_spec(50, 5, 12), x, t).predict(xt));
}

TEST(Kernel, PredictionsWithinTargetRange) {
    RngStream rng(10, "kernel");
    const Eigen::MatrixXd x = testutil::normal_matrix(150, 2, rng);
    Eigen::VectorXd t(150);
    for (int i = 0; i < 150; ++i) t[i] = x(i, 0) * x(i, 1) + rng.normal();
    LearnerSpec s;
    s.kind = LearnerKind::kernel;
    const Eigen::VectorXd pred = fit_learner(s, x, t).predict(4.0 * testutil::normal_matrix(300, 2, rng));
    EXPECT_GE(pred.minCoeff(), t.minCoeff());
    EXPECT_LE(pred.maxCoeff(), t.maxCoeff());
}

TEST(Forest, OutOfBagPredictionsAvailable) {
    RngStream rng(11, "forest");
    const Eigen::MatrixXd x = testutil::normal_matrix(120, 2, rng);
    const Eigen::VectorXd t = x.col(0);
    const Predictor p = fit_learner(forest_spec(100), x, t);
    ASSERT_TRUE(p.oob_predictions().has_value());
    EXPECT_EQ(p.oob_predictions()->size(), 120);
    EXPECT_TRUE(p.oob_predictions()->allFinite());
}

TEST(Learner, ConstantTargetGivesConstantPredictor) {
    RngStream rng(12, "const");
    const Eigen::MatrixXd x = testutil::normal_matrix(15, 2, rng);
    for (auto kind : {LearnerKind::forest, LearnerKind::kernel, LearnerKind::ridge_linear}) {
        LearnerSpec s;
        s.kind = kind;
        s.n_trees = 10;
        const Eigen::VectorXd pred = fit_learner(s, x, Eigen::VectorXd::Constant(15, -1.5)).predict(x);
        EXPECT_TRUE((pred.array() == -1.5).all()) << to_string(kind);
    }
}

TEST(Learner, Errors) {
    RngStream rng(13, "err");
    LearnerSpec s;
    s.kind = LearnerKind::ridge_linear;
    EXPECT_THROW(fit_learner(s, testutil::normal_matrix(9, 1, rng), Eigen::VectorXd::Zero(9)), ConfigError);
    const Predictor p = fit_learner(s, testutil::normal_matrix(20, 2, rng), testutil::normal_matrix(20, 1, rng).col(0));
    EXPECT_THROW(p.predict(Eigen::MatrixXd::Zero(3, 1)), ConfigError);
    LearnerSpec bad;
    bad.n_trees = 0;
    EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Learner, SpecJsonRoundTrip) {
    LearnerSpec s;
    s.kind = LearnerKind::kernel;
    s.bandwidth = 0.7;
    s.cv_folds = 4;
    s.seed = 99;
    const LearnerSpec r = learner_spec_from_json(to_json(s));
    EXPECT_EQ(to_json(r), to_json(s));
    EXPECT_THROW(learner_spec_from_json(nlohmann::json{{"kind", "boosting"}}), ConfigError);
}

TEST(Tuning, TiesPreferLaterGridEntry) {
    Eigen::VectorXd scores(4);
    scores << 3.0, 1.0, 2.0, 1.0;
    EXPECT_EQ(argmin_prefer_last(scores), 3u);
    scores << 3.0, 1.0, 2.0, 1.5;
    EXPECT_EQ(argmin_prefer_last(scores), 1u);
}

TEST(Tuning, GridsAreIncreasingWithTwentyPoints) {
    const Eigen::VectorXd r = ridge_lambda_grid();
    ASSERT_EQ(r.size(), 20);
    EXPECT_NEAR(r[0], 1e-4, 1e-16);
    EXPECT_NEAR(r[19], 1e2, 1e-10);
    const Eigen::VectorXd k = kernel_bandwidth_grid(200, 2);
    ASSERT_EQ(k.size(), 20);
    for (int i = 1; i < 20; ++i) {
        EXPECT_GT(r[i], r[i - 1]);
        EXPECT_GT(k[i], k[i - 1]);
    }
}

TEST(HeldOut, KernelHeldOutDiffersFromInSample) {
    RngStream rng(14, "held");
    const Eigen::MatrixXd x = testutil::normal_matrix(60, 1, rng);
    const Eigen::VectorXd t = testutil::normal_matrix(60, 1, rng).col(0);
    LearnerSpec s;
    s.kind = LearnerKind::kernel;
    s.bandwidth = 0.002;
    const Eigen::VectorXd held = fit_predict_held_out(s, x, t);
    const Eigen::VectorXd in = fit_learner(s, x, t).predict(x);
    // A narrow bandwidth nearly reproduces each training target in sample but
    // not out of sample.
    EXPECT_LT((in - t).norm(), 0.5 * (held - t).norm());
}
